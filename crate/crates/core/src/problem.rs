//! Time-indexed objective sequences: the moving-target tracking problems and
//! a static quadratic used for oracle checks.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Constants the bound evaluators need from a problem: smoothness L, gradient
/// bound B_g over the state box, and the declared state bound B_X.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    pub smoothness: f64,
    pub grad_bound: f64,
    pub state_bound: f64,
}

/// A sequence of local objectives f_{i,t} for agents i and rounds t in
/// [1, horizon]. Values and gradients are additionally defined at
/// t = horizon + 1 (one lookahead round) for bound evaluation.
pub trait ProblemSeq: Send + Sync {
    fn label(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn agents(&self) -> usize;
    fn horizon(&self) -> usize;

    fn local_value(&self, i: usize, t: usize, x: ArrayView1<f64>) -> f64;
    fn local_grad(&self, i: usize, t: usize, x: ArrayView1<f64>) -> Array1<f64>;

    /// Global objective f_t = sum_i f_{i,t}.
    fn global_value(&self, t: usize, x: ArrayView1<f64>) -> f64 {
        (0..self.agents()).map(|i| self.local_value(i, t, x)).sum()
    }

    fn global_grad(&self, t: usize, x: ArrayView1<f64>) -> Array1<f64> {
        let mut g = Array1::zeros(self.dim());
        for i in 0..self.agents() {
            g += &self.local_grad(i, t, x);
        }
        g
    }

    /// Per-round global minimizer (or reference stationary point).
    fn minimizer(&self, t: usize) -> Result<Array1<f64>>;

    /// Coordinate the agent's loss depends on, when the problem is an
    /// observation problem; noise then enters along this axis.
    fn observation_axis(&self, _i: usize) -> Option<usize> {
        None
    }

    fn constants(&self) -> ProblemConstants;

    /// sup over the state box of |f_t - f_{t-1}|, t >= 2.
    fn variation_increment(&self, t: usize) -> f64;
}

/// Moving target trajectory x*_0..=x*_T (plus one lookahead point used by
/// bound evaluation): x*_{t} = x*_{t-1} + omega + v_t with deterministic
/// drift v_t = -10 (1/T, sqrt(t/T) - sqrt((t-1)/T)) and optional Gaussian
/// process noise of per-coordinate variance (1/T)^2.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingTarget {
    positions: Vec<[f64; 2]>,
    horizon: usize,
}

/// Generate the target trajectory; with `noise_on = false` the process noise
/// is identically zero and x*_T telescopes to the origin.
pub fn target_trajectory(horizon: usize, noise_on: bool, streams: &StreamKey) -> TrackingTarget {
    assert!(horizon >= 1);
    let t_f = horizon as f64;
    let mut positions = Vec::with_capacity(horizon + 2);
    positions.push([10.0, 10.0]);
    for s in 1..=horizon + 1 {
        let prev = positions[s - 1];
        let drift = [
            -10.0 / t_f,
            -10.0 * ((s as f64 / t_f).sqrt() - ((s - 1) as f64 / t_f).sqrt()),
        ];
        let noise = if noise_on {
            let mut rng = streams.target(s);
            let std = 1.0 / t_f;
            [
                std * rng.sample::<f64, _>(StandardNormal),
                std * rng.sample::<f64, _>(StandardNormal),
            ]
        } else {
            [0.0, 0.0]
        };
        positions.push([
            prev[0] + drift[0] + noise[0],
            prev[1] + drift[1] + noise[1],
        ]);
    }
    TrackingTarget { positions, horizon }
}

impl TrackingTarget {
    /// Build from explicit positions covering t = 0..=len-1; the final point
    /// serves as the lookahead round, so horizon = len - 2.
    pub fn from_positions(positions: Vec<[f64; 2]>) -> Self {
        assert!(positions.len() >= 3, "need at least rounds 0, 1 and a lookahead");
        let horizon = positions.len() - 2;
        Self { positions, horizon }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Target position at round t, 0 <= t <= horizon + 1.
    pub fn position(&self, t: usize) -> [f64; 2] {
        self.positions[t]
    }

    /// All round positions x*_1..=x*_T as vectors (the comparator sequence).
    pub fn round_positions(&self) -> Vec<Array1<f64>> {
        (1..=self.horizon)
            .map(|t| Array1::from_vec(self.positions[t].to_vec()))
            .collect()
    }

    /// Largest absolute coordinate over the whole trajectory.
    pub fn max_abs_coordinate(&self) -> f64 {
        self.positions
            .iter()
            .flat_map(|p| p.iter())
            .fold(0.0, |m, &v| m.max(v.abs()))
    }
}

/// Which coordinate each agent observes: agents alternate between the two
/// axes (odd agent labels observe the first coordinate, even the second).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservationMap {
    agents: usize,
}

impl ObservationMap {
    pub fn new(agents: usize) -> Self {
        Self { agents }
    }

    /// 0-based coordinate observed by 0-based agent i.
    pub fn axis(&self, i: usize) -> usize {
        debug_assert!(i < self.agents);
        i % 2
    }

    /// True iff every coordinate in {0, 1} has at least one observer.
    pub fn covers_both(&self) -> bool {
        self.agents >= 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TrackingLoss {
    Quadratic,
    Quartic,
}

/// Tracking problem over a 2-D moving target: each agent sees one coordinate.
///
/// Quadratic loss: scale * (z - u)^2 per agent (default scale 1/2, making the
/// local gradient exactly (u - z) along the observation axis). Quartic loss:
/// scale * (z^2 - u^2)^2 (default scale 1/4, gradient -(z^2 - u^2) u).
#[derive(Debug, Clone)]
pub struct TrackingProblem {
    target: TrackingTarget,
    obs: ObservationMap,
    agents: usize,
    loss: TrackingLoss,
    scale: f64,
    state_bound: f64,
}

pub const DEFAULT_QUADRATIC_SCALE: f64 = 0.5;
pub const DEFAULT_QUARTIC_SCALE: f64 = 0.25;

/// Grid resolution per axis for the quartic variation supremum.
const VARIATION_GRID_POINTS: usize = 201;

impl TrackingProblem {
    pub fn convex(target: TrackingTarget, agents: usize, state_bound: f64) -> Self {
        Self::convex_scaled(target, agents, state_bound, DEFAULT_QUADRATIC_SCALE)
    }

    pub fn convex_scaled(
        target: TrackingTarget,
        agents: usize,
        state_bound: f64,
        scale: f64,
    ) -> Self {
        Self {
            target,
            obs: ObservationMap::new(agents),
            agents,
            loss: TrackingLoss::Quadratic,
            scale,
            state_bound,
        }
    }

    pub fn nonconvex(target: TrackingTarget, agents: usize, state_bound: f64) -> Self {
        Self::nonconvex_scaled(target, agents, state_bound, DEFAULT_QUARTIC_SCALE)
    }

    pub fn nonconvex_scaled(
        target: TrackingTarget,
        agents: usize,
        state_bound: f64,
        scale: f64,
    ) -> Self {
        Self {
            target,
            obs: ObservationMap::new(agents),
            agents,
            loss: TrackingLoss::Quartic,
            scale,
            state_bound,
        }
    }

    pub fn target(&self) -> &TrackingTarget {
        &self.target
    }

    fn observed(&self, i: usize, t: usize) -> (usize, f64) {
        let axis = self.obs.axis(i);
        (axis, self.target.position(t)[axis])
    }

    fn loss_diff_on_axis(&self, axis: usize, t: usize, u: f64) -> f64 {
        // Agents sharing an axis share z, so the per-axis part of
        // f_t - f_{t-1} is a count times a scalar difference.
        let count = (0..self.agents).filter(|&i| self.obs.axis(i) == axis).count() as f64;
        let z_now = self.target.position(t)[axis];
        let z_prev = self.target.position(t - 1)[axis];
        count * (self.point_loss(z_now, u) - self.point_loss(z_prev, u))
    }

    fn point_loss(&self, z: f64, u: f64) -> f64 {
        match self.loss {
            TrackingLoss::Quadratic => {
                let r = z - u;
                self.scale * r * r
            }
            TrackingLoss::Quartic => {
                let r = z * z - u * u;
                self.scale * r * r
            }
        }
    }
}

impl ProblemSeq for TrackingProblem {
    fn label(&self) -> &'static str {
        match self.loss {
            TrackingLoss::Quadratic => "tracking_convex",
            TrackingLoss::Quartic => "tracking_nonconvex",
        }
    }

    fn dim(&self) -> usize {
        2
    }

    fn agents(&self) -> usize {
        self.agents
    }

    fn horizon(&self) -> usize {
        self.target.horizon()
    }

    fn local_value(&self, i: usize, t: usize, x: ArrayView1<f64>) -> f64 {
        let (axis, z) = self.observed(i, t);
        self.point_loss(z, x[axis])
    }

    fn local_grad(&self, i: usize, t: usize, x: ArrayView1<f64>) -> Array1<f64> {
        let (axis, z) = self.observed(i, t);
        let u = x[axis];
        let mut g = Array1::zeros(2);
        g[axis] = match self.loss {
            TrackingLoss::Quadratic => 2.0 * self.scale * (u - z),
            TrackingLoss::Quartic => -4.0 * self.scale * (z * z - u * u) * u,
        };
        g
    }

    fn minimizer(&self, t: usize) -> Result<Array1<f64>> {
        if !self.obs.covers_both() {
            return Err(Error::CoordinateUnobserved(1));
        }
        Ok(Array1::from_vec(self.target.position(t).to_vec()))
    }

    fn observation_axis(&self, i: usize) -> Option<usize> {
        Some(self.obs.axis(i))
    }

    fn constants(&self) -> ProblemConstants {
        let z_max = self.target.max_abs_coordinate();
        let b_x = self.state_bound;
        match self.loss {
            TrackingLoss::Quadratic => ProblemConstants {
                smoothness: 2.0 * self.scale,
                grad_bound: 2.0 * self.scale * (b_x + z_max),
                state_bound: b_x,
            },
            TrackingLoss::Quartic => ProblemConstants {
                smoothness: 4.0 * self.scale * (z_max * z_max).max(3.0 * b_x * b_x),
                grad_bound: 4.0 * self.scale * (z_max * z_max + b_x * b_x) * b_x,
                state_bound: b_x,
            },
        }
    }

    fn variation_increment(&self, t: usize) -> f64 {
        assert!(t >= 2 && t <= self.horizon() + 1);
        // Both losses are separable across coordinates, so the sup of the sum
        // is the sum of per-axis sups (and likewise for the inf); the sup of
        // the absolute difference is then max(sup, -inf).
        let b = self.state_bound;
        let mut sup = 0.0;
        let mut inf = 0.0;
        for axis in 0..2 {
            let (axis_max, axis_min) = match self.loss {
                // Affine in u: extremes at the box corners, in closed form.
                TrackingLoss::Quadratic => {
                    let at = |u: f64| self.loss_diff_on_axis(axis, t, u);
                    let (lo, hi) = (at(-b), at(b));
                    (lo.max(hi), lo.min(hi))
                }
                // Dense grid plus the exact corner/critical points (the
                // difference is affine in u^2, so {0, +-B} are the extremes).
                TrackingLoss::Quartic => {
                    let at = |u: f64| self.loss_diff_on_axis(axis, t, u);
                    let mut hi = f64::NEG_INFINITY;
                    let mut lo = f64::INFINITY;
                    for k in 0..VARIATION_GRID_POINTS {
                        let u = -b + 2.0 * b * k as f64 / (VARIATION_GRID_POINTS - 1) as f64;
                        let v = at(u);
                        hi = hi.max(v);
                        lo = lo.min(v);
                    }
                    for u in [-b, 0.0, b] {
                        let v = at(u);
                        hi = hi.max(v);
                        lo = lo.min(v);
                    }
                    (hi, lo)
                }
            };
            sup += axis_max;
            inf += axis_min;
        }
        sup.max(-inf).max(0.0)
    }
}

/// Static quadratic f_{i,t}(x) = 1/2 ||x - c||^2 for every agent and round;
/// the oracle problem for gradient-descent equivalence checks and for
/// isotropic vector noise.
#[derive(Debug, Clone)]
pub struct StaticQuadratic {
    center: Array1<f64>,
    agents: usize,
    horizon: usize,
    state_bound: f64,
}

impl StaticQuadratic {
    pub fn new(center: Array1<f64>, agents: usize, horizon: usize, state_bound: f64) -> Self {
        Self {
            center,
            agents,
            horizon,
            state_bound,
        }
    }
}

impl ProblemSeq for StaticQuadratic {
    fn label(&self) -> &'static str {
        "static_quadratic"
    }

    fn dim(&self) -> usize {
        self.center.len()
    }

    fn agents(&self) -> usize {
        self.agents
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn local_value(&self, _i: usize, _t: usize, x: ArrayView1<f64>) -> f64 {
        0.5 * (&x - &self.center).mapv(|v| v * v).sum()
    }

    fn local_grad(&self, _i: usize, _t: usize, x: ArrayView1<f64>) -> Array1<f64> {
        &x - &self.center
    }

    fn minimizer(&self, _t: usize) -> Result<Array1<f64>> {
        Ok(self.center.clone())
    }

    fn constants(&self) -> ProblemConstants {
        let c_norm = self.center.mapv(|v| v * v).sum().sqrt();
        ProblemConstants {
            smoothness: 1.0,
            grad_bound: self.state_bound + c_norm,
            state_bound: self.state_bound,
        }
    }

    fn variation_increment(&self, _t: usize) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn central_difference(
        problem: &dyn ProblemSeq,
        i: usize,
        t: usize,
        x: &Array1<f64>,
    ) -> Array1<f64> {
        let h = 1e-5;
        let mut g = Array1::zeros(problem.dim());
        for k in 0..problem.dim() {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[k] += h;
            lo[k] -= h;
            g[k] = (problem.local_value(i, t, hi.view()) - problem.local_value(i, t, lo.view()))
                / (2.0 * h);
        }
        g
    }

    fn random_point(rng: &mut crate::rng::Stream, lo: f64, hi: f64) -> Array1<f64> {
        array![rng.random_range(lo..hi), rng.random_range(lo..hi)]
    }

    #[test]
    fn target_starts_at_ten_ten() {
        let key = StreamKey::new(1);
        for noise in [false, true] {
            let target = target_trajectory(100, noise, &key);
            assert_eq!(target.position(0), [10.0, 10.0]);
        }
    }

    #[test]
    fn noiseless_target_telescopes_to_origin() {
        let key = StreamKey::new(1);
        for t_final in [1usize, 7, 100, 5000] {
            let target = target_trajectory(t_final, false, &key);
            let end = target.position(t_final);
            assert_abs_diff_eq!(end[0], 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(end[1], 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn noisy_target_lands_near_origin_on_average() {
        let horizon = 5000;
        let mut acc = 0.0;
        for seed in 0..100u64 {
            let target = target_trajectory(horizon, true, &StreamKey::new(seed));
            let end = target.position(horizon);
            acc += (end[0] * end[0] + end[1] * end[1]).sqrt();
        }
        let mean = acc / 100.0;
        assert!(mean <= 0.1, "mean final distance {mean}");
    }

    #[test]
    fn convex_gradient_examples() {
        let target = target_trajectory(10, false, &StreamKey::new(0));
        let problem = TrackingProblem::convex(target, 6, 25.0);
        // At the target the gradient vanishes.
        let t = 3;
        let star = problem.minimizer(t).unwrap();
        for i in 0..6 {
            assert_eq!(problem.local_grad(i, t, star.view()), array![0.0, 0.0]);
        }
        // Displacement (3, 7) from the target projects onto the observed axis.
        let x = &star + &array![3.0, 7.0];
        let g = problem.local_grad(0, t, x.view());
        assert_abs_diff_eq!(g[0], 3.0, epsilon = 1e-12);
        assert_eq!(g[1], 0.0);
        let g = problem.local_grad(1, t, x.view());
        assert_eq!(g[0], 0.0);
        assert_abs_diff_eq!(g[1], 7.0, epsilon = 1e-12);
    }

    #[test]
    fn quartic_gradient_vanishes_at_target_and_mirror() {
        let target = target_trajectory(10, false, &StreamKey::new(0));
        let problem = TrackingProblem::nonconvex(target, 6, 25.0);
        let t = 4;
        let star = problem.minimizer(t).unwrap();
        let mirror = star.mapv(|v| -v);
        for i in 0..6 {
            let g = problem.local_grad(i, t, star.view());
            assert!(g.iter().all(|v| v.abs() <= 1e-12));
            let g = problem.local_grad(i, t, mirror.view());
            assert!(g.iter().all(|v| v.abs() <= 1e-12));
        }
        // Global gradient is zero at the comparator point too.
        let g = problem.global_grad(t, star.view());
        assert!(g.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn gradients_match_central_differences() {
        let key = StreamKey::new(8);
        let target = target_trajectory(20, true, &key);
        let convex = TrackingProblem::convex(target.clone(), 6, 25.0);
        let quartic = TrackingProblem::nonconvex(target, 6, 25.0);
        let quad = StaticQuadratic::new(array![2.0, -1.0], 3, 20, 25.0);
        let problems: [&dyn ProblemSeq; 3] = [&convex, &quartic, &quad];
        let mut rng = key.probe(1);
        for problem in problems {
            for trial in 0..20 {
                let t = 1 + (trial % problem.horizon());
                let i = trial % problem.agents();
                let x = random_point(&mut rng, -20.0, 20.0);
                let analytic = problem.local_grad(i, t, x.view());
                let numeric = central_difference(problem, i, t, &x);
                let denom = analytic.mapv(|v| v * v).sum().sqrt().max(1.0);
                let err = (&analytic - &numeric).mapv(|v| v * v).sum().sqrt() / denom;
                assert!(err <= 1e-5, "{} rel err {err}", problem.label());
            }
        }
    }

    #[test]
    fn minimizer_is_global_minimum() {
        let key = StreamKey::new(3);
        let target = target_trajectory(50, true, &key);
        let problem = TrackingProblem::convex(target, 6, 25.0);
        assert_eq!(
            problem.minimizer(0).unwrap(),
            Array1::from_vec(problem.target().position(0).to_vec())
        );
        let mut rng = key.probe(2);
        for t in [1usize, 25, 50] {
            let star = problem.minimizer(t).unwrap();
            let f_star = problem.global_value(t, star.view());
            assert!(f_star.abs() <= 1e-18);
            for _ in 0..100 {
                let x = random_point(&mut rng, -25.0, 25.0);
                assert!(problem.global_value(t, x.view()) >= f_star);
            }
        }
    }

    #[test]
    fn single_agent_leaves_a_coordinate_unobserved() {
        let target = target_trajectory(10, false, &StreamKey::new(0));
        let problem = TrackingProblem::convex(target, 1, 25.0);
        assert!(matches!(
            problem.minimizer(1),
            Err(Error::CoordinateUnobserved(1))
        ));
    }

    #[test]
    fn observation_axes_alternate_and_cover() {
        let obs = ObservationMap::new(6);
        let axes: Vec<usize> = (0..6).map(|i| obs.axis(i)).collect();
        assert_eq!(axes, vec![0, 1, 0, 1, 0, 1]);
        assert!(obs.covers_both());
        assert!(!ObservationMap::new(1).covers_both());
    }

    /// Brute-force 2-D grid oracle for the variation supremum.
    fn variation_grid_oracle(problem: &TrackingProblem, t: usize, points: usize) -> f64 {
        let b = problem.state_bound;
        let mut best = 0.0f64;
        for a in 0..points {
            let x0 = -b + 2.0 * b * a as f64 / (points - 1) as f64;
            for c in 0..points {
                let x1 = -b + 2.0 * b * c as f64 / (points - 1) as f64;
                let x = array![x0, x1];
                let diff: f64 = (0..problem.agents())
                    .map(|i| {
                        problem.local_value(i, t, x.view()) - problem.local_value(i, t - 1, x.view())
                    })
                    .sum();
                best = best.max(diff.abs());
            }
        }
        best
    }

    #[test]
    fn variation_zero_when_target_rests() {
        let positions = vec![[1.0, 2.0]; 5];
        let target = TrackingTarget::from_positions(positions);
        let convex = TrackingProblem::convex(target.clone(), 6, 25.0);
        let quartic = TrackingProblem::nonconvex(target, 6, 25.0);
        for t in 2..=3 {
            assert_eq!(convex.variation_increment(t), 0.0);
            assert_eq!(quartic.variation_increment(t), 0.0);
        }
    }

    #[test]
    fn variation_matches_grid_oracle() {
        // Single-axis displacement for the convex loss, then a generic noisy
        // trajectory for both losses.
        let delta_positions = vec![[10.0, 5.0], [10.0, 5.0], [10.5, 5.0], [10.5, 5.0]];
        let target = TrackingTarget::from_positions(delta_positions);
        let convex = TrackingProblem::convex(target, 6, 25.0);
        let closed = convex.variation_increment(2);
        let grid = variation_grid_oracle(&convex, 2, 301);
        assert!(
            (closed - grid).abs() <= 0.01 * closed.max(1e-12),
            "closed {closed} vs grid {grid}"
        );

        let key = StreamKey::new(14);
        let target = target_trajectory(12, true, &key);
        let convex = TrackingProblem::convex(target.clone(), 6, 25.0);
        let quartic = TrackingProblem::nonconvex(target, 6, 25.0);
        for t in [2usize, 7, 12] {
            for problem in [&convex, &quartic] {
                let fast = problem.variation_increment(t);
                let grid = variation_grid_oracle(problem, t, 301);
                assert!(
                    (fast - grid).abs() <= 0.01 * fast.max(1e-12),
                    "{} t={t}: fast {fast} vs grid {grid}",
                    problem.label()
                );
            }
        }
    }

    #[test]
    fn variation_additive_and_nonnegative() {
        let key = StreamKey::new(15);
        let target = target_trajectory(20, true, &key);
        let problem = TrackingProblem::convex(target, 6, 25.0);
        let total: f64 = (2..=20).map(|t| problem.variation_increment(t)).sum();
        let first: f64 = (2..=10).map(|t| problem.variation_increment(t)).sum();
        let second: f64 = (11..=20).map(|t| problem.variation_increment(t)).sum();
        assert!(total >= 0.0);
        assert_abs_diff_eq!(total, first + second, epsilon = 1e-12);
    }

    #[test]
    fn convex_values_dominate_minimum() {
        let key = StreamKey::new(4);
        let target = target_trajectory(30, true, &key);
        let problem = TrackingProblem::convex(target, 6, 25.0);
        let mut rng = key.probe(3);
        for t in 1..=30 {
            let star = problem.minimizer(t).unwrap();
            let base = problem.global_value(t, star.view());
            let x = random_point(&mut rng, -25.0, 25.0);
            assert!(problem.global_value(t, x.view()) - base >= 0.0);
        }
    }
}
