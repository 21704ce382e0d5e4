//! The clipped online descent iteration: consensus with the current graph,
//! clipped stochastic gradient at the pre-consensus state, then the descent
//! step, with polynomial step and clip schedules.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{apply_consensus, max_disagreement, mean_state, GraphSchedule};
use crate::noise::{GradientOracle, NoiseModel};
use crate::problem::ProblemSeq;
use crate::rng::StreamKey;

/// Step sizes eta_t = (a t + b)^(-kappa), positive and non-increasing.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepSchedule {
    pub a: f64,
    pub b: f64,
    pub kappa: f64,
}

impl StepSchedule {
    pub fn new(a: f64, b: f64, kappa: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && kappa >= 0.0) || !(a + b + kappa).is_finite() {
            return Err(Error::Validation(format!(
                "step schedule needs a > 0, b > 0, kappa >= 0; got a={a}, b={b}, kappa={kappa}"
            )));
        }
        Ok(Self { a, b, kappa })
    }

    pub fn at(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        (self.a * t as f64 + self.b).powf(-self.kappa)
    }
}

/// Clip levels lambda_t = c0 t^alpha, positive and non-decreasing.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ClipSchedule {
    pub c0: f64,
    pub alpha: f64,
}

impl ClipSchedule {
    pub fn new(c0: f64, alpha: f64) -> Result<Self> {
        if !(c0 > 0.0 && alpha >= 0.0) || !(c0 + alpha).is_finite() {
            return Err(Error::Validation(format!(
                "clip schedule needs c0 > 0, alpha >= 0; got c0={c0}, alpha={alpha}"
            )));
        }
        Ok(Self { c0, alpha })
    }

    pub fn at(&self, t: usize) -> f64 {
        debug_assert!(t >= 1);
        self.c0 * (t as f64).powf(self.alpha)
    }
}

/// Radial projection onto the lambda-ball: min{1, lambda/||y||} y, with
/// clip(0) = 0.
pub fn clip(y: ArrayView1<f64>, lambda: f64) -> Array1<f64> {
    debug_assert!(lambda > 0.0);
    let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= lambda {
        y.to_owned()
    } else {
        y.mapv(|v| v * (lambda / norm))
    }
}

/// Agent states at one round: row i is x_{i,t}.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub states: Array2<f64>,
    pub t: usize,
}

impl SwarmState {
    pub fn new(states: Array2<f64>, t: usize) -> Self {
        Self { states, t }
    }

    pub fn agents(&self) -> usize {
        self.states.nrows()
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn mean(&self) -> Array1<f64> {
        mean_state(&self.states)
    }

    /// max_i ||x_i - mean||.
    pub fn disagreement(&self) -> f64 {
        max_disagreement(&self.states)
    }

    pub fn max_norm(&self) -> f64 {
        self.states
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    fn first_non_finite_agent(&self) -> Option<usize> {
        (0..self.agents()).find(|&i| self.states.row(i).iter().any(|v| !v.is_finite()))
    }
}

/// One iteration: y_i = sum_j [W]_ij x_j, g~_i = clip of the noisy gradient at
/// the pre-consensus state x_i, then x_i' = y_i - eta g~_i. Returns the new
/// swarm and the clipped gradient norms.
pub fn odcsgd_step(
    swarm: &SwarmState,
    w: &crate::graph::WeightMatrix,
    oracle: &GradientOracle<'_>,
    eta: f64,
    lambda: f64,
    streams: &StreamKey,
) -> Result<(SwarmState, Vec<f64>)> {
    if oracle.problem().dim() != swarm.dim() {
        return Err(Error::DimensionMismatch(format!(
            "problem dimension {} vs swarm dimension {}",
            oracle.problem().dim(),
            swarm.dim()
        )));
    }
    let t = swarm.t;
    let consensus = apply_consensus(w, &swarm.states)?;
    let mut next = consensus;
    let mut norms = Vec::with_capacity(swarm.agents());
    for i in 0..swarm.agents() {
        let mut rng = streams.gradient(i, t);
        let noisy = oracle.noisy_gradient(i, t, swarm.states.row(i), &mut rng);
        let clipped = clip(noisy.view(), lambda);
        norms.push(clipped.iter().map(|v| v * v).sum::<f64>().sqrt());
        let mut row = next.row_mut(i);
        row.iter_mut()
            .zip(clipped.iter())
            .for_each(|(y, g)| *y -= eta * g);
    }
    Ok((SwarmState::new(next, t + 1), norms))
}

/// Everything one trajectory needs, fully resolved.
pub struct RunSetup<'a> {
    pub problem: &'a dyn ProblemSeq,
    pub graph: &'a GraphSchedule,
    pub noise: NoiseModel,
    pub step: StepSchedule,
    pub clip: ClipSchedule,
    pub horizon: usize,
    pub seed: u64,
    pub init_lo: Vec<f64>,
    pub init_hi: Vec<f64>,
}

/// Full record of one trajectory. `states[k]` is the swarm at round k+1, so
/// the vector covers x_1 ..= x_{T+1}.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub states: Vec<Array2<f64>>,
    pub clipped_norms: Vec<Vec<f64>>,
    pub disagreement: Vec<f64>,
    pub eta: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl RunTrace {
    pub fn horizon(&self) -> usize {
        self.eta.len()
    }

    pub fn agents(&self) -> usize {
        self.states[0].nrows()
    }

    pub fn dim(&self) -> usize {
        self.states[0].ncols()
    }

    /// Swarm state x_t for t in 1..=T+1.
    pub fn state_at(&self, t: usize) -> &Array2<f64> {
        &self.states[t - 1]
    }

    /// R_1 = max_i ||x_{i,1}||.
    pub fn initial_max_norm(&self) -> f64 {
        SwarmState::new(self.states[0].clone(), 1).max_norm()
    }

    /// Largest agent-state norm realized anywhere in the trajectory.
    pub fn realized_state_bound(&self) -> f64 {
        self.states
            .iter()
            .map(|s| SwarmState::new(s.clone(), 1).max_norm())
            .fold(0.0, f64::max)
    }
}

/// Execute `horizon` steps from box-uniform initial states; deterministic
/// given the seed.
pub fn run(setup: &RunSetup<'_>) -> Result<RunTrace> {
    let n = setup.problem.agents();
    let d = setup.problem.dim();
    if setup.graph.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} nodes but problem has {} agents",
            setup.graph.n(),
            n
        )));
    }
    if setup.init_lo.len() != d || setup.init_hi.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "initial box has dimension {} but problem has dimension {d}",
            setup.init_lo.len()
        )));
    }
    let key = StreamKey::new(setup.seed);
    let mut init = Array2::zeros((n, d));
    for i in 0..n {
        let mut rng = key.init(i);
        for k in 0..d {
            let (lo, hi) = (setup.init_lo[k], setup.init_hi[k]);
            init[(i, k)] = if hi > lo { rng.random_range(lo..hi) } else { lo };
        }
    }
    let oracle = GradientOracle::new(setup.problem, setup.noise);
    let mut swarm = SwarmState::new(init, 1);
    let mut trace = RunTrace {
        seed: setup.seed,
        states: vec![swarm.states.clone()],
        clipped_norms: Vec::with_capacity(setup.horizon),
        disagreement: vec![swarm.disagreement()],
        eta: Vec::with_capacity(setup.horizon),
        lambda: Vec::with_capacity(setup.horizon),
    };
    for t in 1..=setup.horizon {
        let eta = setup.step.at(t);
        let lambda = setup.clip.at(t);
        let (next, norms) = odcsgd_step(
            &swarm,
            setup.graph.matrix_at(t),
            &oracle,
            eta,
            lambda,
            &key,
        )?;
        if let Some(agent) = next.first_non_finite_agent() {
            return Err(Error::NonFiniteState { agent, step: t });
        }
        trace.states.push(next.states.clone());
        trace.disagreement.push(next.disagreement());
        trace.clipped_norms.push(norms);
        trace.eta.push(eta);
        trace.lambda.push(lambda);
        swarm = next;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_edge_weight_matrix, ring_phases, GraphSchedule, WeightMatrix};
    use crate::problem::{target_trajectory, StaticQuadratic, TrackingProblem};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn single_node_graph() -> GraphSchedule {
        GraphSchedule::new(vec![WeightMatrix::identity(1)], 1).unwrap()
    }

    fn ring6(w: f64) -> GraphSchedule {
        let mats = ring_phases(6, 4)
            .iter()
            .map(|p| build_edge_weight_matrix(6, p, w).unwrap())
            .collect();
        GraphSchedule::new(mats, 4).unwrap()
    }

    #[test]
    fn clip_shrinks_long_vectors() {
        let clipped = clip(array![3.0, 4.0].view(), 2.0);
        assert_abs_diff_eq!(clipped[0], 1.2, epsilon = 1e-15);
        assert_abs_diff_eq!(clipped[1], 1.6, epsilon = 1e-15);
    }

    #[test]
    fn clip_keeps_short_vectors_and_zero() {
        let y = array![0.3, -0.4];
        assert_eq!(clip(y.view(), 2.0), y);
        let zero = array![0.0, 0.0, 0.0];
        assert_eq!(clip(zero.view(), 1e-9), zero);
    }

    #[test]
    fn step_size_examples() {
        let s = StepSchedule::new(0.5, 10.0, 0.5).unwrap();
        assert_abs_diff_eq!(s.at(1), 1.0 / 10.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.at(1), 0.308_606_699_924_183_8, epsilon = 1e-12);
        let flat = StepSchedule::new(0.5, 10.0, 0.0).unwrap();
        for t in [1usize, 10, 1000] {
            assert_eq!(flat.at(t), 1.0);
        }
        for t in 1..200 {
            assert!(s.at(t + 1) <= s.at(t));
        }
    }

    #[test]
    fn clip_level_examples() {
        let c = ClipSchedule::new(2.0, 0.1).unwrap();
        assert_eq!(c.at(1), 2.0);
        assert_abs_diff_eq!(c.at(1024), 4.0, epsilon = 1e-12);
        let flat = ClipSchedule::new(2.0, 0.0).unwrap();
        assert_eq!(flat.at(77), 2.0);
        for t in 1..200 {
            assert!(c.at(t + 1) >= c.at(t));
        }
    }

    #[test]
    fn zero_gradient_identity_graph_is_a_fixed_point() {
        let center = array![2.0, -3.0];
        let problem = StaticQuadratic::new(center.clone(), 1, 10, 25.0);
        let oracle = GradientOracle::new(&problem, NoiseModel::none());
        let w = WeightMatrix::identity(1);
        let swarm = SwarmState::new(
            Array2::from_shape_vec((1, 2), center.to_vec()).unwrap(),
            1,
        );
        let key = StreamKey::new(0);
        let (next, norms) = odcsgd_step(&swarm, &w, &oracle, 0.1, 10.0, &key).unwrap();
        assert_eq!(next.states, swarm.states);
        assert_eq!(norms, vec![0.0]);
    }

    #[test]
    fn single_agent_matches_closed_form_gradient_descent() {
        let center = array![1.0, -2.0];
        let problem = StaticQuadratic::new(center.clone(), 1, 100, 25.0);
        let graph = single_node_graph();
        let setup = RunSetup {
            problem: &problem,
            graph: &graph,
            noise: NoiseModel::none(),
            step: StepSchedule::new(0.5, 10.0, 0.5).unwrap(),
            clip: ClipSchedule::new(1e6, 0.0).unwrap(),
            horizon: 100,
            seed: 3,
            init_lo: vec![9.0, 9.0],
            init_hi: vec![10.0, 10.0],
        };
        let trace = run(&setup).unwrap();
        // Closed-form iterate x_{t+1} = (1 - eta_t) x_t + eta_t c.
        let mut x = trace.states[0].row(0).to_owned();
        for t in 1..=100usize {
            let eta = setup.step.at(t);
            x = x.mapv(|v| v * (1.0 - eta)) + center.mapv(|v| v * eta);
            let got = trace.state_at(t + 1).row(0);
            for (a, b) in got.iter().zip(x.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn per_step_displacement_bounded_by_eta_lambda() {
        let key = StreamKey::new(5);
        let target = target_trajectory(200, true, &key);
        let problem = TrackingProblem::convex(target, 6, 25.0);
        let graph = ring6(0.8);
        let setup = RunSetup {
            problem: &problem,
            graph: &graph,
            noise: NoiseModel::student_t2(1.0),
            step: StepSchedule::new(0.5, 10.0, 0.5).unwrap(),
            clip: ClipSchedule::new(2.0, 0.1).unwrap(),
            horizon: 200,
            seed: 5,
            init_lo: vec![9.0, 9.0],
            init_hi: vec![10.0, 10.0],
        };
        let trace = run(&setup).unwrap();
        for t in 1..=200usize {
            let before = trace.state_at(t);
            let after = trace.state_at(t + 1);
            let consensus = apply_consensus(graph.matrix_at(t), before).unwrap();
            let bound = setup.step.at(t) * setup.clip.at(t);
            for i in 0..6 {
                let disp: f64 = after
                    .row(i)
                    .iter()
                    .zip(consensus.row(i).iter())
                    .map(|(a, y)| (a - y) * (a - y))
                    .sum::<f64>()
                    .sqrt();
                assert!(disp <= bound + 1e-12, "t={t} i={i}: {disp} > {bound}");
            }
        }
    }

    #[test]
    fn mean_follows_average_clipped_gradient() {
        let key = StreamKey::new(6);
        let target = target_trajectory(100, true, &key);
        let problem = TrackingProblem::convex(target, 6, 25.0);
        let graph = ring6(0.8);
        let noise = NoiseModel::student_t2(1.0);
        let setup = RunSetup {
            problem: &problem,
            graph: &graph,
            noise,
            step: StepSchedule::new(0.5, 10.0, 0.5).unwrap(),
            clip: ClipSchedule::new(2.0, 0.1).unwrap(),
            horizon: 100,
            seed: 6,
            init_lo: vec![9.0, 9.0],
            init_hi: vec![10.0, 10.0],
        };
        let trace = run(&setup).unwrap();
        let oracle = GradientOracle::new(&problem, noise);
        for t in 1..=100usize {
            let before = trace.state_at(t);
            let after = trace.state_at(t + 1);
            // Recompute the clipped gradients from the recorded states; the
            // per-(agent, t) streams make the draws identical.
            let mut g_sum = Array1::<f64>::zeros(2);
            for i in 0..6 {
                let mut rng = key.gradient(i, t);
                let noisy = oracle.noisy_gradient(i, t, before.row(i), &mut rng);
                g_sum += &clip(noisy.view(), trace.lambda[t - 1]);
            }
            let mean_before = mean_state(before);
            let mean_after = mean_state(after);
            let expected = &mean_before - &g_sum.mapv(|v| v * trace.eta[t - 1] / 6.0);
            for (a, b) in mean_after.iter().zip(expected.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn zero_horizon_trace_holds_initial_state_only() {
        let problem = StaticQuadratic::new(array![0.0, 0.0], 1, 1, 25.0);
        let graph = single_node_graph();
        let setup = RunSetup {
            problem: &problem,
            graph: &graph,
            noise: NoiseModel::none(),
            step: StepSchedule::new(1.0, 1.0, 0.5).unwrap(),
            clip: ClipSchedule::new(1.0, 0.0).unwrap(),
            horizon: 0,
            seed: 1,
            init_lo: vec![9.0, 9.0],
            init_hi: vec![10.0, 10.0],
        };
        let trace = run(&setup).unwrap();
        assert_eq!(trace.states.len(), 1);
        assert_eq!(trace.horizon(), 0);
    }

    #[test]
    fn same_seed_gives_bit_identical_traces() {
        let key = StreamKey::new(9);
        let target = target_trajectory(150, true, &key);
        let problem = TrackingProblem::convex(target, 6, 25.0);
        let graph = ring6(0.8);
        let setup = RunSetup {
            problem: &problem,
            graph: &graph,
            noise: NoiseModel::student_t2(1.0),
            step: StepSchedule::new(0.5, 10.0, 0.5).unwrap(),
            clip: ClipSchedule::new(2.0, 0.1).unwrap(),
            horizon: 150,
            seed: 9,
            init_lo: vec![9.0, 9.0],
            init_hi: vec![10.0, 10.0],
        };
        let a = run(&setup).unwrap();
        let b = run(&setup).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn convex_benchmark_run_stays_finite_and_tightens() {
        let key = StreamKey::new(12);
        let target = target_trajectory(500, true, &key);
        let problem = TrackingProblem::convex(target, 6, 25.0);
        let graph = ring6(0.8);
        let setup = RunSetup {
            problem: &problem,
            graph: &graph,
            noise: NoiseModel::student_t2(1.0),
            step: StepSchedule::new(0.5, 10.0, 0.5).unwrap(),
            clip: ClipSchedule::new(2.0, 0.1).unwrap(),
            horizon: 500,
            seed: 12,
            init_lo: vec![9.0, 9.0],
            init_hi: vec![10.0, 10.0],
        };
        let trace = run(&setup).unwrap();
        assert!(trace
            .states
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite())));
        assert!(trace.disagreement.last().unwrap() < &1.0);
    }

    #[test]
    fn disagreement_series_recomputable() {
        let key = StreamKey::new(13);
        let target = target_trajectory(60, true, &key);
        let problem = TrackingProblem::convex(target, 6, 25.0);
        let graph = ring6(0.8);
        let setup = RunSetup {
            problem: &problem,
            graph: &graph,
            noise: NoiseModel::gaussian(1.0),
            step: StepSchedule::new(0.5, 10.0, 0.5).unwrap(),
            clip: ClipSchedule::new(2.0, 0.1).unwrap(),
            horizon: 60,
            seed: 13,
            init_lo: vec![9.0, 9.0],
            init_hi: vec![10.0, 10.0],
        };
        let trace = run(&setup).unwrap();
        for (k, s) in trace.states.iter().enumerate() {
            assert_abs_diff_eq!(
                trace.disagreement[k],
                max_disagreement(s),
                epsilon = 1e-12
            );
        }
    }

    proptest! {
        #[test]
        fn clip_invariants(
            coords in proptest::collection::vec(-100.0f64..100.0, 1..6),
            lambda in 0.01f64..50.0,
        ) {
            let y = Array1::from_vec(coords);
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let clipped = clip(y.view(), lambda);
            let clipped_norm = clipped.iter().map(|v| v * v).sum::<f64>().sqrt();
            // Norm is min(lambda, ||y||).
            prop_assert!((clipped_norm - norm.min(lambda)).abs() <= 1e-12 * norm.max(1.0));
            // Idempotence.
            let twice = clip(clipped.view(), lambda);
            for (a, b) in twice.iter().zip(clipped.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
            // Nonnegative multiple of the input: scaled copies stay parallel.
            if norm > 0.0 {
                let dot: f64 = clipped.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
                prop_assert!(dot >= 0.0);
                let cross_norm = (clipped_norm * norm - dot).abs();
                prop_assert!(cross_norm <= 1e-9 * norm.max(1.0));
            }
        }
    }
}
