//! Numeric right-hand sides of the network-error lemmas and the regret
//! theorems, plus the Monte-Carlo decomposition of the clipped oracle into
//! fluctuation and bias parts. All evaluators are pure functions of the
//! context and trace summaries.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::graph::{GraphSchedule, MixingConstants};
use crate::noise::{GradientOracle, NoiseModel};
use crate::problem::ProblemSeq;
use crate::regret::sublinearity_slope;
use crate::rng::Stream;
use crate::sim::{clip, ClipSchedule, RunTrace, StepSchedule};

/// Constants a bound evaluation needs, frozen from one run.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundContext {
    pub mixing: MixingConstants,
    /// R_1 = max_i ||x_{i,1}||.
    pub r1: f64,
    pub grad_bound: f64,
    pub state_bound: f64,
    pub smoothness: f64,
    /// sigma of the p-th moment certificate.
    pub sigma: f64,
    pub tail_p: f64,
    pub step: StepSchedule,
    pub clip: ClipSchedule,
    pub agents: usize,
    pub horizon: usize,
    pub delta: f64,
    /// sum_i ||x_{i,1} - x*_1||^2 (convex theorem initial term).
    pub init_sq_dist: f64,
}

impl BoundContext {
    /// Assemble the context from a finished trace. The state bound defaults
    /// to the realized max ||x_{i,t}|| (the algorithm has no projection), and
    /// a declared override may replace it.
    #[allow(clippy::too_many_arguments)]
    pub fn for_trace(
        trace: &RunTrace,
        problem: &dyn ProblemSeq,
        graph: &GraphSchedule,
        noise: &NoiseModel,
        step: StepSchedule,
        clip: ClipSchedule,
        delta: f64,
        declared_state_bound: Option<f64>,
    ) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Validation(format!(
                "delta must lie in (0,1), got {delta}"
            )));
        }
        let consts = problem.constants();
        let star = problem.minimizer(1)?;
        let init = trace.state_at(1);
        let init_sq_dist = (0..trace.agents())
            .map(|i| {
                init.row(i)
                    .iter()
                    .zip(star.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum();
        Ok(Self {
            mixing: graph.mixing(),
            r1: trace.initial_max_norm(),
            grad_bound: consts.grad_bound,
            state_bound: declared_state_bound.unwrap_or_else(|| trace.realized_state_bound()),
            smoothness: consts.smoothness,
            sigma: noise.sigma_p,
            tail_p: noise.tail_p,
            step,
            clip,
            agents: trace.agents(),
            horizon: trace.horizon(),
            delta,
            init_sq_dist,
        })
    }

    fn eta(&self, t: usize) -> f64 {
        self.step.at(t)
    }

    fn lambda(&self, t: usize) -> f64 {
        self.clip.at(t)
    }
}

/// Pathwise network-error bound at step t:
/// N gamma beta^t R_1 + 2 lambda_t eta_t + N gamma sum_{l<t} beta^(t-l) lambda_l eta_l.
pub fn lemma2_rhs(t: usize, ctx: &BoundContext) -> f64 {
    let MixingConstants { gamma, beta } = ctx.mixing;
    let n = ctx.agents as f64;
    let mut tail = 0.0;
    for l in 1..t {
        tail += beta.powi((t - l) as i32) * ctx.lambda(l) * ctx.eta(l);
    }
    n * gamma * beta.powi(t as i32) * ctx.r1 + 2.0 * ctx.lambda(t) * ctx.eta(t) + n * gamma * tail
}

/// All lemma2 right-hand sides for t = 1..=horizon in one sweep, using the
/// geometric recurrence S_t = beta (S_{t-1} + lambda_{t-1} eta_{t-1}).
pub fn lemma2_rhs_series(horizon: usize, ctx: &BoundContext) -> Vec<f64> {
    let MixingConstants { gamma, beta } = ctx.mixing;
    let n = ctx.agents as f64;
    let mut series = Vec::with_capacity(horizon);
    let mut tail = 0.0;
    let mut beta_pow = 1.0;
    for t in 1..=horizon {
        beta_pow *= beta;
        if t > 1 {
            tail = beta * (tail + ctx.lambda(t - 1) * ctx.eta(t - 1));
        }
        series.push(
            n * gamma * beta_pow * ctx.r1 + 2.0 * ctx.lambda(t) * ctx.eta(t) + n * gamma * tail,
        );
    }
    series
}

/// Cumulative squared network-error bound over [1, horizon].
pub fn lemma3_rhs(horizon: usize, ctx: &BoundContext) -> f64 {
    let MixingConstants { gamma, beta } = ctx.mixing;
    let n = ctx.agents as f64;
    let mut sum_e2l2 = 0.0;
    let mut sum_e3l2 = 0.0;
    for t in 1..=horizon {
        let e = ctx.eta(t);
        let l = ctx.lambda(t);
        sum_e2l2 += e * e * l * l;
        sum_e3l2 += e * e * e * l * l;
    }
    3.0 * n * n * gamma * gamma * ctx.r1 * ctx.r1 / (1.0 - beta * beta)
        + 12.0 * sum_e2l2
        + 3.0 * n * n * gamma * gamma / ((1.0 - beta) * (1.0 - beta)) * sum_e3l2
}

/// Schedule sums shared by the theorem evaluators.
struct ScheduleSums {
    eta_first: f64,
    eta_last: f64,
    lambda_first: f64,
    e2l2: f64,
    e2l1: f64,
    e3l2: f64,
    /// sum lambda^(1-p) eta.
    bias: f64,
    /// sum lambda^(2-p) eta^2.
    fluct: f64,
}

fn schedule_sums(ctx: &BoundContext) -> ScheduleSums {
    let p = ctx.tail_p;
    let mut s = ScheduleSums {
        eta_first: ctx.eta(1),
        eta_last: ctx.eta(ctx.horizon.max(1)),
        lambda_first: ctx.lambda(1),
        e2l2: 0.0,
        e2l1: 0.0,
        e3l2: 0.0,
        bias: 0.0,
        fluct: 0.0,
    };
    for t in 1..=ctx.horizon {
        let e = ctx.eta(t);
        let l = ctx.lambda(t);
        s.e2l2 += e * e * l * l;
        s.e2l1 += e * e * l;
        s.e3l2 += e * e * e * l * l;
        s.bias += l.powf(1.0 - p) * e;
        s.fluct += l.powf(2.0 - p) * e * e;
    }
    s
}

/// Convex-case high-probability regret bound, evaluated exactly as stated:
/// P/eta_T + Q sum eta^2 lambda^2 / eta_T + R sum eta^2 lambda / eta_T
/// + 2 B_X C_T / eta_T + (16N/3) B_X B_g log(2/delta) / eta_T
/// + 8 N B_X sigma^p sum lambda^(1-p) eta / eta_T
/// + 8 N sqrt(sigma^p) B_X sqrt(sum lambda^(2-p) eta^2) / eta_T.
pub fn theorem1_rhs(ctx: &BoundContext, c_path: f64) -> f64 {
    let MixingConstants { gamma, beta } = ctx.mixing;
    let n = ctx.agents as f64;
    let s = schedule_sums(ctx);
    let geo = 1.0 / (1.0 - beta);
    let b_x = ctx.state_bound;
    let b_g = ctx.grad_bound;
    let sigma_p = ctx.sigma.powf(ctx.tail_p);

    let p_term = (2.0 * b_x * s.lambda_first + 2.0 * b_g * n * n) * n * gamma * s.eta_first * geo
        + 0.5 * ctx.init_sq_dist;
    let q_term = (5.0 + 2.0 * n * gamma * geo) * n;
    let r_term = 2.0 * b_g * n * n * (2.0 + n * gamma * geo);
    let inv_eta = 1.0 / s.eta_last;

    p_term * inv_eta
        + q_term * s.e2l2 * inv_eta
        + r_term * s.e2l1 * inv_eta
        + 2.0 * b_x * c_path * inv_eta
        + (16.0 * n / 3.0) * b_x * b_g * (2.0 / ctx.delta).ln() * inv_eta
        + 8.0 * n * b_x * sigma_p * s.bias * inv_eta
        + 8.0 * n * sigma_p.sqrt() * b_x * s.fluct.sqrt() * inv_eta
}

/// Non-convex bound, both as the bound on NREG/(2N) and rescaled to NREG.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Bound {
    pub per_two_n: f64,
    pub total: f64,
}

/// Non-convex high-probability bound. `f_first` and `f_last` are
/// f_1(mean x_1) and f_{T+1}(mean x_{T+1}) from the trace.
pub fn theorem2_rhs(ctx: &BoundContext, d_var: f64, f_first: f64, f_last: f64) -> Theorem2Bound {
    let MixingConstants { gamma, beta } = ctx.mixing;
    let n = ctx.agents as f64;
    let s = schedule_sums(ctx);
    let geo = 1.0 / (1.0 - beta);
    let b_g = ctx.grad_bound;
    let l = ctx.smoothness;
    let sigma_p = ctx.sigma.powf(ctx.tail_p);
    let inv_eta = 1.0 / s.eta_last;

    let p_term = n * (f_first - f_last)
        + n * gamma * s.eta_first * geo * ctx.r1 * b_g * l
        + 36.0 * n.powi(3) * l * l * ctx.r1 * ctx.r1 / (1.0 - beta * beta);
    let q_term = b_g * l * (2.0 + n * gamma * geo);
    let r_term = l / 2.0 + 12.0 * n * l * l;

    let per_two_n = p_term * inv_eta
        + q_term * s.e2l1 * inv_eta
        + r_term * s.e2l2
        + 4.0 * n * b_g * sigma_p * s.bias * inv_eta
        + n * d_var * inv_eta
        + 4.0 * n * b_g * sigma_p.sqrt() * s.fluct.sqrt() * inv_eta
        + (8.0 / 3.0) * b_g * b_g * (2.0 / ctx.delta).ln() * inv_eta
        + 3.0 * n.powi(3) * l * l * gamma * gamma * geo * geo * s.e3l2;

    Theorem2Bound {
        per_two_n,
        total: 2.0 * n * per_two_n,
    }
}

/// Monte-Carlo estimates of the clipped oracle's bias and fluctuation parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipDecomposition {
    pub samples: usize,
    pub lambda: f64,
    /// ||estimated conditional mean of the clipped oracle minus true grad||.
    pub bias_norm: f64,
    pub bias_bound: f64,
    pub bias_se: f64,
    /// Mean of ||theta_u||^2 over the samples.
    pub fluct_sq_mean: f64,
    pub fluct_sq_bound: f64,
    pub fluct_sq_se: f64,
    /// Largest single-sample ||theta_u||; always <= 2 lambda.
    pub max_fluct_norm: f64,
}

impl ClipDecomposition {
    pub fn bias_ok(&self) -> bool {
        self.bias_norm <= self.bias_bound + 3.0 * self.bias_se
    }

    pub fn fluct_ok(&self) -> bool {
        self.fluct_sq_mean <= self.fluct_sq_bound + 3.0 * self.fluct_sq_se
    }

    pub fn samples_ok(&self) -> bool {
        self.max_fluct_norm <= 2.0 * self.lambda + 1e-12
    }
}

/// Estimate the clipped-oracle decomposition at a fixed point. Errors with
/// `HypothesisViolated` when ||grad f_{i,t}(x)|| > lambda/2 (the lemma is
/// then inapplicable, not failed).
#[allow(clippy::too_many_arguments)]
pub fn clip_decomposition_estimate(
    oracle: &GradientOracle<'_>,
    x: ArrayView1<f64>,
    i: usize,
    t: usize,
    lambda: f64,
    samples: usize,
    rng: &mut Stream,
) -> Result<ClipDecomposition> {
    let grad = oracle.problem().local_grad(i, t, x);
    let grad_norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    if grad_norm > lambda / 2.0 {
        return Err(Error::HypothesisViolated {
            grad_norm,
            half_lambda: lambda / 2.0,
        });
    }
    let dim = grad.len();
    let mut draws: Vec<Array1<f64>> = Vec::with_capacity(samples);
    let mut mean = Array1::<f64>::zeros(dim);
    for _ in 0..samples {
        let clipped = clip(oracle.noisy_gradient(i, t, x, rng).view(), lambda);
        mean += &clipped;
        draws.push(clipped);
    }
    mean /= samples as f64;

    // Standard error of the mean vector: sqrt(sum_k Var_k / M).
    let mut var_sum = 0.0;
    for k in 0..dim {
        let m = mean[k];
        let v: f64 = draws.iter().map(|g| (g[k] - m) * (g[k] - m)).sum::<f64>()
            / (samples.saturating_sub(1)).max(1) as f64;
        var_sum += v;
    }
    let bias_se = (var_sum / samples as f64).sqrt();
    let bias_norm = (&mean - &grad).mapv(|v| v * v).sum().sqrt();

    let fluct_sq: Vec<f64> = draws
        .iter()
        .map(|g| (g - &mean).mapv(|v| v * v).sum())
        .collect();
    let fluct_sq_mean = fluct_sq.iter().sum::<f64>() / samples as f64;
    let fluct_var = fluct_sq
        .iter()
        .map(|v| (v - fluct_sq_mean) * (v - fluct_sq_mean))
        .sum::<f64>()
        / (samples.saturating_sub(1)).max(1) as f64;
    let fluct_sq_se = (fluct_var / samples as f64).sqrt();
    let max_fluct_norm = fluct_sq.iter().copied().fold(0.0f64, f64::max).sqrt();

    let p = oracle.noise().tail_p;
    let sigma_p = oracle.noise().sigma_p.powf(p);
    Ok(ClipDecomposition {
        samples,
        lambda,
        bias_norm,
        bias_bound: 4.0 * sigma_p * lambda.powf(1.0 - p),
        bias_se,
        fluct_sq_mean,
        fluct_sq_bound: 16.0 * sigma_p * lambda.powf(2.0 - p),
        fluct_sq_se,
        max_fluct_norm,
    })
}

/// Realized-versus-bound pair for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundComparison {
    pub realized: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighProbabilityReport {
    pub runs: usize,
    pub successes: usize,
    pub fraction: f64,
    pub threshold: f64,
    pub delta: f64,
    pub pass: bool,
}

/// Fraction of runs whose realized value stays under the bound, tested
/// against 1 - delta with two binomial standard deviations of slack.
pub fn high_probability_check(outcomes: &[BoundComparison], delta: f64) -> HighProbabilityReport {
    let runs = outcomes.len();
    let successes = outcomes.iter().filter(|o| o.realized <= o.bound).count();
    let fraction = if runs == 0 {
        0.0
    } else {
        successes as f64 / runs as f64
    };
    let slack = if runs == 0 {
        0.0
    } else {
        2.0 * (delta * (1.0 - delta) / runs as f64).sqrt()
    };
    let threshold = 1.0 - delta - slack;
    HighProbabilityReport {
        runs,
        successes,
        fraction,
        threshold,
        delta,
        pass: fraction >= threshold,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCheck {
    pub slope: f64,
    pub target: f64,
    pub margin: f64,
    pub limit: f64,
    pub pass: bool,
}

/// Compare the fitted log-log slope of a cumulative series against the
/// predicted exponent (1+p)/(2p), with a fixed margin absorbing the path
/// contribution and a 0.95 sublinearity cap.
pub fn corollary_rate_check(
    series: &[f64],
    tail_p: f64,
    window: (usize, usize),
) -> Result<RateCheck> {
    let slope = sublinearity_slope(series, window.0, window.1)?;
    let target = (1.0 + tail_p) / (2.0 * tail_p);
    let margin = 0.15;
    let limit = (target + margin).min(0.95);
    Ok(RateCheck {
        slope,
        target,
        margin,
        limit,
        pass: slope <= limit,
    })
}
