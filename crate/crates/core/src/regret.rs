//! Performance measures computed from traces: dynamic regrets, path length,
//! function variation, and log-log slope fits. Regrets always use the exact
//! objectives, never the noisy oracle.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::problem::ProblemSeq;
use crate::sim::RunTrace;

/// Accumulated measures for one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretLedger {
    /// Cumulative dynamic regret at round t (index t-1).
    pub dynamic: Vec<f64>,
    /// Cumulative squared-gradient regret at round t.
    pub nonconvex: Vec<f64>,
    /// Path length C_T of the minimizer sequence.
    pub path: f64,
    /// Function variation D_T; populated only when requested (the quartic
    /// supremum is grid-priced).
    pub variation: Option<f64>,
    /// Per-round disagreement of the decision states x_1..x_T.
    pub disagreement: Vec<f64>,
}

impl RegretLedger {
    pub fn compute(
        trace: &RunTrace,
        problem: &dyn ProblemSeq,
        with_variation: bool,
    ) -> Result<Self> {
        let horizon = trace.horizon();
        let minimizers: Vec<Array1<f64>> = (1..=horizon)
            .map(|t| problem.minimizer(t))
            .collect::<Result<_>>()?;
        Ok(Self {
            dynamic: dynamic_regret(trace, problem)?,
            nonconvex: nonconvex_regret(trace, problem),
            path: path_length(&minimizers),
            variation: with_variation.then(|| function_variation(problem)),
            disagreement: trace.disagreement[..horizon].to_vec(),
        })
    }

    pub fn final_dynamic(&self) -> f64 {
        *self.dynamic.last().unwrap_or(&0.0)
    }

    pub fn final_nonconvex(&self) -> f64 {
        *self.nonconvex.last().unwrap_or(&0.0)
    }
}

/// Partial sums over t of sum_i [f_t(x_{i,t}) - f_t(x*_t)]; every agent is
/// charged against the global objective and its per-round minimizer.
pub fn dynamic_regret(trace: &RunTrace, problem: &dyn ProblemSeq) -> Result<Vec<f64>> {
    let n = trace.agents();
    let mut series = Vec::with_capacity(trace.horizon());
    let mut acc = 0.0;
    for t in 1..=trace.horizon() {
        let star = problem.minimizer(t)?;
        let f_star = problem.global_value(t, star.view());
        let states = trace.state_at(t);
        for i in 0..n {
            acc += problem.global_value(t, states.row(i)) - f_star;
        }
        series.push(acc);
    }
    Ok(series)
}

/// Partial sums over t of sum_i ||grad f_t(x_{i,t})||^2.
pub fn nonconvex_regret(trace: &RunTrace, problem: &dyn ProblemSeq) -> Vec<f64> {
    let n = trace.agents();
    let mut series = Vec::with_capacity(trace.horizon());
    let mut acc = 0.0;
    for t in 1..=trace.horizon() {
        let states = trace.state_at(t);
        for i in 0..n {
            let g = problem.global_grad(t, states.row(i));
            acc += g.iter().map(|v| v * v).sum::<f64>();
        }
        series.push(acc);
    }
    series
}

/// C_T = sum over consecutive pairs of ||x*_t - x*_{t-1}||.
pub fn path_length(minimizers: &[Array1<f64>]) -> f64 {
    minimizers
        .windows(2)
        .map(|w| (&w[1] - &w[0]).mapv(|v| v * v).sum().sqrt())
        .sum()
}

/// D_T = sum_{t=2..T} sup_x |f_t(x) - f_{t-1}(x)|.
pub fn function_variation(problem: &dyn ProblemSeq) -> f64 {
    (2..=problem.horizon())
        .map(|t| problem.variation_increment(t))
        .sum()
}

/// Least-squares slope of log(series[t]) against log(t) over [t_lo, t_hi]
/// (1-based, inclusive).
pub fn sublinearity_slope(series: &[f64], t_lo: usize, t_hi: usize) -> Result<f64> {
    if !(1 <= t_lo && t_lo < t_hi && t_hi <= series.len()) {
        return Err(Error::Validation(format!(
            "slope window [{t_lo}, {t_hi}] out of range for series of length {}",
            series.len()
        )));
    }
    let mut xs = Vec::with_capacity(t_hi - t_lo + 1);
    let mut ys = Vec::with_capacity(t_hi - t_lo + 1);
    for t in t_lo..=t_hi {
        let v = series[t - 1];
        if v <= 0.0 {
            return Err(Error::NonPositiveSeries);
        }
        xs.push((t as f64).ln());
        ys.push(v.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(cov / var)
}
