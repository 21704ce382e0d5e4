//! Heavy- and light-tailed gradient noise and the stochastic oracle built on
//! top of a problem sequence.
//!
//! All samplers are pure given an explicit stream, so per-(agent, step)
//! substreams can run concurrently without sharing state.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ProblemSeq;
use crate::rng::Stream;

/// E|X|^1.5 for the standard t2 distribution, fixed by quadrature of the
/// density (cross-checked against 2^(p/2) Gamma((p+1)/2) Gamma(1-p/2)/sqrt(pi)).
pub const T2_ABS_MOMENT_P15: f64 = 3.118_169_499_510_822_4;

/// Default moment certificate sigma for unit-scale t2 at p = 1.5, i.e.
/// (E|X|^1.5)^(1/1.5).
pub const T2_SIGMA_P15: f64 = 2.134_354_133_179_910_8;

/// Tail index of the symmetrized Lomax sampler; matches t2's tail so p-th
/// moments are finite exactly for p < 2.
const PARETO_SHAPE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Gaussian,
    StudentT2,
    ParetoSymmetric,
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            NoiseKind::None => "none",
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::StudentT2 => "student_t2",
            NoiseKind::ParetoSymmetric => "pareto_symmetric",
        };
        f.write_str(s)
    }
}

/// Additive zero-median noise with a certified finite p-th moment:
/// E|xi|^tail_p <= sigma_p^tail_p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub scale: f64,
    pub tail_p: f64,
    pub sigma_p: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            scale: 0.0,
            tail_p: 2.0,
            sigma_p: 0.0,
        }
    }

    pub fn gaussian(scale: f64) -> Self {
        Self {
            kind: NoiseKind::Gaussian,
            scale,
            tail_p: 2.0,
            sigma_p: scale,
        }
    }

    pub fn student_t2(scale: f64) -> Self {
        Self {
            kind: NoiseKind::StudentT2,
            scale,
            tail_p: 1.5,
            sigma_p: scale * T2_SIGMA_P15,
        }
    }

    pub fn pareto_symmetric(scale: f64) -> Self {
        // E|X|^1.5 = (3/2) B(3/2, 1/2) = 3 pi / 4 for the unit symmetrized
        // Lomax with tail index 2.
        let sigma = (3.0 * std::f64::consts::PI / 4.0).powf(1.0 / 1.5);
        Self {
            kind: NoiseKind::ParetoSymmetric,
            scale,
            tail_p: 1.5,
            sigma_p: scale * sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == NoiseKind::None {
            return Ok(());
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Validation(format!(
                "noise scale must be positive, got {}",
                self.scale
            )));
        }
        if !(self.tail_p > 1.0 && self.tail_p <= 2.0) {
            return Err(Error::Validation(format!(
                "tail_p must lie in (1,2], got {}",
                self.tail_p
            )));
        }
        if !(self.sigma_p > 0.0 && self.sigma_p.is_finite()) {
            return Err(Error::Validation(format!(
                "sigma_p must be positive and finite, got {}",
                self.sigma_p
            )));
        }
        // Infinite-variance kinds cannot certify a second moment.
        if matches!(self.kind, NoiseKind::StudentT2 | NoiseKind::ParetoSymmetric)
            && self.tail_p >= 2.0
        {
            return Err(Error::Validation(format!(
                "{} has infinite variance; tail_p must be < 2, got {}",
                self.kind, self.tail_p
            )));
        }
        Ok(())
    }

    /// One scalar draw, scaled.
    pub fn sample_scalar(&self, rng: &mut Stream) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian => self.scale * rng.sample::<f64, _>(StandardNormal),
            NoiseKind::StudentT2 => self.scale * sample_t2(rng),
            NoiseKind::ParetoSymmetric => self.scale * sample_pareto_symmetric(rng),
        }
    }
}

/// Draw from the Student-t distribution with 2 degrees of freedom via the
/// ratio construction: standard normal over sqrt(chi-square_2 / 2), with
/// chi-square_2 = -2 ln U.
pub fn sample_t2(rng: &mut Stream) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.random();
    z / (-u.ln()).sqrt()
}

/// Symmetrized, zero-shifted Pareto (Lomax) draw with tail index 2.
fn sample_pareto_symmetric(rng: &mut Stream) -> f64 {
    let u: f64 = rng.random();
    let magnitude = (1.0 - u).powf(-1.0 / PARETO_SHAPE) - 1.0;
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

/// t2 density (1/(2 sqrt 2)) (1 + x^2/2)^(-3/2).
pub fn t2_pdf(x: f64) -> f64 {
    (1.0 / (2.0 * std::f64::consts::SQRT_2)) * (1.0 + x * x / 2.0).powf(-1.5)
}

/// Closed-form t2 CDF: 1/2 + x / (2 sqrt(2 + x^2)).
pub fn t2_cdf(x: f64) -> f64 {
    0.5 + x / (2.0 * (2.0 + x * x).sqrt())
}

/// Vector of i.i.d. scaled coordinates; `none` is the zero vector.
pub fn sample_noise(model: &NoiseModel, dim: usize, rng: &mut Stream) -> Array1<f64> {
    if model.kind == NoiseKind::None {
        return Array1::zeros(dim);
    }
    Array1::from_iter((0..dim).map(|_| model.sample_scalar(rng)))
}

/// Monte-Carlo estimate of E|xi|^p for a scalar draw.
pub fn pth_moment_estimate(model: &NoiseModel, p: f64, samples: usize, rng: &mut Stream) -> f64 {
    if model.kind == NoiseKind::None {
        return 0.0;
    }
    let mut acc = 0.0;
    for _ in 0..samples {
        acc += model.sample_scalar(rng).abs().powf(p);
    }
    acc / samples as f64
}

/// Stochastic gradient oracle: true local gradient plus model noise.
///
/// For observation problems the noise enters along the agent's observation
/// axis; otherwise it is an isotropic additive vector.
pub struct GradientOracle<'a> {
    problem: &'a dyn ProblemSeq,
    noise: NoiseModel,
}

impl<'a> GradientOracle<'a> {
    pub fn new(problem: &'a dyn ProblemSeq, noise: NoiseModel) -> Self {
        Self { problem, noise }
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn problem(&self) -> &dyn ProblemSeq {
        self.problem
    }

    /// Unbiased noisy gradient of f_{i,t} at x.
    pub fn noisy_gradient(
        &self,
        i: usize,
        t: usize,
        x: ArrayView1<f64>,
        rng: &mut Stream,
    ) -> Array1<f64> {
        let mut grad = self.problem.local_grad(i, t, x);
        if self.noise.kind == NoiseKind::None {
            return grad;
        }
        match self.problem.observation_axis(i) {
            Some(axis) => {
                grad[axis] += self.noise.sample_scalar(rng);
                grad
            }
            None => {
                let noise = sample_noise(&self.noise, grad.len(), rng);
                grad + noise
            }
        }
    }
}
