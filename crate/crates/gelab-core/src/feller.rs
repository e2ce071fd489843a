//! Reference samplers for the limiting branching diffusion `dZ = sqrt(Z) dW`
//! and its drifted variant `dZ = (mu + linear*Z) dt + sqrt(Z) dW`.
//!
//! The exact transition sampler comes from the transform
//! `E[e^{-lambda Z_t}] = exp(-z lambda / (1 + lambda t / 2))`, which is the
//! transform of a compound distribution: `K ~ Poisson(2z/t)` exponentials of
//! mean `t/2` (zero when `K = 0`). The Euler scheme is an independent
//! cross-check with full truncation at zero.

use crate::error::ModelError;
use crate::model::ModelParams;
use crate::rng::SimRng;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionParams {
    pub z0: f64,
    pub mu: f64,
    /// Coefficient of `Z` in the drift.
    pub linear: f64,
}

impl DiffusionParams {
    /// Driftless critical diffusion started at `z0`.
    pub fn critical(z0: f64) -> Self {
        Self {
            z0,
            mu: 0.0,
            linear: 0.0,
        }
    }

    /// Drift implied by the extended jump model's rates: immigration `mu`,
    /// linear coefficient `nu - beta - alpha`.
    pub fn from_model(z0: f64, params: &ModelParams) -> Self {
        Self {
            z0,
            mu: params.mu,
            linear: params.nu - params.beta - params.alpha,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.z0.is_finite() || self.z0 < 0.0 {
            return Err(ModelError::InvalidRate {
                name: "z0",
                value: self.z0,
            });
        }
        for (name, value) in [("mu", self.mu), ("linear", self.linear)] {
            if !value.is_finite() {
                return Err(ModelError::InvalidRate { name, value });
            }
        }
        Ok(())
    }
}

/// Laplace transform of the exact transition law.
pub fn feller_laplace(z: f64, t: f64, lambda: f64) -> f64 {
    (-z * lambda / (1.0 + lambda * t / 2.0)).exp()
}

/// Probability the path is extinct by time `t`.
pub fn feller_extinction_prob(z: f64, t: f64) -> f64 {
    (-2.0 * z / t).exp()
}

/// Draw from the exact transition law at time `t` started from `z`.
pub fn feller_exact_sample(z: f64, t: f64, rng: &mut SimRng) -> Result<f64, ModelError> {
    if !t.is_finite() || t <= 0.0 {
        return Err(ModelError::InvalidRate {
            name: "t",
            value: t,
        });
    }
    if !z.is_finite() || z < 0.0 {
        return Err(ModelError::InvalidRate {
            name: "z",
            value: z,
        });
    }
    if z == 0.0 {
        return Ok(0.0);
    }
    let k = Poisson::new(2.0 * z / t)
        .map_err(|_| ModelError::InvalidRate {
            name: "z",
            value: z,
        })?
        .sample(rng) as u64;
    let mut total = 0.0;
    for _ in 0..k {
        let e: f64 = rng.sample(Exp1);
        total += e * (t / 2.0);
    }
    Ok(total)
}

fn check_em_args(t_end: f64, dt: f64) -> Result<u64, ModelError> {
    if !t_end.is_finite() || t_end <= 0.0 {
        return Err(ModelError::BadHorizon(t_end));
    }
    if !dt.is_finite() || dt <= 0.0 || dt > t_end / 100.0 {
        return Err(ModelError::DtTooCoarse { dt, t_end });
    }
    Ok((t_end / dt).ceil() as u64)
}

fn em_step(z: f64, mu: f64, linear: f64, h: f64, sqrt_h: f64, rng: &mut SimRng) -> f64 {
    let clamped = z.max(0.0);
    let noise: f64 = rng.sample(StandardNormal);
    (z + (mu + linear * clamped) * h + clamped.sqrt() * sqrt_h * noise).max(0.0)
}

/// Full-truncation Euler path of the critical diffusion on a uniform grid of
/// at least 100 steps; returns the path including both endpoints.
pub fn feller_em_path(
    z: f64,
    t_end: f64,
    dt: f64,
    rng: &mut SimRng,
) -> Result<Vec<f64>, ModelError> {
    DiffusionParams::critical(z).validate()?;
    let steps = check_em_args(t_end, dt)?;
    let h = t_end / steps as f64;
    let sqrt_h = h.sqrt();
    let mut path = Vec::with_capacity(steps as usize + 1);
    let mut state = z;
    path.push(state);
    for _ in 0..steps {
        state = em_step(state, 0.0, 0.0, h, sqrt_h, rng);
        path.push(state);
    }
    Ok(path)
}

/// Endpoint of the drifted diffusion under the same full-truncation Euler
/// scheme; with zero drift it consumes the RNG identically to
/// [`feller_em_path`].
pub fn drifted_feller_em(
    params: &DiffusionParams,
    t_end: f64,
    dt: f64,
    rng: &mut SimRng,
) -> Result<f64, ModelError> {
    params.validate()?;
    let steps = check_em_args(t_end, dt)?;
    let h = t_end / steps as f64;
    let sqrt_h = h.sqrt();
    let mut state = params.z0;
    for _ in 0..steps {
        state = em_step(state, params.mu, params.linear, h, sqrt_h, rng);
    }
    Ok(state)
}
