//! Classifier-free guidance and deterministic DDIM stepping / inversion.
//!
//! Guidance blends conditional and unconditional noise predictions:
//!
//!   eps_bar = (1 + gamma) * eps_cond - gamma * eps_uncond
//!
//! The deterministic reverse step between two levels t > t_prev is
//!
//!   x0_hat = (z_t - sqrt(1 - ab_t) eps_bar) / sqrt(ab_t)
//!   z_prev = sqrt(ab_prev) x0_hat + sqrt(1 - ab_prev) eps_bar
//!
//! and inversion runs the same two-line algebra backwards with the noise
//! prediction evaluated at the lower level (z_prev, t_prev) — a first-order
//! approximation whose round-trip error shrinks like 1/steps. With a frozen
//! noise field the two directions are exact mutual inverses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::oracle::{ClassCondition, MixtureWorld};
use crate::schedule::NoiseSchedule;

/// Guidance scales and the inference step count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    /// Scale applied when denoising.
    pub gamma1: f64,
    /// Scale applied when inverting.
    pub gamma2: f64,
    /// Number of inference levels (uniform-stride subsequence).
    pub steps: usize,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        GuidanceConfig {
            gamma1: 5.5,
            gamma2: 0.0,
            steps: 20,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma1.is_finite() || !self.gamma2.is_finite() {
            return Err(Error::config("guidance scales must be finite"));
        }
        if self.steps == 0 {
            return Err(Error::config("guidance.steps must be >= 1"));
        }
        Ok(())
    }
}

/// Guided noise prediction from its two branches.
pub fn cfg_eps(eps_cond: &Grid, eps_uncond: &Grid, gamma: f64) -> Result<Grid> {
    if !gamma.is_finite() {
        return Err(Error::config("guidance scale must be finite"));
    }
    eps_cond.affine(1.0 + gamma, eps_uncond, -gamma)
}

/// Evaluate the oracle's guided noise prediction at (z, t). Skips the
/// unconditional branch when gamma == 0 (the blend is then the conditional
/// prediction itself).
pub fn guided_eps(
    world: &MixtureWorld,
    z: &Grid,
    t: usize,
    cond: ClassCondition,
    gamma: f64,
    schedule: &NoiseSchedule,
) -> Result<Grid> {
    let eps_cond = world.eps(z, t, cond, schedule)?;
    if gamma == 0.0 {
        return Ok(eps_cond);
    }
    let eps_uncond = world.eps(z, t, ClassCondition::Unconditional, schedule)?;
    cfg_eps(&eps_cond, &eps_uncond, gamma)
}

fn check_pair(schedule: &NoiseSchedule, t: usize, t_prev: usize) -> Result<(f64, f64)> {
    if t <= t_prev {
        return Err(Error::Ordering { t, t_prev });
    }
    let ab = schedule.alpha_bar(t)?;
    let ab_prev = schedule.alpha_bar(t_prev)?;
    Ok((ab, ab_prev))
}

/// Deterministic reverse step t -> t_prev under a given noise prediction.
/// At t_prev = 0 this returns the clean-sample prediction x0_hat itself.
pub fn ddim_step(
    z_t: &Grid,
    t: usize,
    t_prev: usize,
    eps_bar: &Grid,
    schedule: &NoiseSchedule,
) -> Result<Grid> {
    let (ab, ab_prev) = check_pair(schedule, t, t_prev)?;
    let x0_hat = z_t.affine(1.0 / ab.sqrt(), eps_bar, -(1.0 - ab).sqrt() / ab.sqrt())?;
    x0_hat.affine(ab_prev.sqrt(), eps_bar, (1.0 - ab_prev).sqrt())
}

/// Inverse of `ddim_step` under a frozen noise field: lifts z_prev at t_prev
/// back to level t. Pure algebra; the caller supplies eps.
pub fn ddim_invert_step_with_eps(
    z_prev: &Grid,
    t: usize,
    t_prev: usize,
    eps: &Grid,
    schedule: &NoiseSchedule,
) -> Result<Grid> {
    let (ab, ab_prev) = check_pair(schedule, t, t_prev)?;
    let x0_hat = z_prev.affine(
        1.0 / ab_prev.sqrt(),
        eps,
        -(1.0 - ab_prev).sqrt() / ab_prev.sqrt(),
    )?;
    x0_hat.affine(ab.sqrt(), eps, (1.0 - ab).sqrt())
}

/// First-order DDIM inversion: lifts z_prev from t_prev to t using the
/// oracle's guided prediction evaluated at the lower level (z_prev, t_prev)
/// with scale gamma2. Requires t_prev >= 1 (the oracle is undefined at 0).
pub fn ddim_invert_step(
    z_prev: &Grid,
    t: usize,
    t_prev: usize,
    cond: ClassCondition,
    guidance: &GuidanceConfig,
    world: &MixtureWorld,
    schedule: &NoiseSchedule,
) -> Result<Grid> {
    if t_prev == 0 {
        return Err(Error::Index {
            context: "ddim_invert_step t_prev (needs >= 1)",
            index: 0,
            limit: schedule.t_train(),
        });
    }
    let eps = guided_eps(world, z_prev, t_prev, cond, guidance.gamma2, schedule)?;
    ddim_invert_step_with_eps(z_prev, t, t_prev, &eps, schedule)
}

/// Walk a strictly decreasing level subsequence from its top entry down to a
/// clean sample, applying the guided reverse step at every pair and a final
/// step to level 0.
pub fn guided_denoise_chain(
    world: &MixtureWorld,
    z_start: &Grid,
    indices: &[usize],
    cond: ClassCondition,
    gamma: f64,
    schedule: &NoiseSchedule,
) -> Result<Grid> {
    if indices.is_empty() {
        return Err(Error::validation("denoise chain needs at least one level"));
    }
    let mut z = z_start.clone();
    for pair in indices.windows(2) {
        let eps = guided_eps(world, &z, pair[0], cond, gamma, schedule)?;
        z = ddim_step(&z, pair[0], pair[1], &eps, schedule)?;
    }
    let t_last = *indices.last().unwrap();
    let eps = guided_eps(world, &z, t_last, cond, gamma, schedule)?;
    ddim_step(&z, t_last, 0, &eps, schedule)
}
