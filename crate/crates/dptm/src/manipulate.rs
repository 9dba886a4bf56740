//! Progressive latent manipulation: pull unlabeled samples toward an
//! assigned class while anchoring their low-frequency structure.
//!
//! One sample runs through these stages:
//!
//!   1. init: z0 = mix_bands(x_u, fresh noise, H_init) keeps the sample's
//!      low band and randomizes the rest;
//!   2. lift: z_T = forward_noise(z0, t_max);
//!   3. per level pair (t -> t_prev), all with t_prev >= 1:
//!        a. guided reverse step to t_prev,
//!        b. inversion back up to t (prediction taken at the lower level),
//!        c. re-noise the init to level t with fresh noise,
//!        d. splice: low band from (c), high band from (b),
//!        e. guided reverse step of the splice down to t_prev;
//!   4. a final plain guided step from the last level to 0.
//!
//! Randomness per sample is an isolated named stream, so a batch gives
//! byte-identical results at any thread count.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::freq::{mix_bands, FrequencyMask};
use crate::grid::Grid;
use crate::oracle::{ClassCondition, MixtureWorld};
use crate::rng::stream_indexed;
use crate::sampler::{ddim_invert_step, ddim_step, guided_eps, GuidanceConfig};
use crate::schedule::NoiseSchedule;

/// Settings for the manipulation pipeline. Band cutoffs are radii in FFT
/// bins; a negative cutoff passes nothing and a cutoff at or above
/// n*sqrt(2)/2 passes everything.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManipulationConfig {
    pub guidance: GuidanceConfig,
    /// Cutoff of the init splice (stage 1).
    pub rho_init: f64,
    /// Cutoff of the per-level anchor splice (stage 3d).
    pub rho_mix: f64,
}

impl Default for ManipulationConfig {
    fn default() -> Self {
        ManipulationConfig {
            guidance: GuidanceConfig::default(),
            rho_init: 2.0,
            rho_mix: 2.0,
        }
    }
}

impl ManipulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.guidance.validate()?;
        if !self.rho_init.is_finite() || !self.rho_mix.is_finite() {
            return Err(Error::config("band cutoffs must be finite"));
        }
        Ok(())
    }
}

/// Round-robin pseudo-labels over the largest multiple of `classes` that
/// fits: sample i gets label i mod classes. The residual tail is dropped
/// (with a warning) so every class receives the same count.
pub fn assign_labels(count: usize, classes: usize) -> Result<Vec<usize>> {
    if classes == 0 {
        return Err(Error::config("label assignment needs at least one class"));
    }
    let kept = (count / classes) * classes;
    if kept < count {
        log::warn!(
            "dropping {} of {} samples so each class gets an equal share",
            count - kept,
            count
        );
    }
    Ok((0..kept).map(|i| i % classes).collect())
}

/// Stage-1 init: keep the low band of `x_u`, fill the rest from a fresh
/// standard normal draw.
pub fn target_guided_init<R: Rng + ?Sized>(
    x_u: &Grid,
    h_init: &FrequencyMask,
    rng: &mut R,
) -> Result<Grid> {
    let fill = Grid::standard_normal(x_u.side(), rng)?;
    mix_bands(x_u, &fill, h_init)
}

/// Latent trajectory of one manipulated sample: `latents[i]` sits at noise
/// level `levels[i]`, starting at the top level and ending at 0.
#[derive(Debug, Clone)]
pub struct ManipulationTrace {
    /// Clean init before lifting (stage 1 output).
    pub init: Grid,
    pub levels: Vec<usize>,
    pub latents: Vec<Grid>,
}

fn manipulate_inner<R: Rng + ?Sized>(
    x_u: &Grid,
    label: usize,
    world: &MixtureWorld,
    schedule: &NoiseSchedule,
    cfg: &ManipulationConfig,
    rng: &mut R,
    mut trace: Option<&mut ManipulationTrace>,
) -> Result<Grid> {
    cfg.validate()?;
    if label >= world.classes() {
        return Err(Error::Index {
            context: "manipulation label",
            index: label,
            limit: world.classes(),
        });
    }
    if x_u.side() != world.side() {
        return Err(Error::Dimension {
            context: "manipulation input side",
            expected: world.side(),
            got: x_u.side(),
        });
    }
    let side = x_u.side();
    let h_init = FrequencyMask::low_pass(side, cfg.rho_init)?;
    let h_mix = FrequencyMask::low_pass(side, cfg.rho_mix)?;
    let cond = ClassCondition::Class(label);
    let gamma1 = cfg.guidance.gamma1;

    let z0 = target_guided_init(x_u, &h_init, rng)?;
    let indices = schedule.step_indices(cfg.guidance.steps)?;
    let t_top = indices[0];
    let lift_noise = Grid::standard_normal(side, rng)?;
    let mut z = schedule.forward_noise(&z0, t_top, &lift_noise)?;

    if let Some(tr) = trace.as_deref_mut() {
        tr.init = z0.clone();
        tr.levels.clear();
        tr.latents.clear();
        tr.levels.push(t_top);
        tr.latents.push(z.clone());
    }

    for pair in indices.windows(2) {
        let (t, t_prev) = (pair[0], pair[1]);
        let eps_down = guided_eps(world, &z, t, cond, gamma1, schedule)?;
        let stepped = ddim_step(&z, t, t_prev, &eps_down, schedule)?;
        let lifted = ddim_invert_step(&stepped, t, t_prev, cond, &cfg.guidance, world, schedule)?;
        let anchor_noise = Grid::standard_normal(side, rng)?;
        let anchor = schedule.forward_noise(&z0, t, &anchor_noise)?;
        let spliced = mix_bands(&anchor, &lifted, &h_mix)?;
        let eps_final = guided_eps(world, &spliced, t, cond, gamma1, schedule)?;
        z = ddim_step(&spliced, t, t_prev, &eps_final, schedule)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.levels.push(t_prev);
            tr.latents.push(z.clone());
        }
    }

    let t_last = *indices.last().unwrap();
    let eps = guided_eps(world, &z, t_last, cond, gamma1, schedule)?;
    let out = ddim_step(&z, t_last, 0, &eps, schedule)?;
    if let Some(tr) = trace.as_deref_mut() {
        tr.levels.push(0);
        tr.latents.push(out.clone());
    }
    Ok(out)
}

/// Manipulate one sample toward `label`. Draws from `rng` in a fixed order:
/// init fill, lift noise, then one anchor noise per level pair.
pub fn manipulate_sample<R: Rng + ?Sized>(
    x_u: &Grid,
    label: usize,
    world: &MixtureWorld,
    schedule: &NoiseSchedule,
    cfg: &ManipulationConfig,
    rng: &mut R,
) -> Result<Grid> {
    manipulate_inner(x_u, label, world, schedule, cfg, rng, None)
}

/// Same as `manipulate_sample`, additionally recording the latent at every
/// visited level.
pub fn manipulate_sample_traced<R: Rng + ?Sized>(
    x_u: &Grid,
    label: usize,
    world: &MixtureWorld,
    schedule: &NoiseSchedule,
    cfg: &ManipulationConfig,
    rng: &mut R,
) -> Result<(Grid, ManipulationTrace)> {
    let mut trace = ManipulationTrace {
        init: Grid::zeros(x_u.side())?,
        levels: Vec::new(),
        latents: Vec::new(),
    };
    let out = manipulate_inner(x_u, label, world, schedule, cfg, rng, Some(&mut trace))?;
    Ok((out, trace))
}

/// Manipulate a batch in parallel. Sample `l` uses the isolated stream
/// ("sample", l) derived from `seed`, so results do not depend on thread
/// count or scheduling. Optionally records the first sample's trajectory.
pub fn manipulate_set(
    samples: &[Grid],
    labels: &[usize],
    world: &MixtureWorld,
    schedule: &NoiseSchedule,
    cfg: &ManipulationConfig,
    seed: u64,
    capture_first_trace: bool,
) -> Result<(Vec<(Grid, usize)>, Option<ManipulationTrace>)> {
    if samples.len() != labels.len() {
        return Err(Error::Dimension {
            context: "manipulation labels",
            expected: samples.len(),
            got: labels.len(),
        });
    }
    let outputs: Vec<Result<(Grid, usize, Option<ManipulationTrace>)>> = samples
        .par_iter()
        .zip(labels.par_iter())
        .enumerate()
        .map(|(l, (x, &label))| {
            let mut rng = stream_indexed(seed, "sample", l as u64);
            if l == 0 && capture_first_trace {
                let (g, tr) =
                    manipulate_sample_traced(x, label, world, schedule, cfg, &mut rng)?;
                Ok((g, label, Some(tr)))
            } else {
                let g = manipulate_sample(x, label, world, schedule, cfg, &mut rng)?;
                Ok((g, label, None))
            }
        })
        .collect();

    let mut set = Vec::with_capacity(samples.len());
    let mut first_trace = None;
    for out in outputs {
        let (g, label, tr) = out?;
        if let Some(tr) = tr {
            first_trace = Some(tr);
        }
        set.push((g, label));
    }
    Ok((set, first_trace))
}
