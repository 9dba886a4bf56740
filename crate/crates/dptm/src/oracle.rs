//! Closed-form denoising oracle over a Gaussian-mixture world.
//!
//! The world is a mixture of isotropic Gaussians, one component per
//! (class, domain) pair: x0 ~ sum_i w_i N(mu_i, s^2 I). Pushing that prior
//! through the forward process z_t = a x0 + sqrt(v) eps (a = sqrt(ab_t),
//! v = 1 - ab_t) keeps it a mixture, so the ideal denoiser has a closed form:
//!
//!   r_i(z)  ∝  w_i exp(-|z - a mu_i|^2 / (2 (a^2 s^2 + v)))      (responsibilities)
//!   E[x0|z] =  k z + (1 - k a) sum_i r_i mu_i,   k = a s^2 / (a^2 s^2 + v)
//!   eps(z)  =  (z - a E[x0|z]) / sqrt(v)
//!
//! which equals -sqrt(v) times the score of the noised marginal. Conditioning
//! on a class restricts the sum to that class's (class, domain) components;
//! the normalization shared by all responsibilities cancels, so conditional
//! and unconditional evaluation use the same code path.
//!
//! Responsibilities are computed via log-sum-exp, so evaluation stays finite
//! for latents far outside the data range.

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::schedule::NoiseSchedule;

/// What the denoiser is told about the class of the sample being denoised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassCondition {
    /// Restrict the mixture to one class's components (all domains).
    Class(usize),
    /// Use the full mixture.
    Unconditional,
}

/// Gaussian-mixture data world: one isotropic component per (class, domain).
#[derive(Debug, Clone)]
pub struct MixtureWorld {
    side: usize,
    classes: usize,
    domains: usize,
    sigma_data: f64,
    means: Vec<Grid>,  // index c * domains + d
    weights: Vec<f64>, // same indexing; nonnegative, sums to 1
}

impl MixtureWorld {
    /// World from explicit component means (indexed class-major: the mean of
    /// (class c, domain d) sits at c * domains + d) and mixture weights.
    pub fn new(
        classes: usize,
        domains: usize,
        means: Vec<Grid>,
        weights: Vec<f64>,
        sigma_data: f64,
    ) -> Result<Self> {
        if classes == 0 || domains == 0 {
            return Err(Error::validation("world needs >= 1 class and >= 1 domain"));
        }
        let count = classes * domains;
        if means.len() != count {
            return Err(Error::Dimension {
                context: "MixtureWorld::new means",
                expected: count,
                got: means.len(),
            });
        }
        if weights.len() != count {
            return Err(Error::Dimension {
                context: "MixtureWorld::new weights",
                expected: count,
                got: weights.len(),
            });
        }
        let side = means[0].side();
        if means.iter().any(|m| m.side() != side) {
            return Err(Error::validation("component means differ in grid side"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation("mixture weights must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!(
                "mixture weights must sum to 1 (got {total})"
            )));
        }
        if !sigma_data.is_finite() || sigma_data < 0.0 {
            return Err(Error::validation("sigma_data must be finite and >= 0"));
        }
        Ok(MixtureWorld {
            side,
            classes,
            domains,
            sigma_data,
            means,
            weights,
        })
    }

    /// World with uniform component weights.
    pub fn with_uniform_weights(
        classes: usize,
        domains: usize,
        means: Vec<Grid>,
        sigma_data: f64,
    ) -> Result<Self> {
        let w = 1.0 / (classes * domains) as f64;
        Self::new(classes, domains, means, vec![w; classes * domains], sigma_data)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn domains(&self) -> usize {
        self.domains
    }

    pub fn sigma_data(&self) -> f64 {
        self.sigma_data
    }

    /// Mean of component (class, domain).
    pub fn mean(&self, class: usize, domain: usize) -> Result<&Grid> {
        let idx = self.component_index(class, domain)?;
        Ok(&self.means[idx])
    }

    pub fn weight(&self, class: usize, domain: usize) -> Result<f64> {
        let idx = self.component_index(class, domain)?;
        Ok(self.weights[idx])
    }

    fn component_index(&self, class: usize, domain: usize) -> Result<usize> {
        if class >= self.classes {
            return Err(Error::Index {
                context: "MixtureWorld class",
                index: class,
                limit: self.classes,
            });
        }
        if domain >= self.domains {
            return Err(Error::Index {
                context: "MixtureWorld domain",
                index: domain,
                limit: self.domains,
            });
        }
        Ok(class * self.domains + domain)
    }

    /// Contiguous component range selected by a condition.
    fn component_range(&self, cond: ClassCondition) -> Result<std::ops::Range<usize>> {
        match cond {
            ClassCondition::Unconditional => Ok(0..self.classes * self.domains),
            ClassCondition::Class(c) => {
                if c >= self.classes {
                    return Err(Error::Index {
                        context: "ClassCondition::Class",
                        index: c,
                        limit: self.classes,
                    });
                }
                Ok(c * self.domains..(c + 1) * self.domains)
            }
        }
    }

    /// Draw one sample from component (class, domain).
    pub fn sample_data(&self, class: usize, domain: usize, rng: &mut (impl Rng + ?Sized)) -> Result<Grid> {
        let mean = self.mean(class, domain)?.clone();
        if self.sigma_data == 0.0 {
            return Ok(mean);
        }
        let noise = Grid::standard_normal(self.side, rng)?;
        mean.affine(1.0, &noise, self.sigma_data)
    }

    fn check_latent(&self, z: &Grid, context: &'static str) -> Result<()> {
        if z.side() != self.side {
            return Err(Error::Dimension {
                context,
                expected: self.side,
                got: z.side(),
            });
        }
        Ok(())
    }

    /// Posterior responsibilities of the selected components at noise level t.
    fn responsibilities(
        &self,
        z: &Grid,
        t: usize,
        cond: ClassCondition,
        schedule: &NoiseSchedule,
    ) -> Result<(Vec<f64>, std::ops::Range<usize>, f64, f64)> {
        if t == 0 || t > schedule.t_train() {
            return Err(Error::Index {
                context: "oracle noise level (1..=t_train)",
                index: t,
                limit: schedule.t_train(),
            });
        }
        self.check_latent(z, "oracle latent")?;
        let range = self.component_range(cond)?;
        let ab = schedule.alpha_bar(t)?;
        let a = ab.sqrt();
        let v = 1.0 - ab;
        let s2 = self.sigma_data * self.sigma_data;
        let marginal_var = a * a * s2 + v;

        let mut logs = Vec::with_capacity(range.len());
        for i in range.clone() {
            let w = self.weights[i];
            if w == 0.0 {
                logs.push(f64::NEG_INFINITY);
                continue;
            }
            let diff = z.affine(1.0, &self.means[i], -a)?;
            let d2 = diff.dot(&diff)?;
            logs.push(w.ln() - d2 / (2.0 * marginal_var));
        }
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::validation(
                "all selected mixture components have zero weight",
            ));
        }
        let mut resp: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = resp.iter().sum();
        resp.iter_mut().for_each(|r| *r /= total);
        Ok((resp, range, a, v))
    }

    /// Exact posterior mean E[x0 | z_t] under the selected sub-mixture.
    pub fn posterior_x0(
        &self,
        z: &Grid,
        t: usize,
        cond: ClassCondition,
        schedule: &NoiseSchedule,
    ) -> Result<Grid> {
        let (resp, range, a, v) = self.responsibilities(z, t, cond, schedule)?;
        let s2 = self.sigma_data * self.sigma_data;
        let k = a * s2 / (a * a * s2 + v);

        // E[x0|z] = k z + (1 - k a) sum_i r_i mu_i
        let mut mean_mix = Grid::zeros(self.side)?;
        for (r, i) in resp.iter().zip(range) {
            if *r > 0.0 {
                mean_mix.add_scaled_assign(*r, &self.means[i])?;
            }
        }
        let mut out = z.scaled(k);
        out.add_scaled_assign(1.0 - k * a, &mean_mix)?;
        Ok(out)
    }

    /// Ideal noise prediction eps(z_t) = (z_t - a E[x0|z_t]) / sqrt(v);
    /// equals -sqrt(v) times the score of the noised marginal.
    pub fn eps(
        &self,
        z: &Grid,
        t: usize,
        cond: ClassCondition,
        schedule: &NoiseSchedule,
    ) -> Result<Grid> {
        let ab = schedule.alpha_bar(t)?;
        let x0 = self.posterior_x0(z, t, cond, schedule)?;
        let a = ab.sqrt();
        let v = 1.0 - ab;
        if v <= 0.0 {
            return Err(Error::Index {
                context: "oracle eps noise level (1..=t_train)",
                index: t,
                limit: schedule.t_train(),
            });
        }
        z.affine(1.0 / v.sqrt(), &x0, -a / v.sqrt())
    }

    /// Data-space Bayes class posterior p(class | x); requires sigma_data > 0.
    pub fn class_posterior(&self, x: &Grid) -> Result<Vec<f64>> {
        self.check_latent(x, "class_posterior input")?;
        if self.sigma_data <= 0.0 {
            return Err(Error::validation(
                "class_posterior needs sigma_data > 0 (degenerate likelihood otherwise)",
            ));
        }
        let s2 = self.sigma_data * self.sigma_data;
        let mut class_logs = vec![f64::NEG_INFINITY; self.classes];
        for c in 0..self.classes {
            for d in 0..self.domains {
                let i = c * self.domains + d;
                let w = self.weights[i];
                if w == 0.0 {
                    continue;
                }
                let diff = x.sub(&self.means[i])?;
                let l = w.ln() - diff.dot(&diff)? / (2.0 * s2);
                class_logs[c] = log_add(class_logs[c], l);
            }
        }
        let max = class_logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = class_logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(probs)
    }

    /// Bayes-optimal class assignment; ties resolve to the lowest index.
    pub fn bayes_classify(&self, x: &Grid) -> Result<usize> {
        let probs = self.class_posterior(x)?;
        Ok(argmax_lowest(&probs))
    }
}

/// log(exp(a) + exp(b)) without overflow.
fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Index of the largest value; ties break to the lowest index.
pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
