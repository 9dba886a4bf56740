//! Linear-beta diffusion noise schedule and the forward (noising) process.
//!
//! The schedule stores cumulative signal levels
//!
//!   alpha_bar[0] = 1,   alpha_bar[t] = prod_{s=1..t} (1 - beta_s)
//!
//! with beta linearly spaced over the training horizon. The forward process
//! at level t is
//!
//!   z_t = sqrt(alpha_bar[t]) * x0 + sqrt(1 - alpha_bar[t]) * eps
//!
//! so signal^2 + noise^2 = 1 at every t. Reverse-time sampling visits a
//! strictly decreasing subsequence of levels chosen by uniform stride
//! (`step_indices`); both the sampler and the inversion walk the same
//! subsequence.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Default training horizon.
pub const DEFAULT_T_TRAIN: usize = 1000;
/// Default linear-beta endpoints.
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Cumulative-product noise schedule over a fixed training horizon.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    t_train: usize,
    beta_start: f64,
    beta_end: f64,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear-beta schedule. Requires 0 < beta_start <= beta_end < 1 and a
    /// horizon long enough that the terminal signal level alpha_bar[T] is
    /// below 1e-3 (otherwise "start from pure noise" would be a lie).
    pub fn linear(t_train: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_train == 0 {
            return Err(Error::config("schedule.t_train must be >= 1"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::config(format!(
                "schedule betas must satisfy 0 < beta_start <= beta_end < 1, \
                 got [{beta_start}, {beta_end}]"
            )));
        }
        let mut alpha_bar = Vec::with_capacity(t_train + 1);
        alpha_bar.push(1.0);
        let mut running = 1.0f64;
        for t in 1..=t_train {
            let frac = if t_train == 1 {
                0.0
            } else {
                (t - 1) as f64 / (t_train - 1) as f64
            };
            let beta = beta_start + (beta_end - beta_start) * frac;
            running *= 1.0 - beta;
            alpha_bar.push(running);
        }
        let terminal = alpha_bar[t_train];
        if terminal >= 1e-3 {
            return Err(Error::config(format!(
                "schedule is too short: alpha_bar[{t_train}] = {terminal:.3e} \
                 (must be < 1e-3)"
            )));
        }
        Ok(NoiseSchedule {
            t_train,
            beta_start,
            beta_end,
            alpha_bar,
        })
    }

    /// The default horizon (T = 1000, betas 1e-4 .. 0.02).
    pub fn default_linear() -> Self {
        Self::linear(DEFAULT_T_TRAIN, DEFAULT_BETA_START, DEFAULT_BETA_END)
            .expect("default schedule parameters are valid")
    }

    pub fn t_train(&self) -> usize {
        self.t_train
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    /// Cumulative signal level at t, for t in 0..=t_train.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar.get(t).copied().ok_or(Error::Index {
            context: "NoiseSchedule::alpha_bar",
            index: t,
            limit: self.t_train,
        })
    }

    /// sqrt(alpha_bar[t]): multiplier on the clean sample.
    pub fn signal_coeff(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bar(t)?.sqrt())
    }

    /// sqrt(1 - alpha_bar[t]): multiplier on the injected noise.
    pub fn noise_coeff(&self, t: usize) -> Result<f64> {
        Ok((1.0 - self.alpha_bar(t)?).sqrt())
    }

    /// Forward process: z_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps.
    pub fn forward_noise(&self, x0: &Grid, t: usize, noise: &Grid) -> Result<Grid> {
        let a = self.signal_coeff(t)?;
        let s = self.noise_coeff(t)?;
        x0.affine(a, noise, s)
    }

    /// Strictly decreasing inference subsequence of `steps` levels chosen by
    /// uniform stride over [1, t_train]; the first entry is t_train and, for
    /// steps >= 2, the last entry is 1.
    pub fn step_indices(&self, steps: usize) -> Result<Vec<usize>> {
        if steps == 0 {
            return Err(Error::config("steps must be >= 1"));
        }
        if steps > self.t_train {
            return Err(Error::config(format!(
                "steps ({steps}) exceeds the training horizon ({})",
                self.t_train
            )));
        }
        if steps == 1 {
            return Ok(vec![self.t_train]);
        }
        let stride = (self.t_train - 1) as f64 / (steps - 1) as f64;
        let mut out: Vec<usize> = (0..steps)
            .map(|i| 1 + (i as f64 * stride).round() as usize)
            .collect();
        out.reverse();
        debug_assert!(out.windows(2).all(|w| w[0] > w[1]));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_level_matches_hand_computation() {
        let s = NoiseSchedule::default_linear();
        // One step of beta_start only: alpha_bar[1] = 1 - 1e-4.
        assert_eq!(s.alpha_bar(1).unwrap(), 1.0 - 1e-4);
        assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
    }

    #[test]
    fn terminal_level_matches_log_space_oracle() {
        // Independent route: accumulate in log space instead of a running
        // product, then compare.
        let t_train = DEFAULT_T_TRAIN;
        let mut log_sum = 0.0f64;
        for t in 1..=t_train {
            let frac = (t - 1) as f64 / (t_train - 1) as f64;
            let beta = DEFAULT_BETA_START + (DEFAULT_BETA_END - DEFAULT_BETA_START) * frac;
            log_sum += (1.0 - beta).ln();
        }
        let oracle = log_sum.exp();
        let s = NoiseSchedule::default_linear();
        let got = s.alpha_bar(t_train).unwrap();
        assert!((got - oracle).abs() / oracle < 1e-12);
        assert!(
            (3.9e-5..4.1e-5).contains(&got),
            "terminal signal level {got:.3e}"
        );
    }

    #[test]
    fn levels_strictly_decrease_and_stay_in_range() {
        let s = NoiseSchedule::default_linear();
        for t in 1..=s.t_train() {
            let prev = s.alpha_bar(t - 1).unwrap();
            let cur = s.alpha_bar(t).unwrap();
            assert!(cur < prev);
            assert!(cur > 0.0 && cur < 1.0);
        }
    }

    #[test]
    fn signal_noise_squares_sum_to_one_exactly() {
        let s = NoiseSchedule::default_linear();
        for t in 0..=s.t_train() {
            let sig = s.signal_coeff(t).unwrap();
            let noi = s.noise_coeff(t).unwrap();
            let ab = s.alpha_bar(t).unwrap();
            // The stored quantities guarantee exactness at the alpha_bar
            // level; squaring the coefficients reproduces them to 1 ulp.
            assert_eq!(ab + (1.0 - ab), 1.0);
            assert!((sig * sig + noi * noi - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bad_parameters_are_config_errors() {
        assert!(NoiseSchedule::linear(0, 1e-4, 0.02).is_err());
        assert!(NoiseSchedule::linear(1000, 0.0, 0.02).is_err());
        assert!(NoiseSchedule::linear(1000, 0.03, 0.02).is_err());
        assert!(NoiseSchedule::linear(1000, 1e-4, 1.0).is_err());
        // Horizon too short to reach near-pure noise.
        assert!(NoiseSchedule::linear(10, 1e-4, 0.02).is_err());
    }

    #[test]
    fn forward_noise_at_zero_is_identity() {
        let s = NoiseSchedule::default_linear();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = Grid::standard_normal(8, &mut rng).unwrap();
        let eps = Grid::standard_normal(8, &mut rng).unwrap();
        let z = s.forward_noise(&x0, 0, &eps).unwrap();
        assert!(z.sub(&x0).unwrap().max_abs() <= 1e-15);
    }

    #[test]
    fn forward_noise_index_out_of_range() {
        let s = NoiseSchedule::default_linear();
        let x0 = Grid::zeros(4).unwrap();
        let eps = Grid::zeros(4).unwrap();
        assert!(matches!(
            s.forward_noise(&x0, 1001, &eps),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn forward_noise_statistics_match_monte_carlo() {
        // x0 = all ones, t = 500: per-cell mean -> sqrt(ab), per-cell
        // variance -> 1 - ab. With 256 cells a fixed per-cell z bound must
        // leave room for the expected maximum of 256 z-scores, hence 4.5;
        // the pooled statistics over every cell and draw get a tight bound.
        let s = NoiseSchedule::default_linear();
        let n = 16;
        let t = 500;
        let draws = 100_000usize;
        let x0 = Grid::from_fn(n, |_, _| 1.0).unwrap();
        let ab = s.alpha_bar(t).unwrap();
        let want_mean = ab.sqrt();
        let want_var = 1.0 - ab;

        let mut rng = ChaCha8Rng::seed_from_u64(977);
        let cells = n * n;
        let mut sum = vec![0.0f64; cells];
        let mut sumsq = vec![0.0f64; cells];
        for _ in 0..draws {
            let eps = Grid::standard_normal(n, &mut rng).unwrap();
            let z = s.forward_noise(&x0, t, &eps).unwrap();
            for (i, v) in z.values().iter().enumerate() {
                sum[i] += v;
                sumsq[i] += v * v;
            }
        }
        let k = draws as f64;
        let mean_se = (want_var / k).sqrt();
        let var_se = want_var * (2.0 / (k - 1.0)).sqrt();
        let mut worst_mean_z = 0.0f64;
        let mut worst_var_z = 0.0f64;
        for i in 0..cells {
            let mean = sum[i] / k;
            let var = (sumsq[i] - k * mean * mean) / (k - 1.0);
            worst_mean_z = worst_mean_z.max((mean - want_mean).abs() / mean_se);
            worst_var_z = worst_var_z.max((var - want_var).abs() / var_se);
        }
        assert!(worst_mean_z <= 4.5, "worst per-cell mean z {worst_mean_z}");
        assert!(worst_var_z <= 4.5, "worst per-cell var z {worst_var_z}");

        let nn = k * cells as f64;
        let total: f64 = sum.iter().sum();
        let total_sq: f64 = sumsq.iter().sum();
        let pooled_mean = total / nn;
        let pooled_var = (total_sq - nn * pooled_mean * pooled_mean) / (nn - 1.0);
        assert!(
            (pooled_mean - want_mean).abs() <= 5.0 * (want_var / nn).sqrt(),
            "pooled mean {pooled_mean} vs {want_mean}"
        );
        assert!(
            (pooled_var - want_var).abs() <= 5.0 * want_var * (2.0 / nn).sqrt(),
            "pooled var {pooled_var} vs {want_var}"
        );
    }

    #[test]
    fn step_indices_cover_the_horizon_with_uniform_stride() {
        let s = NoiseSchedule::default_linear();
        let idx = s.step_indices(20).unwrap();
        assert_eq!(idx.len(), 20);
        assert_eq!(idx[0], 1000);
        assert_eq!(*idx.last().unwrap(), 1);
        assert!(idx.windows(2).all(|w| w[0] > w[1]));
        let stride = 999.0 / 19.0;
        for w in idx.windows(2) {
            let gap = (w[0] - w[1]) as f64;
            assert!((gap - stride).abs() <= 1.0, "gap {gap} vs stride {stride}");
        }
    }

    #[test]
    fn step_indices_edge_cases() {
        let s = NoiseSchedule::default_linear();
        assert_eq!(s.step_indices(1).unwrap(), vec![1000]);
        assert!(s.step_indices(0).is_err());
        assert!(s.step_indices(1001).is_err());
        let full = s.step_indices(1000).unwrap();
        assert_eq!(full.len(), 1000);
        assert_eq!(full[0], 1000);
        assert_eq!(*full.last().unwrap(), 1);
    }

    proptest! {
        #[test]
        fn schedule_invariants_hold_for_random_parameters(
            t_train in 50usize..2000,
            b0 in 1e-5f64..5e-3,
            spread in 1.0f64..50.0,
        ) {
            let b1 = (b0 * spread).min(0.5);
            if let Ok(s) = NoiseSchedule::linear(t_train, b0, b1) {
                prop_assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
                for t in 1..=t_train {
                    let prev = s.alpha_bar(t - 1).unwrap();
                    let cur = s.alpha_bar(t).unwrap();
                    prop_assert!(cur < prev && cur > 0.0);
                }
                prop_assert!(s.alpha_bar(t_train).unwrap() < 1e-3);
            }
        }

        #[test]
        fn step_indices_always_strictly_decreasing(steps in 1usize..500) {
            let s = NoiseSchedule::default_linear();
            let idx = s.step_indices(steps).unwrap();
            prop_assert_eq!(idx.len(), steps);
            prop_assert_eq!(idx[0], 1000);
            prop_assert!(idx.windows(2).all(|w| w[0] > w[1]));
            prop_assert!(*idx.last().unwrap() >= 1);
        }
    }
}
