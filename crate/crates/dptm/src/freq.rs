//! 2D FFT band split/merge with hard radial masks.
//!
//! A `FrequencyMask` is a binary low-band indicator H over the n x n FFT
//! bins: H(k) = 1 iff the centered radial frequency |k| <= rho (rho measured
//! in bins). Masks are radially symmetric, so H(-k mod n) = H(k) and every
//! filtered output of a real grid is real up to roundoff.
//!
//! The three band operations share one contract:
//!
//!   low_band(x, H)            = IFFT(H . FFT(x))
//!   high_band(x, H)           = IFFT((1 - H) . FFT(x))
//!   mix_bands(a, b, H)        = IFFT(H . FFT(a) + (1 - H) . FFT(b))
//!
//! so `low_band(x) + high_band(x) == x` to machine precision (the two
//! indicators sum to exactly 1 in every bin) and `mix_bands(x, x, H) == x`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Binary circular low-band indicator over n x n FFT bins.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMask {
    side: usize,
    rho: f64,
    weights: Vec<f64>, // 0.0 or 1.0 per bin, row-major (row freq, col freq)
}

impl FrequencyMask {
    /// Low-band mask with cutoff `rho` bins. Any finite cutoff is legal: a
    /// negative rho passes nothing, and rho >= n*sqrt(2)/2 passes everything.
    pub fn low_pass(n: usize, rho: f64) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::validation(format!(
                "mask side must be even and >= 2, got {n}"
            )));
        }
        if !rho.is_finite() {
            return Err(Error::config(format!(
                "mask cutoff rho must be finite, got {rho}"
            )));
        }
        let mut weights = Vec::with_capacity(n * n);
        for kr in 0..n {
            for kc in 0..n {
                let r = radial(n, kr, kc);
                weights.push(if r <= rho { 1.0 } else { 0.0 });
            }
        }
        Ok(FrequencyMask {
            side: n,
            rho,
            weights,
        })
    }

    /// All-pass mask: every bin in the low band (H == 1).
    pub fn all_pass(n: usize) -> Result<Self> {
        Self::low_pass(n, Self::max_radius(n))
    }

    /// Empty mask: no bin in the low band (H == 0).
    pub fn empty(n: usize) -> Result<Self> {
        Self::low_pass(n, -1.0)
    }

    /// Largest centered radial frequency on an n x n grid.
    pub fn max_radius(n: usize) -> f64 {
        let h = (n / 2) as f64;
        (2.0 * h * h).sqrt()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Per-bin indicator values (0.0 / 1.0), row-major over (row freq, col freq).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of bins in the low band.
    pub fn low_bin_count(&self) -> usize {
        self.weights.iter().filter(|w| **w == 1.0).count()
    }
}

/// Centered radial frequency of bin (kr, kc) in standard FFT index order.
fn radial(n: usize, kr: usize, kc: usize) -> f64 {
    let f = |k: usize| -> f64 {
        if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        }
    };
    let (fr, fc) = (f(kr), f(kc));
    (fr * fr + fc * fc).sqrt()
}

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let mut map = cell.borrow_mut();
        map.entry((n, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                let dir = if inverse {
                    FftDirection::Inverse
                } else {
                    FftDirection::Forward
                };
                planner.plan_fft(n, dir)
            })
            .clone()
    })
}

fn transpose(data: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

/// Unnormalized 2D FFT of a real grid; result indexed [row_freq * n + col_freq].
fn fft2(x: &Grid) -> Vec<Complex64> {
    let n = x.side();
    let fft = plan(n, false);
    let mut data: Vec<Complex64> = x.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    transpose(&mut data, n);
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    transpose(&mut data, n);
    data
}

/// Inverse 2D FFT (normalized by 1/n^2); returns the real part and the
/// largest absolute imaginary residual encountered.
fn ifft2(mut spectrum: Vec<Complex64>, n: usize) -> (Grid, f64) {
    let ifft = plan(n, true);
    for row in spectrum.chunks_exact_mut(n) {
        ifft.process(row);
    }
    transpose(&mut spectrum, n);
    for row in spectrum.chunks_exact_mut(n) {
        ifft.process(row);
    }
    transpose(&mut spectrum, n);
    let scale = 1.0 / (n * n) as f64;
    let mut max_imag = 0.0f64;
    let values: Vec<f64> = spectrum
        .iter()
        .map(|z| {
            max_imag = max_imag.max((z.im * scale).abs());
            z.re * scale
        })
        .collect();
    let grid = Grid::from_values(n, values).expect("ifft preserves grid shape and finiteness");
    (grid, max_imag)
}

fn check_mask(x: &Grid, mask: &FrequencyMask, context: &'static str) -> Result<()> {
    if x.side() != mask.side() {
        return Err(Error::Dimension {
            context,
            expected: mask.side(),
            got: x.side(),
        });
    }
    Ok(())
}

/// Per-bin squared spectral magnitudes |FFT(x)|^2, row-major.
pub fn bin_energies(x: &Grid) -> Vec<f64> {
    fft2(x).iter().map(|z| z.norm_sqr()).collect()
}

/// Low-band component of `x` plus the imaginary residual of the inverse
/// transform (diagnostic; ~1e-16 relative for well-formed inputs).
pub fn low_band_with_residual(x: &Grid, mask: &FrequencyMask) -> Result<(Grid, f64)> {
    check_mask(x, mask, "low_band")?;
    let mut spec = fft2(x);
    for (z, w) in spec.iter_mut().zip(mask.weights()) {
        *z *= *w;
    }
    Ok(ifft2(spec, x.side()))
}

/// High-band component of `x` plus the imaginary residual.
pub fn high_band_with_residual(x: &Grid, mask: &FrequencyMask) -> Result<(Grid, f64)> {
    check_mask(x, mask, "high_band")?;
    let mut spec = fft2(x);
    for (z, w) in spec.iter_mut().zip(mask.weights()) {
        *z *= 1.0 - *w;
    }
    Ok(ifft2(spec, x.side()))
}

/// Keep only frequencies at or below the mask cutoff.
pub fn low_band(x: &Grid, mask: &FrequencyMask) -> Result<Grid> {
    low_band_with_residual(x, mask).map(|(g, _)| g)
}

/// Keep only frequencies above the mask cutoff.
pub fn high_band(x: &Grid, mask: &FrequencyMask) -> Result<Grid> {
    high_band_with_residual(x, mask).map(|(g, _)| g)
}

/// Combine the low band of `low_source` with the high band of `high_source`.
pub fn mix_bands(low_source: &Grid, high_source: &Grid, mask: &FrequencyMask) -> Result<Grid> {
    check_mask(low_source, mask, "mix_bands")?;
    check_mask(high_source, mask, "mix_bands")?;
    let spec_low = fft2(low_source);
    let mut spec_high = fft2(high_source);
    for ((z, a), w) in spec_high.iter_mut().zip(&spec_low).zip(mask.weights()) {
        *z = a * *w + *z * (1.0 - *w);
    }
    let (grid, _) = ifft2(spec_high, low_source.side());
    Ok(grid)
}
