//! Square real-valued grids: the latent/sample type used everywhere.
//!
//! The identity decoder means latents and samples share this type: an `n x n`
//! row-major array of finite `f64`. Arithmetic helpers cover exactly what the
//! diffusion formulas need (linear combinations, dot products, norms).

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// An `n x n` real grid, row-major, finite entries only, `n` even and >= 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    side: usize,
    values: Vec<f64>,
}

impl Grid {
    /// Zero grid of side `n`. Errors if `n` is odd or < 2.
    pub fn zeros(n: usize) -> Result<Self> {
        Self::check_side(n)?;
        Ok(Grid {
            side: n,
            values: vec![0.0; n * n],
        })
    }

    /// Grid built from a function of (row, col).
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::check_side(n)?;
        let mut values = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                values.push(f(r, c));
            }
        }
        let g = Grid { side: n, values };
        g.check_finite()?;
        Ok(g)
    }

    /// Grid from an existing row-major buffer.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        Self::check_side(n)?;
        if values.len() != n * n {
            return Err(Error::Dimension {
                context: "Grid::from_values",
                expected: n * n,
                got: values.len(),
            });
        }
        let g = Grid { side: n, values };
        g.check_finite()?;
        Ok(g)
    }

    /// Grid of i.i.d. standard-normal entries drawn row-major from `rng`.
    pub fn standard_normal(n: usize, rng: &mut (impl Rng + ?Sized)) -> Result<Self> {
        Self::check_side(n)?;
        let values = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
        Ok(Grid { side: n, values })
    }

    fn check_side(n: usize) -> Result<()> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::validation(format!(
                "grid side must be even and >= 2, got {n}"
            )));
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::validation("grid contains non-finite values"))
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // side >= 2 by construction
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.side + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.side + col] = v;
    }

    /// Elementwise `a*self + b*other`.
    pub fn affine(&self, a: f64, other: &Grid, b: f64) -> Result<Grid> {
        self.check_same_shape(other, "Grid::affine")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Grid {
            side: self.side,
            values,
        })
    }

    /// Elementwise difference `self - other`.
    pub fn sub(&self, other: &Grid) -> Result<Grid> {
        self.affine(1.0, other, -1.0)
    }

    /// Elementwise sum `self + other`.
    pub fn add(&self, other: &Grid) -> Result<Grid> {
        self.affine(1.0, other, 1.0)
    }

    /// Scaled copy `a * self`.
    pub fn scaled(&self, a: f64) -> Grid {
        Grid {
            side: self.side,
            values: self.values.iter().map(|x| a * x).collect(),
        }
    }

    /// In-place `self += a * other`.
    pub fn add_scaled_assign(&mut self, a: f64, other: &Grid) -> Result<()> {
        self.check_same_shape(other, "Grid::add_scaled_assign")?;
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Grid) -> Result<f64> {
        self.check_same_shape(other, "Grid::dot")?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x * y)
            .sum())
    }

    /// Euclidean norm over all entries.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    fn check_same_shape(&self, other: &Grid, context: &'static str) -> Result<()> {
        if self.side != other.side {
            return Err(Error::Dimension {
                context,
                expected: self.side,
                got: other.side,
            });
        }
        Ok(())
    }
}
