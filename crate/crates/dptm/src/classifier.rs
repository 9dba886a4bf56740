//! Softmax classifiers over pixel grids, cross-entropy training, and the
//! nuclear-norm checkpoint selection score.
//!
//! Two architectures sit behind one interface: a plain linear head and a
//! one-hidden-layer tanh network. Parameters flatten to a single `Vec<f64>`
//! in a fixed layout (weights first, then biases, layer by layer), which is
//! also the checkpoint wire format.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::oracle::argmax_lowest;

/// Network shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Arch {
    Linear,
    OneHidden { hidden: usize },
}

impl Arch {
    pub fn param_count(&self, inputs: usize, classes: usize) -> usize {
        match *self {
            Arch::Linear => classes * inputs + classes,
            Arch::OneHidden { hidden } => {
                hidden * inputs + hidden + classes * hidden + classes
            }
        }
    }
}

/// Minibatch SGD settings for cross-entropy training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    /// Std of white noise added to each input per presentation. Zero keeps
    /// inputs untouched (and draws nothing from the rng).
    #[serde(default)]
    pub input_noise: f64,
    /// Subtract the training-set mean from every input while optimizing.
    /// The shift is folded into the first-layer bias afterwards, so the
    /// stored parameters always act on raw inputs.
    #[serde(default = "default_center")]
    pub center_inputs: bool,
}

fn default_batch() -> usize {
    64
}
fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    5e-4
}
fn default_center() -> bool {
    true
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("train.learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("train.momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("train.weight_decay must be >= 0"));
        }
        if !(self.input_noise.is_finite() && self.input_noise >= 0.0) {
            return Err(Error::config("train.input_noise must be >= 0"));
        }
        Ok(())
    }
}

/// Softmax classifier on flattened grid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    side: usize,
    classes: usize,
    arch: Arch,
    params: Vec<f64>,
}

impl SoftmaxClassifier {
    /// Random initialization: each weight matrix gets N(0, 1/fan_in) entries,
    /// biases start at zero.
    pub fn init_random<R: Rng + ?Sized>(
        side: usize,
        classes: usize,
        arch: Arch,
        rng: &mut R,
    ) -> Result<Self> {
        if side == 0 || side % 2 != 0 {
            return Err(Error::config("classifier input side must be even and positive"));
        }
        if classes == 0 {
            return Err(Error::config("classifier needs at least one class"));
        }
        if let Arch::OneHidden { hidden } = arch {
            if hidden == 0 {
                return Err(Error::config("hidden width must be >= 1"));
            }
        }
        let inputs = side * side;
        let mut params = vec![0.0; arch.param_count(inputs, classes)];
        match arch {
            Arch::Linear => {
                let std = (1.0 / inputs as f64).sqrt();
                for p in params[..classes * inputs].iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *p = std * z;
                }
            }
            Arch::OneHidden { hidden } => {
                let std1 = (1.0 / inputs as f64).sqrt();
                let std2 = (1.0 / hidden as f64).sqrt();
                for p in params[..hidden * inputs].iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *p = std1 * z;
                }
                let w2_start = hidden * inputs + hidden;
                for p in params[w2_start..w2_start + classes * hidden].iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *p = std2 * z;
                }
            }
        }
        Ok(SoftmaxClassifier {
            side,
            classes,
            arch,
            params,
        })
    }

    /// Rebuild a classifier from its flat parameter vector.
    pub fn from_param_vec(
        side: usize,
        classes: usize,
        arch: Arch,
        params: Vec<f64>,
    ) -> Result<Self> {
        if side == 0 || side % 2 != 0 {
            return Err(Error::config("classifier input side must be even and positive"));
        }
        if classes == 0 {
            return Err(Error::config("classifier needs at least one class"));
        }
        let want = arch.param_count(side * side, classes);
        if params.len() != want {
            return Err(Error::Dimension {
                context: "classifier parameter vector",
                expected: want,
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("classifier parameters must be finite"));
        }
        Ok(SoftmaxClassifier {
            side,
            classes,
            arch,
            params,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn param_vec(&self) -> &[f64] {
        &self.params
    }

    fn inputs(&self) -> usize {
        self.side * self.side
    }

    /// True at weight-matrix positions, false at bias positions. Decay is
    /// applied through this mask so biases stay unregularized.
    fn decay_mask(&self) -> Vec<bool> {
        let d = self.inputs();
        let c = self.classes;
        let mut mask = vec![false; self.params.len()];
        match self.arch {
            Arch::Linear => {
                mask[..c * d].fill(true);
            }
            Arch::OneHidden { hidden } => {
                mask[..hidden * d].fill(true);
                let w2 = hidden * d + hidden;
                mask[w2..w2 + c * hidden].fill(true);
            }
        }
        mask
    }

    fn check_input(&self, x: &Grid) -> Result<()> {
        if x.side() != self.side {
            return Err(Error::Dimension {
                context: "classifier input side",
                expected: self.side,
                got: x.side(),
            });
        }
        Ok(())
    }

    /// Hidden activations for the one-hidden arch; `None` for linear.
    fn hidden_acts(&self, x: &Grid) -> Option<Vec<f64>> {
        match self.arch {
            Arch::Linear => None,
            Arch::OneHidden { hidden } => {
                let d = self.inputs();
                let xs = x.values();
                let mut h = vec![0.0; hidden];
                for (j, hj) in h.iter_mut().enumerate() {
                    let row = &self.params[j * d..(j + 1) * d];
                    let mut acc = 0.0;
                    for (w, v) in row.iter().zip(xs) {
                        acc += w * v;
                    }
                    *hj = (acc + self.params[hidden * d + j]).tanh();
                }
                Some(h)
            }
        }
    }

    pub fn predict_logits(&self, x: &Grid) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let d = self.inputs();
        let c = self.classes;
        match self.arch {
            Arch::Linear => {
                let xs = x.values();
                let mut logits = vec![0.0; c];
                for (k, l) in logits.iter_mut().enumerate() {
                    let row = &self.params[k * d..(k + 1) * d];
                    let mut acc = 0.0;
                    for (w, v) in row.iter().zip(xs) {
                        acc += w * v;
                    }
                    *l = acc + self.params[c * d + k];
                }
                Ok(logits)
            }
            Arch::OneHidden { hidden } => {
                let h = self.hidden_acts(x).unwrap();
                let w2 = hidden * d + hidden;
                let b2 = w2 + c * hidden;
                let mut logits = vec![0.0; c];
                for (k, l) in logits.iter_mut().enumerate() {
                    let row = &self.params[w2 + k * hidden..w2 + (k + 1) * hidden];
                    let mut acc = 0.0;
                    for (w, v) in row.iter().zip(&h) {
                        acc += w * v;
                    }
                    *l = acc + self.params[b2 + k];
                }
                Ok(logits)
            }
        }
    }

    pub fn predict_probs(&self, x: &Grid) -> Result<Vec<f64>> {
        Ok(softmax(&self.predict_logits(x)?))
    }

    /// Hard label: argmax probability, ties resolved to the lowest index.
    pub fn pseudo_label(&self, x: &Grid) -> Result<usize> {
        Ok(argmax_lowest(&self.predict_probs(x)?))
    }

    /// Fraction of samples whose predicted label matches.
    pub fn accuracy(&self, data: &[(Grid, usize)]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::validation("accuracy needs at least one sample"));
        }
        let mut hits = 0usize;
        for (x, y) in data {
            if self.pseudo_label(x)? == *y {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }

    /// Mean cross-entropy over `indices` into `data`, with the gradient in
    /// flat parameter layout. No regularization term; decay lives in the
    /// optimizer update.
    pub fn loss_and_grad(
        &self,
        data: &[(Grid, usize)],
        indices: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        if indices.is_empty() {
            return Err(Error::validation("gradient needs at least one sample"));
        }
        let d = self.inputs();
        let c = self.classes;
        let inv = 1.0 / indices.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;

        for &i in indices {
            let (x, y) = data
                .get(i)
                .ok_or(Error::Index {
                    context: "training batch index",
                    index: i,
                    limit: data.len(),
                })?;
            if *y >= c {
                return Err(Error::Index {
                    context: "training label",
                    index: *y,
                    limit: c,
                });
            }
            self.check_input(x)?;
            let xs = x.values();
            let logits = self.predict_logits(x)?;
            let probs = softmax(&logits);
            loss -= probs[*y].max(1e-300).ln() * inv;

            // dL/dlogit_k = (p_k - [k == y]) / batch
            let mut dlogit = probs;
            dlogit[*y] -= 1.0;
            for dl in dlogit.iter_mut() {
                *dl *= inv;
            }

            match self.arch {
                Arch::Linear => {
                    for (k, dl) in dlogit.iter().enumerate() {
                        let row = &mut grad[k * d..(k + 1) * d];
                        for (g, v) in row.iter_mut().zip(xs) {
                            *g += dl * v;
                        }
                        grad[c * d + k] += dl;
                    }
                }
                Arch::OneHidden { hidden } => {
                    let h = self.hidden_acts(x).unwrap();
                    let w2 = hidden * d + hidden;
                    let b2 = w2 + c * hidden;
                    let mut dh = vec![0.0; hidden];
                    for (k, dl) in dlogit.iter().enumerate() {
                        let row = &self.params[w2 + k * hidden..w2 + (k + 1) * hidden];
                        for (dhj, w) in dh.iter_mut().zip(row) {
                            *dhj += dl * w;
                        }
                        let grow = &mut grad[w2 + k * hidden..w2 + (k + 1) * hidden];
                        for (g, hj) in grow.iter_mut().zip(&h) {
                            *g += dl * hj;
                        }
                        grad[b2 + k] += dl;
                    }
                    for (j, (dhj, hj)) in dh.iter().zip(&h).enumerate() {
                        let dpre = dhj * (1.0 - hj * hj);
                        let row = &mut grad[j * d..(j + 1) * d];
                        for (g, v) in row.iter_mut().zip(xs) {
                            *g += dpre * v;
                        }
                        grad[hidden * d + j] += dpre;
                    }
                }
            }
        }
        Ok((loss, grad))
    }

    /// Minibatch SGD with momentum and weight decay (weights only, never
    /// biases). Velocity buffers start at zero on every call. Epoch order is
    /// a fresh seeded shuffle; `epochs == 0` leaves parameters untouched.
    /// Returns the mean cross-entropy of the final epoch.
    pub fn train_ce<R: Rng + ?Sized>(
        &mut self,
        data: &[(Grid, usize)],
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<f64> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::validation("training needs at least one sample"));
        }
        if cfg.epochs == 0 {
            return Ok(f64::NAN);
        }

        // With centering on, optimize in a shifted coordinate frame and fold
        // the shift back into the first-layer bias at the end, so callers
        // only ever see parameters that act on raw inputs.
        let mut centered: Vec<(Grid, usize)> = Vec::new();
        let center = if cfg.center_inputs {
            let mut m = Grid::zeros(self.side)?;
            let w = 1.0 / data.len() as f64;
            for (x, _) in data {
                m.add_scaled_assign(w, x)?;
            }
            centered.reserve(data.len());
            for (x, y) in data {
                centered.push((x.sub(&m)?, *y));
            }
            self.shift_first_bias(&m, 1.0)?;
            Some(m)
        } else {
            None
        };
        let view: &[(Grid, usize)] = if center.is_some() { &centered } else { data };

        let mask = self.decay_mask();
        let mut velocity = vec![0.0; self.params.len()];
        let mut order: Vec<usize> = (0..view.len()).collect();
        let mut last_loss = f64::NAN;

        let mut noisy: Vec<(Grid, usize)> = Vec::new();
        let noisy_indices: Vec<usize> = (0..cfg.batch_size).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let (loss, grad) = if cfg.input_noise > 0.0 {
                    noisy.clear();
                    for &i in batch {
                        let jitter = Grid::standard_normal(self.side, rng)?;
                        let mut x = view[i].0.clone();
                        x.add_scaled_assign(cfg.input_noise, &jitter)?;
                        noisy.push((x, view[i].1));
                    }
                    self.loss_and_grad(&noisy, &noisy_indices[..batch.len()])?
                } else {
                    self.loss_and_grad(view, batch)?
                };
                epoch_loss += loss * batch.len() as f64;
                for i in 0..self.params.len() {
                    let mut g = grad[i];
                    if mask[i] {
                        g += cfg.weight_decay * self.params[i];
                    }
                    velocity[i] = cfg.momentum * velocity[i] - cfg.learning_rate * g;
                    self.params[i] += velocity[i];
                }
            }
            last_loss = epoch_loss / view.len() as f64;
        }

        if let Some(m) = &center {
            self.shift_first_bias(m, -1.0)?;
        }
        Ok(last_loss)
    }

    /// Replace the first-layer bias b by b + sign * W * m, where W is the
    /// first-layer weight matrix. With sign +1 the parameters that acted on
    /// raw inputs act identically on inputs shifted by -m; with sign -1 the
    /// fold is undone.
    fn shift_first_bias(&mut self, m: &Grid, sign: f64) -> Result<()> {
        self.check_input(m)?;
        let d = self.inputs();
        let rows = match self.arch {
            Arch::Linear => self.classes,
            Arch::OneHidden { hidden } => hidden,
        };
        let mv = m.values();
        for j in 0..rows {
            let mut acc = 0.0;
            for (w, v) in self.params[j * d..(j + 1) * d].iter().zip(mv) {
                acc += w * v;
            }
            self.params[rows * d + j] += sign * acc;
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= sum;
    }
    out
}

/// Shannon entropy in nats, with the 0 * ln 0 = 0 convention. Rejects
/// negative entries and vectors that do not sum to 1 within 1e-6.
pub fn entropy(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::validation("entropy needs at least one probability"));
    }
    let mut sum = 0.0;
    for &p in probs {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::validation("entropy input must be finite and >= 0"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::validation("entropy input must sum to 1 within 1e-6"));
    }
    Ok(probs
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum())
}

/// Row-major N x C probability matrix, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ProbMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::validation("probability matrix must be non-empty"));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                context: "probability matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("probability matrix must be finite"));
        }
        Ok(ProbMatrix { rows, cols, data })
    }

    /// Stack the classifier's predicted rows for every input.
    pub fn from_predictions(model: &SoftmaxClassifier, inputs: &[Grid]) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::validation("probability matrix needs at least one row"));
        }
        let mut data = Vec::with_capacity(inputs.len() * model.classes());
        for x in inputs {
            data.extend_from_slice(&model.predict_probs(x)?);
        }
        ProbMatrix::new(inputs.len(), model.classes(), data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Nuclear norm (sum of singular values) via one-sided Jacobi rotations on
/// the columns. The column count is small, so sweeps over column pairs
/// converge in a handful of passes.
pub fn nuclear_norm(m: &ProbMatrix) -> Result<f64> {
    let n = m.rows;
    let c = m.cols;
    // columns[j][i] = m[i][j]
    let mut cols: Vec<Vec<f64>> = (0..c)
        .map(|j| (0..n).map(|i| m.data[i * c + j]).collect())
        .collect();

    let max_sweeps = 60;
    let tol = 1e-30;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..c {
            for q in (p + 1)..c {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..n {
                    app += cols[p][i] * cols[p][i];
                    aqq += cols[q][i] * cols[q][i];
                    apq += cols[p][i] * cols[q][i];
                }
                if apq * apq <= tol * app * aqq || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let cth = 1.0 / (1.0 + t * t).sqrt();
                let sth = cth * t;
                for i in 0..n {
                    let vp = cols[p][i];
                    let vq = cols[q][i];
                    cols[p][i] = cth * vp - sth * vq;
                    cols[q][i] = sth * vp + cth * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    Ok(cols
        .iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum())
}

/// Index of the highest score, ties resolved to the lowest index.
pub fn select_model(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::validation("selection needs at least one score"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::validation("selection scores must be finite"));
    }
    Ok(argmax_lowest(scores))
}
