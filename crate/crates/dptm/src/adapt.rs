//! Iterative self-training on a pseudo-target set: trusted low-entropy
//! predictions keep their labels, the rest are manipulated toward
//! round-robin classes, and the classifier is fine-tuned on the union.
//!
//! Ground-truth target labels exist only inside `EvalContext` and feed
//! nothing but the reported metrics; the refinement path never sees them.

use crate::classifier::{entropy, SoftmaxClassifier, TrainConfig};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::manipulate::{
    assign_labels, manipulate_set, ManipulationConfig, ManipulationTrace,
};
use crate::oracle::MixtureWorld;
use crate::rng::{child_seed, child_seed_indexed, stream};
use crate::schedule::NoiseSchedule;

/// Entropy split of an unlabeled set under one model. Indices refer to the
/// original sample order, which both halves preserve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    /// (original index, pseudo-label) of samples with prediction entropy at
    /// or below the threshold.
    pub trusted: Vec<(usize, usize)>,
    /// Original indices of the remaining samples.
    pub rest: Vec<usize>,
}

impl Partition {
    pub fn trust_size(&self) -> usize {
        self.trusted.len()
    }

    pub fn rest_size(&self) -> usize {
        self.rest.len()
    }
}

/// Split `samples` by prediction entropy against `threshold` (nats).
pub fn partition(
    model: &SoftmaxClassifier,
    samples: &[Grid],
    threshold: f64,
) -> Result<Partition> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::config("entropy threshold must be finite and >= 0"));
    }
    let mut trusted = Vec::new();
    let mut rest = Vec::new();
    for (i, x) in samples.iter().enumerate() {
        let probs = model.predict_probs(x)?;
        if entropy(&probs)? <= threshold {
            trusted.push((i, crate::oracle::argmax_lowest(&probs)));
        } else {
            rest.push(i);
        }
    }
    Ok(Partition { trusted, rest })
}

/// Assemble the training set for one round: trusted samples with their
/// pseudo-labels first, manipulated samples after.
pub fn build_pseudo_target(
    samples: &[Grid],
    part: &Partition,
    manipulated: Vec<(Grid, usize)>,
) -> Result<Vec<(Grid, usize)>> {
    let mut out = Vec::with_capacity(part.trusted.len() + manipulated.len());
    for &(i, label) in &part.trusted {
        let x = samples.get(i).ok_or(Error::Index {
            context: "trusted sample index",
            index: i,
            limit: samples.len(),
        })?;
        out.push((x.clone(), label));
    }
    out.extend(manipulated);
    Ok(out)
}

/// Per-round bookkeeping. Sizes and accuracies in row r describe the model
/// after r refinement rounds; row 0 is the source model baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationMetrics {
    pub round: usize,
    pub trust_size: usize,
    /// Fraction of trusted pseudo-labels matching ground truth; 0 when the
    /// trusted set is empty.
    pub trust_accuracy: f64,
    pub non_trust_size: usize,
    /// Samples manipulated during this round (0 in row 0).
    pub manipulated_size: usize,
    /// Model accuracy on the full unlabeled set against ground truth.
    pub target_accuracy: f64,
}

/// Ground-truth labels for evaluation only.
pub struct EvalContext<'a> {
    labels: &'a [usize],
}

impl<'a> EvalContext<'a> {
    pub fn new(labels: &'a [usize]) -> Self {
        EvalContext { labels }
    }

    pub fn model_accuracy(&self, model: &SoftmaxClassifier, samples: &[Grid]) -> Result<f64> {
        if samples.len() != self.labels.len() {
            return Err(Error::Dimension {
                context: "evaluation labels",
                expected: samples.len(),
                got: self.labels.len(),
            });
        }
        if samples.is_empty() {
            return Err(Error::validation("evaluation needs at least one sample"));
        }
        let mut hits = 0usize;
        for (x, &y) in samples.iter().zip(self.labels) {
            if model.pseudo_label(x)? == y {
                hits += 1;
            }
        }
        Ok(hits as f64 / samples.len() as f64)
    }

    fn trust_accuracy(&self, part: &Partition) -> f64 {
        if part.trusted.is_empty() {
            return 0.0;
        }
        let hits = part
            .trusted
            .iter()
            .filter(|&&(i, label)| self.labels.get(i) == Some(&label))
            .count();
        hits as f64 / part.trusted.len() as f64
    }

    fn metrics(
        &self,
        round: usize,
        model: &SoftmaxClassifier,
        samples: &[Grid],
        part: &Partition,
        manipulated_size: usize,
    ) -> Result<IterationMetrics> {
        Ok(IterationMetrics {
            round,
            trust_size: part.trust_size(),
            trust_accuracy: self.trust_accuracy(part),
            non_trust_size: part.rest_size(),
            manipulated_size,
            target_accuracy: self.model_accuracy(model, samples)?,
        })
    }
}

/// Everything one refinement round needs beyond the model and data.
#[derive(Debug, Clone)]
pub struct RefineSettings<'a> {
    pub world: &'a MixtureWorld,
    pub schedule: &'a NoiseSchedule,
    pub manipulation: &'a ManipulationConfig,
    pub train: &'a TrainConfig,
    pub entropy_threshold: f64,
}

/// Result of one refinement round.
pub struct RefineOutcome {
    pub model: SoftmaxClassifier,
    pub manipulated_size: usize,
    pub train_loss: f64,
    pub trace: Option<ManipulationTrace>,
}

fn refine_with_partition(
    model: &SoftmaxClassifier,
    part: &Partition,
    samples: &[Grid],
    settings: &RefineSettings,
    iter_seed: u64,
    capture_trace: bool,
) -> Result<RefineOutcome> {
    let labels = assign_labels(part.rest.len(), model.classes())?;
    let rest_samples: Vec<Grid> = part.rest[..labels.len()]
        .iter()
        .map(|&i| samples[i].clone())
        .collect();
    let (manipulated, trace) = manipulate_set(
        &rest_samples,
        &labels,
        settings.world,
        settings.schedule,
        settings.manipulation,
        child_seed(iter_seed, "manipulate"),
        capture_trace,
    )?;
    let manipulated_size = manipulated.len();
    let pseudo = build_pseudo_target(samples, part, manipulated)?;
    if pseudo.is_empty() {
        return Err(Error::validation(
            "refinement round produced an empty training set",
        ));
    }
    let mut next = model.clone();
    let mut train_rng = stream(iter_seed, "train");
    let train_loss = next.train_ce(&pseudo, settings.train, &mut train_rng)?;
    Ok(RefineOutcome {
        model: next,
        manipulated_size,
        train_loss,
        trace,
    })
}

/// One refinement round starting from `model`: partition, manipulate the
/// untrusted remainder, fine-tune on the pseudo-target union.
pub fn refine_once(
    model: &SoftmaxClassifier,
    samples: &[Grid],
    settings: &RefineSettings,
    iter_seed: u64,
    capture_trace: bool,
) -> Result<RefineOutcome> {
    let part = partition(model, samples, settings.entropy_threshold)?;
    refine_with_partition(model, &part, samples, settings, iter_seed, capture_trace)
}

/// Full history of a refinement run: R + 1 models and metric rows, index 0
/// holding the source baseline.
pub struct RefinementHistory {
    pub models: Vec<SoftmaxClassifier>,
    pub metrics: Vec<IterationMetrics>,
}

/// Run `rounds` refinement rounds from the source model. After each round
/// (and once for the baseline) `on_round` receives the round number, the
/// model, its metrics, and the first manipulated sample's trajectory if
/// requested.
#[allow(clippy::too_many_arguments)]
pub fn run_refinement(
    source_model: &SoftmaxClassifier,
    samples: &[Grid],
    settings: &RefineSettings,
    rounds: usize,
    run_seed: u64,
    eval: &EvalContext,
    capture_traces: bool,
    mut on_round: impl FnMut(
        usize,
        &SoftmaxClassifier,
        &IterationMetrics,
        Option<&ManipulationTrace>,
    ) -> Result<()>,
) -> Result<RefinementHistory> {
    if samples.is_empty() {
        return Err(Error::validation("refinement needs at least one sample"));
    }
    let mut models = Vec::with_capacity(rounds + 1);
    let mut metrics = Vec::with_capacity(rounds + 1);

    let mut current = source_model.clone();
    let mut part = partition(&current, samples, settings.entropy_threshold)?;
    let base = eval.metrics(0, &current, samples, &part, 0)?;
    on_round(0, &current, &base, None)?;
    models.push(current.clone());
    metrics.push(base);

    for r in 1..=rounds {
        let iter_seed = child_seed_indexed(run_seed, "iter", r as u64);
        let outcome =
            refine_with_partition(&current, &part, samples, settings, iter_seed, capture_traces)?;
        current = outcome.model;
        part = partition(&current, samples, settings.entropy_threshold)?;
        let row = eval.metrics(r, &current, samples, &part, outcome.manipulated_size)?;
        on_round(r, &current, &row, outcome.trace.as_ref())?;
        models.push(current.clone());
        metrics.push(row);
    }
    Ok(RefinementHistory { models, metrics })
}
