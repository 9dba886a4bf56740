//! Picks the best refinement round without ever seeing a label.
//!
//! A model that has genuinely adapted spreads confident predictions across
//! all classes, which makes its stacked prediction matrix high-rank; a model
//! that collapsed or never left the source domain concentrates mass and
//! drops rank. The nuclear norm of that matrix tracks this, so the round
//! with the largest score is a label-free stand-in for validation accuracy.

use dptm::adapt::{run_refinement, EvalContext, RefineSettings};
use dptm::classifier::{nuclear_norm, select_model, ProbMatrix, SoftmaxClassifier};
use dptm::config::RunConfig;
use dptm::rng::stream;
use dptm::schedule::NoiseSchedule;
use dptm::synthdata::{self, SOURCE_DOMAIN, TARGET_DOMAIN};

fn main() -> dptm::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.benchmark.per_class = 100;
    cfg.rounds = 5;
    let seed = 7;

    let world = synthdata::build_world(&cfg.benchmark)?;
    let schedule = NoiseSchedule::default_linear();

    let source = synthdata::sample_labeled(
        &world,
        SOURCE_DOMAIN,
        cfg.benchmark.per_class,
        &mut stream(seed, "source-data"),
    )?;
    let target = synthdata::sample_labeled(
        &world,
        TARGET_DOMAIN,
        cfg.benchmark.per_class,
        &mut stream(seed, "target-data"),
    )?;
    let (inputs, labels): (Vec<_>, Vec<_>) = target.into_iter().unzip();

    let mut model = SoftmaxClassifier::init_random(
        cfg.benchmark.side,
        cfg.benchmark.classes,
        cfg.model,
        &mut stream(seed, "model-init"),
    )?;
    model.train_ce(&source, &cfg.source_train, &mut stream(seed, "source-train"))?;

    let manipulation = cfg.manipulation_config();
    let settings = RefineSettings {
        world: &world,
        schedule: &schedule,
        manipulation: &manipulation,
        train: &cfg.adapt_train,
        entropy_threshold: cfg.entropy_threshold,
    };
    let eval = EvalContext::new(&labels);
    let history = run_refinement(
        &model,
        &inputs,
        &settings,
        cfg.rounds,
        seed,
        &eval,
        false,
        |_, _, _, _| Ok(()),
    )?;

    let mut scores = Vec::new();
    for m in &history.models {
        scores.push(nuclear_norm(&ProbMatrix::from_predictions(m, &inputs)?)?);
    }
    let pick = select_model(&scores)?;

    println!("round | nuclear norm | target accuracy (hidden from selection)");
    for (r, (s, m)) in scores.iter().zip(&history.metrics).enumerate() {
        let marker = if r == pick { "  <- selected" } else { "" };
        println!("{r:>5} | {s:>12.4} | {:.4}{marker}", m.target_accuracy);
    }

    let best = history
        .metrics
        .iter()
        .map(|m| m.target_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    let chosen = history.metrics[pick].target_accuracy;
    println!(
        "\nselected accuracy {chosen:.4}, best over rounds {best:.4}, gap {:.4}",
        best - chosen
    );
    Ok(())
}
