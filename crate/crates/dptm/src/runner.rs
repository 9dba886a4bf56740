//! End-to-end run orchestration and run-directory inspection.
//!
//! `run` executes one full adaptation: generate data, train the source
//! model, refine for the configured number of rounds, score every checkpoint
//! by nuclear norm, and write all artifacts into one directory. `report`
//! reads such a directory back, re-derives the config hash from the echoed
//! config, and checks that every artifact carries it.

use std::path::{Path, PathBuf};

use crate::adapt::{run_refinement, EvalContext, RefineSettings, RefinementHistory};
use crate::artifacts::{
    load_checkpoint, load_dataset, load_selection, load_trace, read_metrics, save_checkpoint,
    save_dataset, save_selection, save_trace, DatasetMeta, MetricsWriter, SelectionRecord,
};
use crate::classifier::{nuclear_norm, select_model, ProbMatrix, SoftmaxClassifier};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::oracle::MixtureWorld;
use crate::rng::stream;
use crate::schedule::NoiseSchedule;
use crate::synthdata::{build_world, sample_labeled, BenchmarkSpec, SOURCE_DOMAIN, TARGET_DOMAIN};

pub const CONFIG_ECHO_FILE: &str = "config.echo.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SELECTION_FILE: &str = "selection.toml";
pub const SOURCE_DATASET_FILE: &str = "source.bin";
pub const TARGET_DATASET_FILE: &str = "target.bin";

pub fn checkpoint_file(round: usize) -> String {
    format!("model_r{round}.bin")
}

pub fn trace_file(round: usize) -> String {
    format!("trace_r{round}.bin")
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dump_traces: bool,
}

/// Everything a finished run leaves behind, in memory.
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub config: RunConfig,
    pub config_hash: String,
    pub history: RefinementHistory,
    pub selection: SelectionRecord,
}

fn resolve_out_dir(config: &RunConfig, overrides: &CliOverrides, hash: &str) -> PathBuf {
    if let Some(out) = &overrides.out {
        return out.clone();
    }
    if let Some(out) = &config.out_dir {
        return PathBuf::from(out);
    }
    let root = std::env::var("DPTM_OUT_ROOT").unwrap_or_else(|_| "runs".to_string());
    Path::new(&root).join(format!("run-{}", &hash[..12]))
}

fn generate_data(
    world: &MixtureWorld,
    spec: &BenchmarkSpec,
    seed: u64,
) -> Result<(Vec<(Grid, usize)>, Vec<Grid>, Vec<usize>)> {
    // One stream, fixed order: all source draws, then all target draws.
    let mut rng = stream(seed, "data");
    let source = sample_labeled(world, SOURCE_DOMAIN, spec.per_class, &mut rng)?;
    let target = sample_labeled(world, TARGET_DOMAIN, spec.per_class, &mut rng)?;
    let (inputs, labels): (Vec<Grid>, Vec<usize>) = target.into_iter().unzip();
    Ok((source, inputs, labels))
}

/// Execute one full run and write its artifacts. Rerunning the same config
/// into the same directory reproduces every file byte for byte.
pub fn run(mut config: RunConfig, overrides: &CliOverrides) -> Result<RunArtifacts> {
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    config.validate()?;
    let hash = config.config_hash()?;
    let out_dir = resolve_out_dir(&config, overrides, &hash);
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join(CONFIG_ECHO_FILE), config.canonical_toml()?)?;
    log::info!("run {} -> {}", &hash[..12], out_dir.display());

    let world = build_world(&config.benchmark)?;
    let schedule = NoiseSchedule::default_linear();
    let seed = config.seed;

    let (source_set, target_inputs, target_labels) =
        generate_data(&world, &config.benchmark, seed)?;
    let (source_inputs, source_labels): (Vec<Grid>, Vec<usize>) =
        source_set.iter().map(|(g, y)| (g.clone(), *y)).unzip();
    save_dataset(
        &out_dir.join(SOURCE_DATASET_FILE),
        &source_inputs,
        &source_labels,
        &DatasetMeta {
            side: config.benchmark.side,
            classes: config.benchmark.classes,
            domain: SOURCE_DOMAIN,
            seed,
            count: source_inputs.len(),
            labels: source_labels.clone(),
            config_hash: hash.clone(),
        },
    )?;
    save_dataset(
        &out_dir.join(TARGET_DATASET_FILE),
        &target_inputs,
        &target_labels,
        &DatasetMeta {
            side: config.benchmark.side,
            classes: config.benchmark.classes,
            domain: TARGET_DOMAIN,
            seed,
            count: target_inputs.len(),
            labels: target_labels.clone(),
            config_hash: hash.clone(),
        },
    )?;

    let mut model = SoftmaxClassifier::init_random(
        config.benchmark.side,
        config.benchmark.classes,
        config.model,
        &mut stream(seed, "model-init"),
    )?;
    let source_loss = model.train_ce(
        &source_set,
        &config.source_train,
        &mut stream(seed, "source-train"),
    )?;
    log::info!("source training done, final loss {source_loss:.4}");

    let manipulation = config.manipulation_config();
    let settings = RefineSettings {
        world: &world,
        schedule: &schedule,
        manipulation: &manipulation,
        train: &config.adapt_train,
        entropy_threshold: config.entropy_threshold,
    };
    let eval = EvalContext::new(&target_labels);
    let mut metrics = MetricsWriter::create(&out_dir.join(METRICS_FILE), &hash)?;

    let history = run_refinement(
        &model,
        &target_inputs,
        &settings,
        config.rounds,
        seed,
        &eval,
        overrides.dump_traces,
        |round, model, row, trace| {
            save_checkpoint(&out_dir.join(checkpoint_file(round)), model, &hash)?;
            metrics.write_row(row)?;
            if let Some(trace) = trace {
                save_trace(&out_dir.join(trace_file(round)), trace, round, 0, &hash)?;
            }
            log::info!(
                "round {round}: trust {} ({:.3} clean), manipulated {}, target accuracy {:.3}",
                row.trust_size,
                row.trust_accuracy,
                row.manipulated_size,
                row.target_accuracy
            );
            Ok(())
        },
    )?;
    drop(metrics);

    let mut scores = Vec::with_capacity(history.models.len());
    for m in &history.models {
        scores.push(nuclear_norm(&ProbMatrix::from_predictions(m, &target_inputs)?)?);
    }
    let selection = SelectionRecord {
        selected_round: select_model(&scores)?,
        scores,
        config_hash: hash.clone(),
    };
    save_selection(&out_dir.join(SELECTION_FILE), &selection)?;
    log::info!(
        "selected round {} of {}",
        selection.selected_round,
        history.models.len() - 1
    );

    Ok(RunArtifacts {
        out_dir,
        config,
        config_hash: hash,
        history,
        selection,
    })
}

/// Load a config file and run it.
pub fn run_from_path(config_path: &Path, overrides: &CliOverrides) -> Result<RunArtifacts> {
    run(RunConfig::load(config_path)?, overrides)
}

/// Validated summary of a finished run directory.
pub struct ReportSummary {
    pub dir: PathBuf,
    pub config_hash: String,
    pub rows: Vec<crate::adapt::IterationMetrics>,
    pub selection: SelectionRecord,
    pub checkpoints: usize,
    pub datasets: usize,
    pub traces: usize,
}

impl ReportSummary {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let base = &self.rows[0];
        let last = self.rows.last().unwrap();
        let best = self
            .rows
            .iter()
            .max_by(|a, b| a.target_accuracy.total_cmp(&b.target_accuracy))
            .unwrap();
        let sel = &self.rows[self.selection.selected_round];
        out.push_str(&format!("run directory   {}\n", self.dir.display()));
        out.push_str(&format!("config hash     {}\n", self.config_hash));
        out.push_str(&format!(
            "rounds          {} (+ source baseline)\n",
            self.rows.len() - 1
        ));
        out.push_str(&format!(
            "baseline        target accuracy {:.4}, trust {}\n",
            base.target_accuracy, base.trust_size
        ));
        out.push_str(&format!(
            "{:<16}target accuracy {:.4}, trust {}\n",
            format!("final (r{})", last.round),
            last.target_accuracy,
            last.trust_size
        ));
        out.push_str(&format!(
            "{:<16}target accuracy {:.4}\n",
            format!("best (r{})", best.round),
            best.target_accuracy
        ));
        out.push_str(&format!(
            "{:<16}score {:.6}, target accuracy {:.4}\n",
            format!("selected (r{})", self.selection.selected_round),
            self.selection.scores[self.selection.selected_round],
            sel.target_accuracy
        ));
        out.push_str(&format!(
            "artifacts       {} checkpoints, {} datasets, {} traces, hashes consistent\n",
            self.checkpoints, self.datasets, self.traces
        ));
        out
    }
}

fn check_hash(kind: &str, path: &Path, found: &str, want: &str) -> Result<()> {
    if found != want {
        return Err(Error::artifact(format!(
            "{kind} {} carries config hash {found}, run is {want}",
            path.display()
        )));
    }
    Ok(())
}

/// Validate a run directory and summarize it. Every artifact must carry the
/// hash recomputed from the echoed config.
pub fn report(dir: &Path) -> Result<ReportSummary> {
    let config = RunConfig::load(&dir.join(CONFIG_ECHO_FILE))?;
    let hash = config.config_hash()?;

    let metrics_path = dir.join(METRICS_FILE);
    let (metrics_hash, rows) = read_metrics(&metrics_path)?;
    check_hash("metrics file", &metrics_path, &metrics_hash, &hash)?;
    if rows.is_empty() {
        return Err(Error::artifact("metrics file has no rows".to_string()));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.round != i {
            return Err(Error::artifact(format!(
                "metrics row {i} is labeled round {}",
                row.round
            )));
        }
    }

    let selection_path = dir.join(SELECTION_FILE);
    let selection = load_selection(&selection_path)?;
    check_hash("selection file", &selection_path, &selection.config_hash, &hash)?;
    if selection.scores.len() != rows.len() || selection.selected_round >= rows.len() {
        return Err(Error::artifact(format!(
            "selection covers {} rounds but metrics has {} rows",
            selection.scores.len(),
            rows.len()
        )));
    }

    let mut checkpoints = 0;
    for round in 0..rows.len() {
        let path = dir.join(checkpoint_file(round));
        let (model, meta) = load_checkpoint(&path)?;
        check_hash("checkpoint", &path, &meta.config_hash, &hash)?;
        if model.side() != config.benchmark.side
            || model.classes() != config.benchmark.classes
            || model.arch() != config.model
        {
            return Err(Error::artifact(format!(
                "checkpoint {} does not match the echoed config",
                path.display()
            )));
        }
        checkpoints += 1;
    }

    let mut datasets = 0;
    for name in [SOURCE_DATASET_FILE, TARGET_DATASET_FILE] {
        let path = dir.join(name);
        if path.exists() {
            let (_, meta) = load_dataset(&path)?;
            check_hash("dataset", &path, &meta.config_hash, &hash)?;
            let want = config.benchmark.classes * config.benchmark.per_class;
            if meta.count != want {
                return Err(Error::artifact(format!(
                    "dataset {} holds {} samples, config implies {want}",
                    path.display(),
                    meta.count
                )));
            }
            datasets += 1;
        }
    }

    let mut traces = 0;
    for round in 1..rows.len() {
        let path = dir.join(trace_file(round));
        if path.exists() {
            let (_, meta) = load_trace(&path)?;
            check_hash("trace", &path, &meta.config_hash, &hash)?;
            traces += 1;
        }
    }

    Ok(ReportSummary {
        dir: dir.to_path_buf(),
        config_hash: hash,
        rows,
        selection,
        checkpoints,
        datasets,
        traces,
    })
}
