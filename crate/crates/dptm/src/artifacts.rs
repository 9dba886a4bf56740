//! On-disk run artifacts.
//!
//! Every artifact carries the run's config hash so a directory can be
//! checked for internal consistency later:
//!
//!   - checkpoints: flat little-endian f64 parameters in `.bin`, TOML
//!     sidecar (same stem, `.toml`) with the shape and hash;
//!   - datasets and traces: little-endian f32 grids plus a TOML index;
//!   - metrics.csv: `# config_hash: <hex>` comment line, a fixed header,
//!     one row per refinement round, floats printed to six places;
//!   - selection.toml: the per-round scores and the chosen round.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::IterationMetrics;
use crate::classifier::{Arch, SoftmaxClassifier};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::manipulate::ManipulationTrace;

pub const METRICS_HEADER: &str =
    "r,trust_size,trust_accuracy,non_trust_size,manipulated_size,target_accuracy";

fn sidecar_path(bin_path: &Path) -> PathBuf {
    bin_path.with_extension("toml")
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value)
        .map_err(|e| Error::artifact(format!("sidecar serialize failed: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| {
        Error::artifact(format!("sidecar parse failed for {}: {e}", path.display()))
    })
}

// ---------------------------------------------------------------- grids

fn write_grids_f32(path: &Path, grids: &[Grid]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for g in grids {
        for &v in g.values() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_grids_f32(path: &Path, side: usize, count: usize) -> Result<Vec<Grid>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let want = count * side * side * 4;
    if bytes.len() != want {
        return Err(Error::artifact(format!(
            "{}: expected {want} bytes for {count} grids of side {side}, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let mut grids = Vec::with_capacity(count);
    for chunk in bytes.chunks_exact(side * side * 4) {
        let values: Vec<f64> = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        grids.push(Grid::from_values(side, values)?);
    }
    Ok(grids)
}

// ----------------------------------------------------------- checkpoints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub side: usize,
    pub classes: usize,
    pub arch: Arch,
    pub param_count: usize,
    pub config_hash: String,
}

pub fn save_checkpoint(path: &Path, model: &SoftmaxClassifier, config_hash: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for &p in model.param_vec() {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    let meta = CheckpointMeta {
        side: model.side(),
        classes: model.classes(),
        arch: model.arch(),
        param_count: model.param_vec().len(),
        config_hash: config_hash.to_string(),
    };
    write_toml(&sidecar_path(path), &meta)
}

pub fn load_checkpoint(path: &Path) -> Result<(SoftmaxClassifier, CheckpointMeta)> {
    let meta: CheckpointMeta = read_toml(&sidecar_path(path))?;
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() != meta.param_count * 8 {
        return Err(Error::artifact(format!(
            "{}: expected {} parameter bytes, found {}",
            path.display(),
            meta.param_count * 8,
            bytes.len()
        )));
    }
    let params: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]))
        .collect();
    let model = SoftmaxClassifier::from_param_vec(meta.side, meta.classes, meta.arch, params)?;
    Ok((model, meta))
}

// -------------------------------------------------------------- datasets

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub side: usize,
    pub classes: usize,
    pub domain: usize,
    pub seed: u64,
    pub count: usize,
    pub labels: Vec<usize>,
    pub config_hash: String,
}

pub fn save_dataset(
    path: &Path,
    inputs: &[Grid],
    labels: &[usize],
    meta: &DatasetMeta,
) -> Result<()> {
    if inputs.len() != labels.len() || inputs.len() != meta.count || labels != meta.labels {
        return Err(Error::artifact(
            "dataset inputs, labels, and index disagree".to_string(),
        ));
    }
    for g in inputs {
        if g.side() != meta.side {
            return Err(Error::Dimension {
                context: "dataset grid side",
                expected: meta.side,
                got: g.side(),
            });
        }
    }
    write_grids_f32(path, inputs)?;
    write_toml(&sidecar_path(path), meta)
}

pub fn load_dataset(path: &Path) -> Result<(Vec<Grid>, DatasetMeta)> {
    let meta: DatasetMeta = read_toml(&sidecar_path(path))?;
    if meta.labels.len() != meta.count {
        return Err(Error::artifact(format!(
            "{}: index lists {} labels for {} grids",
            path.display(),
            meta.labels.len(),
            meta.count
        )));
    }
    let grids = read_grids_f32(path, meta.side, meta.count)?;
    Ok((grids, meta))
}

// ---------------------------------------------------------------- traces

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub side: usize,
    pub round: usize,
    pub sample_index: usize,
    /// Noise level of each stored latent; the clean init is stored first and
    /// is not part of this list.
    pub levels: Vec<usize>,
    pub config_hash: String,
}

pub fn save_trace(
    path: &Path,
    trace: &ManipulationTrace,
    round: usize,
    sample_index: usize,
    config_hash: &str,
) -> Result<()> {
    if trace.levels.len() != trace.latents.len() {
        return Err(Error::artifact(
            "trace levels and latents disagree".to_string(),
        ));
    }
    let mut grids = Vec::with_capacity(trace.latents.len() + 1);
    grids.push(trace.init.clone());
    grids.extend(trace.latents.iter().cloned());
    write_grids_f32(path, &grids)?;
    let meta = TraceMeta {
        side: trace.init.side(),
        round,
        sample_index,
        levels: trace.levels.clone(),
        config_hash: config_hash.to_string(),
    };
    write_toml(&sidecar_path(path), &meta)
}

pub fn load_trace(path: &Path) -> Result<(ManipulationTrace, TraceMeta)> {
    let meta: TraceMeta = read_toml(&sidecar_path(path))?;
    let grids = read_grids_f32(path, meta.side, meta.levels.len() + 1)?;
    let mut it = grids.into_iter();
    let init = it.next().expect("count checked above");
    let trace = ManipulationTrace {
        init,
        levels: meta.levels.clone(),
        latents: it.collect(),
    };
    Ok((trace, meta))
}

// --------------------------------------------------------------- metrics

/// Incremental metrics.csv writer; one flushed row per refinement round.
pub struct MetricsWriter {
    w: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path, config_hash: &str) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "# config_hash: {config_hash}")?;
        writeln!(w, "{METRICS_HEADER}")?;
        w.flush()?;
        Ok(MetricsWriter { w })
    }

    pub fn write_row(&mut self, m: &IterationMetrics) -> Result<()> {
        writeln!(
            self.w,
            "{},{},{:.6},{},{},{:.6}",
            m.round,
            m.trust_size,
            m.trust_accuracy,
            m.non_trust_size,
            m.manipulated_size,
            m.target_accuracy
        )?;
        self.w.flush()?;
        Ok(())
    }
}

/// Parse a metrics.csv back into (config hash, rows).
pub fn read_metrics(path: &Path) -> Result<(String, Vec<IterationMetrics>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();

    let hash_line = lines
        .next()
        .ok_or_else(|| Error::artifact(format!("{}: empty file", path.display())))??;
    let hash = hash_line
        .strip_prefix("# config_hash: ")
        .ok_or_else(|| Error::artifact(format!("{}: missing config hash line", path.display())))?
        .to_string();

    let header = lines
        .next()
        .ok_or_else(|| Error::artifact(format!("{}: missing header", path.display())))??;
    if header != METRICS_HEADER {
        return Err(Error::artifact(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }

    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::artifact(format!(
                "{}: row has {} fields: {line:?}",
                path.display(),
                fields.len()
            )));
        }
        let parse_u = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::artifact(format!("{}: bad integer {s:?}: {e}", path.display())))
        };
        let parse_f = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::artifact(format!("{}: bad float {s:?}: {e}", path.display())))
        };
        rows.push(IterationMetrics {
            round: parse_u(fields[0])?,
            trust_size: parse_u(fields[1])?,
            trust_accuracy: parse_f(fields[2])?,
            non_trust_size: parse_u(fields[3])?,
            manipulated_size: parse_u(fields[4])?,
            target_accuracy: parse_f(fields[5])?,
        });
    }
    Ok((hash, rows))
}

// ------------------------------------------------------------- selection

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub selected_round: usize,
    /// One score per metrics row, same order.
    pub scores: Vec<f64>,
    pub config_hash: String,
}

pub fn save_selection(path: &Path, record: &SelectionRecord) -> Result<()> {
    write_toml(path, record)
}

pub fn load_selection(path: &Path) -> Result<SelectionRecord> {
    read_toml(path)
}
