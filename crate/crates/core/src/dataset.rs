//! Trace loading, cleaning, window slicing and stratified splitting.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simgen::{Profile, SampleRecord, TRACE_COLUMNS};
use crate::{DT, SENSOR_MAX_RANGE};

/// Samples per classification window (30 s at 0.05 s).
pub const WINDOW_LEN: usize = 600;

/// Default warmup dropped from the start of every trace, s.
pub const DEFAULT_WARMUP_S: f64 = 2.0;

/// Default maximum fraction of stopped samples a window may contain.
pub const DEFAULT_ZERO_TOLERANCE: f64 = 0.9;

/// Default speed below which a sample counts as stopped, m/s.
pub const DEFAULT_STOP_SPEED_EPS: f64 = 0.1;

/// Reads a trace CSV written by [`crate::simgen::export_trace`].
pub fn load_trace(path: &Path) -> Result<Vec<SampleRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(file)
}

pub fn read_trace(reader: impl std::io::Read) -> Result<Vec<SampleRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    let mut index = [usize::MAX; TRACE_COLUMNS.len()];
    for (pos, name) in headers.iter().enumerate() {
        let slot = TRACE_COLUMNS
            .iter()
            .position(|c| *c == name.trim())
            .ok_or_else(|| Error::Schema(format!("unknown column '{name}'")))?;
        if index[slot] != usize::MAX {
            return Err(Error::Schema(format!("duplicate column '{name}'")));
        }
        index[slot] = pos;
    }
    if let Some(missing) = index.iter().position(|&i| i == usize::MAX) {
        return Err(Error::Schema(format!(
            "missing column '{}'",
            TRACE_COLUMNS[missing]
        )));
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", headers.len(), row.len()),
            });
        }
        let field = |slot: usize| row.get(index[slot]).unwrap_or("").trim();
        let number = |slot: usize| -> Result<f64> {
            let raw = field(slot);
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("invalid {} value '{raw}'", TRACE_COLUMNS[slot]),
            })
        };
        let obstacle_distance = match field(8) {
            "" => None,
            _ => Some(number(8)?),
        };
        let label_raw = field(10);
        let label = label_raw
            .parse::<usize>()
            .ok()
            .and_then(Profile::from_index)
            .ok_or_else(|| Error::Parse {
                line,
                message: format!("invalid label '{label_raw}'"),
            })?;
        records.push(SampleRecord {
            t: number(0)?,
            accel_x: number(1)?,
            accel_y: number(2)?,
            accel_z: number(3)?,
            gyro_x: number(4)?,
            gyro_y: number(5)?,
            gyro_z: number(6)?,
            speed: number(7)?,
            obstacle_distance,
            speed_limit: number(9)?,
            label,
        });
    }
    Ok(records)
}

/// Drops the first `warmup_s` seconds and imputes missing obstacle
/// distances with `max_range`.
pub fn clean(records: &[SampleRecord], warmup_s: f64, max_range: f64) -> Vec<SampleRecord> {
    let skip = (warmup_s.max(0.0) / DT + 1e-9).floor() as usize;
    records
        .iter()
        .skip(skip)
        .map(|r| SampleRecord {
            obstacle_distance: Some(r.obstacle_distance.unwrap_or(max_range)),
            ..r.clone()
        })
        .collect()
}

/// A fixed-length contiguous slice of one cleaned trace.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub records: Vec<SampleRecord>,
    pub label: Profile,
    pub source_id: String,
    /// Offset of the first record within the cleaned trace.
    pub start_index: usize,
}

impl Window {
    pub fn channel(&self, f: impl Fn(&SampleRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    /// Obstacle distances; cleaned windows never miss one.
    pub fn distances(&self) -> Vec<f64> {
        self.channel(|r| r.obstacle_distance.unwrap_or(SENSOR_MAX_RANGE))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceParams {
    pub window_len: usize,
    pub zero_tolerance: f64,
    pub stop_speed_eps: f64,
}

impl Default for SliceParams {
    fn default() -> Self {
        SliceParams {
            window_len: WINDOW_LEN,
            zero_tolerance: DEFAULT_ZERO_TOLERANCE,
            stop_speed_eps: DEFAULT_STOP_SPEED_EPS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowStatus {
    Kept,
    Stoppage,
    MixedLabels,
    TraceTooShort,
}

/// One line of the windows manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source_id: String,
    pub start_index: usize,
    pub label: Option<Profile>,
    pub status: WindowStatus,
    /// Fraction of stopped samples in the window.
    pub stopped_fraction: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Sliced {
    pub windows: Vec<Window>,
    pub manifest: Vec<ManifestEntry>,
}

impl Sliced {
    pub fn discarded(&self) -> usize {
        self.manifest
            .iter()
            .filter(|m| m.status != WindowStatus::Kept)
            .count()
    }
}

/// Cuts `records` into consecutive non-overlapping windows; the trailing
/// partial window is dropped and stoppage-dominated windows are discarded.
pub fn slice_windows(
    records: &[SampleRecord],
    source_id: &str,
    params: &SliceParams,
) -> Result<Sliced> {
    if params.window_len == 0 {
        return Err(Error::invalid("window_len must be > 0"));
    }
    if !(0.0..=1.0).contains(&params.zero_tolerance) {
        return Err(Error::invalid(format!(
            "zero_tolerance must be within [0, 1], got {}",
            params.zero_tolerance
        )));
    }
    let mut out = Sliced::default();
    for (k, chunk) in records.chunks_exact(params.window_len).enumerate() {
        let start_index = k * params.window_len;
        let stopped = chunk
            .iter()
            .filter(|r| r.speed < params.stop_speed_eps)
            .count();
        let stopped_fraction = stopped as f64 / params.window_len as f64;
        let label = chunk[0].label;
        let status = if chunk.iter().any(|r| r.label != label) {
            WindowStatus::MixedLabels
        } else if stopped_fraction > params.zero_tolerance {
            WindowStatus::Stoppage
        } else {
            WindowStatus::Kept
        };
        out.manifest.push(ManifestEntry {
            source_id: source_id.to_string(),
            start_index,
            label: (status != WindowStatus::MixedLabels).then_some(label),
            status,
            stopped_fraction,
        });
        if status == WindowStatus::Kept {
            out.windows.push(Window {
                records: chunk.to_vec(),
                label,
                source_id: source_id.to_string(),
                start_index,
            });
        }
    }
    Ok(out)
}

/// Cleans and slices a batch of traces. Traces shorter than one window
/// after cleaning are dropped and recorded in the manifest.
pub fn prepare_windows(
    traces: &[(String, Vec<SampleRecord>)],
    warmup_s: f64,
    params: &SliceParams,
) -> Result<Sliced> {
    let mut out = Sliced::default();
    let mut too_short = 0usize;
    for (source_id, records) in traces {
        let cleaned = clean(records, warmup_s, SENSOR_MAX_RANGE);
        if cleaned.len() < params.window_len {
            too_short += 1;
            out.manifest.push(ManifestEntry {
                source_id: source_id.clone(),
                start_index: 0,
                label: cleaned.first().or(records.first()).map(|r| r.label),
                status: WindowStatus::TraceTooShort,
                stopped_fraction: 0.0,
            });
            continue;
        }
        let sliced = slice_windows(&cleaned, source_id, params)?;
        out.windows.extend(sliced.windows);
        out.manifest.extend(sliced.manifest);
    }
    if too_short > 0 {
        log::info!("discarded {too_short} trace(s) shorter than one window after cleaning");
    }
    log::info!(
        "sliced {} window(s), discarded {}",
        out.windows.len(),
        out.discarded()
    );
    Ok(out)
}

/// Items that carry a class label.
pub trait Labeled {
    fn class(&self) -> usize;
}

impl Labeled for Window {
    fn class(&self) -> usize {
        self.label.index()
    }
}

impl Labeled for usize {
    fn class(&self) -> usize {
        *self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    /// Positions of the train items in the original sequence, ascending.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
}

/// Stratified, seeded train/test split. Each class contributes
/// `round(n_c * ratio)` items (at least one, at most `n_c - 1`) to train.
pub fn split<T: Labeled + Clone>(items: &[T], ratio: f64, seed: u64) -> Result<SplitDataset<T>> {
    let (train_indices, test_indices) = split_indices(items, ratio, seed)?;
    Ok(SplitDataset {
        train: train_indices.iter().map(|&i| items[i].clone()).collect(),
        test: test_indices.iter().map(|&i| items[i].clone()).collect(),
        train_indices,
        test_indices,
        seed,
        ratio,
    })
}

pub fn split_indices<T: Labeled>(
    items: &[T],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_class.entry(item.class()).or_default().push(i);
    }
    if by_class.is_empty() {
        return Err(Error::invalid("cannot split an empty item list"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in by_class {
        let n = idx.len();
        if n < 2 {
            return Err(Error::invalid(format!(
                "class {class} has {n} item(s); at least 2 are needed to split"
            )));
        }
        idx.shuffle(&mut rng);
        let n_train = ((n as f64 * ratio).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
