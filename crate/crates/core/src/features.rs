//! Window-level feature engineering.
//!
//! Three fixed configurations are shipped:
//!
//! | config    | distance | speed | accel x/y/z          | gyro x/y/z | context          |
//! |-----------|----------|-------|----------------------|------------|------------------|
//! | `config1` | mean     | mean  | std dev              | std dev    | first speed limit|
//! | `config2` | mean     | mean  | variance             | variance   | overspeed count  |
//! | `config3` | range    | range | mean accel + brake   | variance   | overspeed count  |

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Window;
use crate::error::{Error, Result};
use crate::simgen::SampleRecord;
use crate::{DT, SENSOR_MAX_RANGE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Mean,
    Variance,
    StdDev,
    Range,
    First,
    /// Mean first derivative, (x[n-1] - x[0]) / ((n - 1) dt).
    Derivative,
    /// Mean of max(x, 0) over the whole window.
    PositivePartMean,
    /// Mean of max(-x, 0) over the whole window.
    NegativePartMean,
}

/// Applies a scalar summary to a series.
pub fn transform(series: &[f64], kind: Transform) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::invalid("cannot summarize an empty series"));
    }
    let n = series.len() as f64;
    let mean = || series.iter().sum::<f64>() / n;
    let variance = || {
        let mu = mean();
        series.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n
    };
    Ok(match kind {
        Transform::Mean => mean(),
        Transform::Variance => variance(),
        Transform::StdDev => variance().sqrt(),
        Transform::Range => {
            let (lo, hi) = series
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                    (lo.min(x), hi.max(x))
                });
            hi - lo
        }
        Transform::First => series[0],
        Transform::Derivative => {
            if series.len() < 2 {
                0.0
            } else {
                (series[series.len() - 1] - series[0]) / ((n - 1.0) * DT)
            }
        }
        Transform::PositivePartMean => series.iter().map(|x| x.max(0.0)).sum::<f64>() / n,
        Transform::NegativePartMean => series.iter().map(|x| (-x).max(0.0)).sum::<f64>() / n,
    })
}

/// How the overspeed event feature counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverspeedMode {
    /// Rising edges into speed > limit.
    #[default]
    Episodes,
    /// Samples with speed > limit.
    Samples,
}

/// Number of overspeed episodes: indices where the speed rises above the
/// limit after having been at or below it (or at the very first sample).
pub fn overspeed_count(speed: &[f64], limit: &[f64]) -> Result<usize> {
    overspeed_count_with(speed, limit, OverspeedMode::Episodes)
}

pub fn overspeed_count_with(speed: &[f64], limit: &[f64], mode: OverspeedMode) -> Result<usize> {
    if speed.len() != limit.len() {
        return Err(Error::invalid(format!(
            "speed and limit lengths differ ({} vs {})",
            speed.len(),
            limit.len()
        )));
    }
    let over: Vec<bool> = speed.iter().zip(limit).map(|(s, l)| s > l).collect();
    Ok(match mode {
        OverspeedMode::Samples => over.iter().filter(|&&o| o).count(),
        OverspeedMode::Episodes => (0..over.len())
            .filter(|&i| over[i] && (i == 0 || !over[i - 1]))
            .count(),
    })
}

/// Splits a signed axis into its acceleration (positive) and braking
/// (negative, reported as magnitude) parts.
pub fn split_accel_brake(axis: &[f64]) -> (Vec<f64>, Vec<f64>) {
    axis.iter().map(|&x| (x.max(0.0), (-x).max(0.0))).unzip()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Distance,
    Speed,
    AccelX,
    AccelY,
    AccelZ,
    GyroX,
    GyroY,
    GyroZ,
    SpeedLimit,
}

impl Channel {
    pub fn read(self, r: &SampleRecord) -> f64 {
        match self {
            Channel::Distance => r.obstacle_distance.unwrap_or(SENSOR_MAX_RANGE),
            Channel::Speed => r.speed,
            Channel::AccelX => r.accel_x,
            Channel::AccelY => r.accel_y,
            Channel::AccelZ => r.accel_z,
            Channel::GyroX => r.gyro_x,
            Channel::GyroY => r.gyro_y,
            Channel::GyroZ => r.gyro_z,
            Channel::SpeedLimit => r.speed_limit,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSource {
    Statistic {
        channel: Channel,
        transform: Transform,
    },
    OverspeedCount,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub name: String,
    pub source: FeatureSource,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub name: String,
    pub entries: Vec<FeatureEntry>,
    #[serde(default)]
    pub overspeed_mode: OverspeedMode,
}

pub const CONFIG_NAMES: [&str; 3] = ["config1", "config2", "config3"];

fn stat(name: &str, channel: Channel, transform: Transform) -> FeatureEntry {
    FeatureEntry {
        name: name.to_string(),
        source: FeatureSource::Statistic { channel, transform },
    }
}

fn overspeed() -> FeatureEntry {
    FeatureEntry {
        name: "overspeed_count".to_string(),
        source: FeatureSource::OverspeedCount,
    }
}

const IMU: [(&str, Channel); 6] = [
    ("accel_x", Channel::AccelX),
    ("accel_y", Channel::AccelY),
    ("accel_z", Channel::AccelZ),
    ("gyro_x", Channel::GyroX),
    ("gyro_y", Channel::GyroY),
    ("gyro_z", Channel::GyroZ),
];

impl FeatureConfig {
    /// Looks up one of the shipped configurations.
    pub fn by_name(name: &str) -> Result<FeatureConfig> {
        let entries = match name {
            "config1" => {
                let mut e = vec![
                    stat("distance", Channel::Distance, Transform::Mean),
                    stat("speed", Channel::Speed, Transform::Mean),
                ];
                e.extend(IMU.iter().map(|&(n, c)| stat(n, c, Transform::StdDev)));
                e.push(stat("speed_limit", Channel::SpeedLimit, Transform::First));
                e
            }
            "config2" => {
                let mut e = vec![
                    stat("distance", Channel::Distance, Transform::Mean),
                    stat("speed", Channel::Speed, Transform::Mean),
                ];
                e.extend(IMU.iter().map(|&(n, c)| stat(n, c, Transform::Variance)));
                e.push(overspeed());
                e
            }
            "config3" => {
                let mut e = vec![
                    stat("distance", Channel::Distance, Transform::Range),
                    stat("speed", Channel::Speed, Transform::Range),
                ];
                let accel = [
                    ("x", Channel::AccelX),
                    ("y", Channel::AccelY),
                    ("z", Channel::AccelZ),
                ];
                for (axis, c) in accel {
                    e.push(stat(
                        &format!("accel_{axis}"),
                        c,
                        Transform::PositivePartMean,
                    ));
                }
                for (axis, c) in accel {
                    e.push(stat(
                        &format!("brake_{axis}"),
                        c,
                        Transform::NegativePartMean,
                    ));
                }
                e.extend(
                    IMU[3..]
                        .iter()
                        .map(|&(n, c)| stat(n, c, Transform::Variance)),
                );
                e.push(overspeed());
                e
            }
            other => {
                return Err(Error::invalid(format!(
                    "unknown feature config '{other}' (expected one of {})",
                    CONFIG_NAMES.join(", ")
                )))
            }
        };
        Ok(FeatureConfig {
            name: name.to_string(),
            entries,
            overspeed_mode: OverspeedMode::Episodes,
        })
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRef {
    pub source_id: String,
    pub start_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: usize,
    pub window_ref: Option<WindowRef>,
}

/// Computes the configured features of one window.
pub fn featurize(window: &Window, config: &FeatureConfig) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(config.entries.len());
    for entry in &config.entries {
        let value = match entry.source {
            FeatureSource::Statistic {
                channel,
                transform: kind,
            } => transform(&window.channel(|r| channel.read(r)), kind)?,
            FeatureSource::OverspeedCount => {
                let speed = window.channel(|r| r.speed);
                let limit = window.channel(|r| r.speed_limit);
                overspeed_count_with(&speed, &limit, config.overspeed_mode)? as f64
            }
        };
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "feature {} is not finite in window {}@{}",
                entry.name, window.source_id, window.start_index
            )));
        }
        values.push(value);
    }
    Ok(FeatureVector {
        values,
        label: window.label.index(),
        window_ref: Some(WindowRef {
            source_id: window.source_id.clone(),
            start_index: window.start_index,
        }),
    })
}

/// Named feature rows sharing one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: Vec<FeatureVector>,
}

impl FeatureMatrix {
    pub fn from_windows(windows: &[Window], config: &FeatureConfig) -> Result<FeatureMatrix> {
        use rayon::prelude::*;
        let rows = windows
            .par_iter()
            .map(|w| featurize(w, config))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureMatrix {
            names: config.feature_names(),
            rows,
        })
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn x(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    pub fn y(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Writes the matrix as CSV: one column per feature, then `label`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let mut header = self.names.clone();
        header.push("label".to_string());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut fields: Vec<String> = row.values.iter().map(|v| v.to_string()).collect();
            fields.push(row.label.to_string());
            w.write_record(&fields)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<FeatureMatrix> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
        let header = rdr.headers()?.clone();
        let ncol = header.len();
        if ncol < 2 || &header[ncol - 1] != "label" {
            return Err(Error::Schema(
                "feature file must have at least one feature column followed by 'label'".into(),
            ));
        }
        let names: Vec<String> = header.iter().take(ncol - 1).map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != ncol {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {ncol} fields, found {}", rec.len()),
                });
            }
            let values = rec
                .iter()
                .take(ncol - 1)
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("invalid feature value '{f}'"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let label = rec[ncol - 1]
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid label '{}'", &rec[ncol - 1]),
                })?;
            rows.push(FeatureVector {
                values,
                label,
                window_ref: None,
            });
        }
        Ok(FeatureMatrix { names, rows })
    }
}
