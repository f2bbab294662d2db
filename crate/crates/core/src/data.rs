//! CSV datasets and train-fitted preprocessing.
//!
//! One row per (trajectory, channel): `id,label,channel,v0,v1,...,v{L-1}`.
//! A header row whose first cell is `id` is optional. Rows of a trajectory
//! may appear in any order; trajectories keep the order of their first row.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stl::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub channel_names: Vec<String>,
    /// Original label text of each dense class index.
    pub label_map: Vec<String>,
}

impl Dataset {
    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn length(&self) -> usize {
        self.trajectories.first().map_or(0, Trajectory::len)
    }

    pub fn n_classes(&self) -> usize {
        self.label_map.len()
    }

    pub fn labels(&self) -> Vec<Option<usize>> {
        self.trajectories.iter().map(Trajectory::label).collect()
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, None)
}

/// Loads a dataset whose labels must map through an existing label map
/// (e.g. a test split read with the training split's classes).
pub fn load_dataset_with_labels(path: &Path, label_map: &[String]) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, Some(label_map))
}

struct Row {
    id: String,
    label: String,
    channel: String,
    values: Vec<f64>,
}

pub fn read_dataset<R: Read>(reader: R, label_map: Option<&[String]>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = n + 1;
        if n == 0 && rec.get(0) == Some("id") {
            continue;
        }
        if rec.len() < 4 {
            return Err(Error::Data(format!("line {line}: expected id,label,channel and at least one value")));
        }
        let values = rec
            .iter()
            .skip(3)
            .enumerate()
            .map(|(j, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Data(format!("line {line}: value {j} {cell:?} is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(Row { id: rec[0].to_string(), label: rec[1].to_string(), channel: rec[2].to_string(), values });
    }
    if rows.is_empty() {
        return Err(Error::Data("dataset has no rows".into()));
    }

    let channel_names = sorted_keys(rows.iter().map(|r| r.channel.as_str()));
    let label_map: Vec<String> = match label_map {
        Some(m) => m.to_vec(),
        None => sorted_keys(rows.iter().map(|r| r.label.as_str()).filter(|l| !l.is_empty())),
    };
    let channel_index: HashMap<&str, usize> = channel_names.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let label_index: HashMap<&str, usize> = label_map.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let len = rows[0].values.len();
    let d = channel_names.len();
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (String, Vec<Option<Vec<f64>>>)> = HashMap::new();
    for row in rows {
        if row.values.len() != len {
            return Err(Error::Data(format!(
                "trajectory {} channel {} has {} values, expected {len}",
                row.id,
                row.channel,
                row.values.len()
            )));
        }
        let entry = groups.entry(row.id.clone()).or_insert_with(|| {
            order.push(row.id.clone());
            (row.label.clone(), vec![None; d])
        });
        if entry.0 != row.label {
            return Err(Error::Data(format!("trajectory {} has conflicting labels", row.id)));
        }
        let slot = &mut entry.1[channel_index[row.channel.as_str()]];
        if slot.is_some() {
            return Err(Error::Data(format!("trajectory {} repeats channel {}", row.id, row.channel)));
        }
        *slot = Some(row.values);
    }

    let trajectories = order
        .into_iter()
        .map(|id| {
            let (label, chans) = groups.remove(&id).expect("grouped above");
            let label = match label.as_str() {
                "" => None,
                l => Some(*label_index.get(l).ok_or_else(|| Error::Data(format!("trajectory {id}: unknown label {l:?}")))?),
            };
            let mut data = Vec::with_capacity(d * len);
            for (c, ch) in chans.into_iter().enumerate() {
                let v = ch.ok_or_else(|| Error::Data(format!("trajectory {id} is missing channel {}", channel_names[c])))?;
                data.extend(v);
            }
            Trajectory::new(Array2::from_shape_vec((d, len), data).expect("exact shape"), label, id)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { trajectories, channel_names, label_map })
}

/// Distinct keys, numerically sorted when all are integers, else lexically.
fn sorted_keys<'a>(keys: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for k in keys {
        if !out.iter().any(|o| o == k) {
            out.push(k.to_string());
        }
    }
    if out.iter().all(|k| k.parse::<i64>().is_ok()) {
        out.sort_by_key(|k| k.parse::<i64>().expect("checked"));
    } else {
        out.sort();
    }
    out
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(ds, file)
}

/// Writes values with shortest round-trip formatting, so a reload is bitwise equal.
pub fn write_dataset<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(writer);
    let mut header = vec!["id".to_string(), "label".to_string(), "channel".to_string()];
    header.extend((0..ds.length()).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for tau in &ds.trajectories {
        let label = tau.label().map_or(String::new(), |l| ds.label_map[l].clone());
        for (c, name) in ds.channel_names.iter().enumerate() {
            let mut rec = vec![tau.id().to_string(), label.clone(), name.clone()];
            rec.extend(tau.channel(c).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

/// Channel standardisation and correlation pruning, fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub source_channels: usize,
    /// Original indices of the retained channels, ascending.
    pub keep: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub correlation_threshold: f64,
}

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel mean/std (population) and greedy pruning of channel pairs with
/// `|r| > threshold`: of each such pair the channel with the lower mean
/// absolute raw value is dropped (the higher index on ties).
pub fn fit_preprocess(train: &[Trajectory], threshold: f64) -> Result<PreprocessStats> {
    let first = train.first().ok_or_else(|| Error::InvalidParam("no training trajectories".into()))?;
    let d = first.channels();
    let flat: Vec<Vec<f64>> = (0..d).map(|c| train.iter().flat_map(|t| t.channel(c).to_vec()).collect()).collect();
    let n = flat[0].len() as f64;
    let mean: Vec<f64> = flat.iter().map(|v| v.iter().sum::<f64>() / n).collect();
    let std: Vec<f64> = flat
        .iter()
        .zip(&mean)
        .enumerate()
        .map(|(c, (v, m))| {
            let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
            if s < STD_FLOOR {
                warn!("channel {c} has (near) zero variance; std floored at {STD_FLOOR}");
            }
            s.max(STD_FLOOR)
        })
        .collect();
    let magnitude: Vec<f64> = flat.iter().map(|v| v.iter().map(|x| x.abs()).sum::<f64>() / n).collect();
    let mut dropped = vec![false; d];
    for i in 0..d {
        for j in i + 1..d {
            if dropped[i] || dropped[j] {
                continue;
            }
            let r = pearson(&flat[i], &flat[j]);
            if r.abs() > threshold {
                let drop = if magnitude[j] <= magnitude[i] { j } else { i };
                dropped[drop] = true;
            }
        }
    }
    let keep: Vec<usize> = (0..d).filter(|&c| !dropped[c]).collect();
    Ok(PreprocessStats {
        source_channels: d,
        mean: keep.iter().map(|&c| mean[c]).collect(),
        std: keep.iter().map(|&c| std[c]).collect(),
        keep,
        correlation_threshold: threshold,
    })
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

pub fn apply_preprocess(taus: &[Trajectory], stats: &PreprocessStats) -> Result<Vec<Trajectory>> {
    taus.iter()
        .map(|t| {
            if t.channels() != stats.source_channels {
                return Err(Error::Shape(format!(
                    "trajectory {} has {} channels, preprocessing expects {}",
                    t.id(),
                    t.channels(),
                    stats.source_channels
                )));
            }
            let values = Array2::from_shape_fn((stats.keep.len(), t.len()), |(c, i)| {
                (t.values()[[stats.keep[c], i]] - stats.mean[c]) / stats.std[c]
            });
            Trajectory::new(values, t.label(), t.id())
        })
        .collect()
}

/// Fits on `ds` unless `fit_stats` is given, then transforms `ds`.
pub fn preprocess(ds: &Dataset, fit_stats: Option<&PreprocessStats>, threshold: f64) -> Result<(Dataset, PreprocessStats)> {
    let stats = match fit_stats {
        Some(s) => s.clone(),
        None => fit_preprocess(&ds.trajectories, threshold)?,
    };
    let out = Dataset {
        trajectories: apply_preprocess(&ds.trajectories, &stats)?,
        channel_names: stats.keep.iter().map(|&c| ds.channel_names[c].clone()).collect(),
        label_map: ds.label_map.clone(),
    };
    Ok((out, stats))
}
