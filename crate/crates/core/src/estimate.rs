//! Sample analogues from micro-data and the calibration statistic for `c`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    joint_index, Dataset, ObservedCell, ObservedDistribution, Record, KEY_SEPARATOR,
};

/// Counts for one covariate cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CellCounts {
    /// `n_yzd[z][joint_index(y, d)]`.
    pub n_yzd: [[u64; 4]; 2],
    pub n_z: [u64; 2],
    pub n: u64,
}

impl CellCounts {
    pub fn add(&mut self, r: &Record) {
        self.n_yzd[usize::from(r.z)][joint_index(r.y, r.d)] += 1;
        self.n_z[usize::from(r.z)] += 1;
        self.n += 1;
    }
}

/// One [`CellCounts`] per key of `data`, in key order.
pub fn count_cells(data: &Dataset) -> Vec<CellCounts> {
    let mut counts = vec![CellCounts::default(); data.keys().len()];
    for r in data.records() {
        counts[r.cell as usize].add(r);
    }
    counts
}

/// What to do with a covariate cell that has no records in some arm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThinCellPolicy {
    #[default]
    Abort,
    /// Remove the cell and renormalise the remaining weights.
    Drop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub dist: ObservedDistribution,
    pub dropped: Vec<String>,
    /// Share of records in dropped cells.
    pub dropped_mass: f64,
}

/// Plug-in estimates with overlap failures treated as errors.
pub fn estimate_cells(data: &Dataset) -> Result<ObservedDistribution> {
    estimate_cells_with(data, ThinCellPolicy::Abort).map(|e| e.dist)
}

pub fn estimate_cells_with(data: &Dataset, policy: ThinCellPolicy) -> Result<Estimate> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let counts = count_cells(data);
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut dropped_n = 0u64;
    for (key, cc) in data.keys().iter().zip(&counts) {
        // keys without any record carry no mass and are silently absent
        if cc.n == 0 {
            continue;
        }
        if let Some(arm) = (0..2u8).find(|&z| cc.n_z[usize::from(z)] == 0) {
            match policy {
                ThinCellPolicy::Abort => {
                    return Err(Error::EmptyArm {
                        cell: key.clone(),
                        arm,
                    })
                }
                ThinCellPolicy::Drop => {
                    dropped.push(key.clone());
                    dropped_n += cc.n;
                    continue;
                }
            }
        }
        kept.push((key, cc));
    }
    if kept.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: u64 = kept.iter().map(|(_, cc)| cc.n).sum();
    let mut cells = BTreeMap::new();
    for (key, cc) in kept {
        let mut joint = [[0.0; 4]; 2];
        for z in 0..2 {
            for k in 0..4 {
                joint[z][k] = cc.n_yzd[z][k] as f64 / cc.n_z[z] as f64;
            }
        }
        let cell = ObservedCell {
            joint,
            propensity: cc.n_z[1] as f64 / cc.n as f64,
            weight: cc.n as f64 / total as f64,
        };
        cells.insert(key.clone(), cell);
    }
    Ok(Estimate {
        dist: ObservedDistribution::new(cells),
        dropped,
        dropped_mass: dropped_n as f64 / data.len() as f64,
    })
}

/// Column names used to read micro-data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvColumns {
    pub y: String,
    pub d: String,
    pub z: String,
    pub covariates: Vec<String>,
}

impl Default for CsvColumns {
    fn default() -> Self {
        Self {
            y: "y".into(),
            d: "d".into(),
            z: "z".into(),
            covariates: Vec::new(),
        }
    }
}

fn binary(column: &str, row: usize, value: &str) -> Result<u8> {
    match value.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::NonBinary {
            column: column.to_string(),
            row,
            value: other.to_string(),
        }),
    }
}

/// Reads a headed CSV. The covariate key of a row is its covariate values
/// joined by [`KEY_SEPARATOR`]; rows are numbered from 1 after the header.
pub fn read_csv<R: Read>(reader: R, cols: &CsvColumns) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (iy, id, iz) = (position(&cols.y)?, position(&cols.d)?, position(&cols.z)?);
    let ix = cols
        .covariates
        .iter()
        .map(|c| position(c))
        .collect::<Result<Vec<_>>>()?;

    let mut index: BTreeMap<String, u32> = BTreeMap::new();
    let mut keys = Vec::new();
    let mut records = Vec::new();
    let mut key = String::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 1;
        let y = binary(&cols.y, line, &row[iy])?;
        let d = binary(&cols.d, line, &row[id])?;
        let z = binary(&cols.z, line, &row[iz])?;
        key.clear();
        for (j, &p) in ix.iter().enumerate() {
            if j > 0 {
                key.push(KEY_SEPARATOR);
            }
            key.push_str(row[p].trim());
        }
        let cell = match index.get(key.as_str()) {
            Some(&c) => c,
            None => {
                keys.push(key.clone());
                let c = (keys.len() - 1) as u32;
                index.insert(key.clone(), c);
                c
            }
        };
        records.push(Record { y, d, z, cell });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(keys, records)
}

/// Result of the calibration statistic for one covariate column.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    pub column: usize,
    pub c_bar: f64,
    /// Full covariate cells entering the maximum.
    pub strata_used: usize,
    /// Cells left out because one of the two propensities is undefined.
    pub strata_skipped: usize,
    /// Cell attaining the maximum (covariate values joined by `|`).
    pub argmax: Option<String>,
}

/// Largest gap between `P(Z=1 | x_k, x_-k)` and `P(Z=1 | x_-k)` over observed cells.
pub fn calibrate_c(data: &Dataset, k: usize) -> Result<Calibration> {
    let counts = count_cells(data);
    let parts: Vec<Vec<&str>> = data
        .keys()
        .iter()
        .map(|key| key.split(KEY_SEPARATOR).collect())
        .collect();
    let width = parts.first().map_or(0, Vec::len);
    if k >= width || parts.iter().any(|p| p.len() != width) {
        return Err(Error::InvalidParameter(format!(
            "covariate index {k} out of range (records carry {width} covariate columns)"
        )));
    }
    let column_name = || format!("covariate #{k}");
    let values: BTreeSet<&str> = parts
        .iter()
        .zip(&counts)
        .filter(|(_, cc)| cc.n > 0)
        .map(|(p, _)| p[k])
        .collect();
    if values.len() < 2 {
        return Err(Error::SingleValueColumn(column_name()));
    }

    let rest = |p: &[&str]| -> Vec<String> {
        p.iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, v)| v.to_string())
            .collect()
    };
    let mut coarse: BTreeMap<Vec<String>, (u64, u64)> = BTreeMap::new();
    for (p, cc) in parts.iter().zip(&counts) {
        let e = coarse.entry(rest(p)).or_default();
        e.0 += cc.n_z[1];
        e.1 += cc.n;
    }

    let mut best = 0.0f64;
    let mut argmax = None;
    let (mut used, mut skipped) = (0, 0);
    for (p, cc) in parts.iter().zip(&counts) {
        let (c1, cn) = coarse[&rest(p)];
        if cc.n == 0 || cn == 0 {
            skipped += 1;
            continue;
        }
        used += 1;
        let gap = (cc.n_z[1] as f64 / cc.n as f64 - c1 as f64 / cn as f64).abs();
        if gap > best || argmax.is_none() {
            best = best.max(gap);
            argmax = Some(p.join("|"));
        }
    }
    Ok(Calibration {
        column: k,
        c_bar: best,
        strata_used: used,
        strata_skipped: skipped,
        argmax,
    })
}
