//! Model file format.
//!
//! Models are stored as UTF-8 JSON with the shape
//!
//! ```json
//! {
//!   "s": 2,
//!   "dims": [2, 1],
//!   "mdims": [1, 1],
//!   "horizon": null,
//!   "blocks": [ {"i": 0, "j": 0, "kind": "A", "values": [..row-major..]}, ... ],
//!   "schedule": [ {"start_k": 100, "blocks": [...]}, ... ]
//! }
//! ```
//!
//! Subsystem indices are 0-based. `blocks` holds the epoch starting at
//! `k = 0`; `schedule` holds later epochs. `C`/`Q`/`R` entries use `j == i`.
//! Serialization round-trips `f64` values losslessly.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{BlockPattern, EpochParams, LisModel};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct BlockEntry {
    i: usize,
    j: usize,
    kind: String,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EpochEntry {
    start_k: usize,
    blocks: Vec<BlockEntry>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    s: usize,
    dims: Vec<usize>,
    mdims: Vec<usize>,
    #[serde(default)]
    horizon: Option<usize>,
    blocks: Vec<BlockEntry>,
    #[serde(default)]
    schedule: Vec<EpochEntry>,
}

fn blocks_of_epoch(pattern: &BlockPattern, epoch: &EpochParams) -> Vec<BlockEntry> {
    let mut out = Vec::new();
    for (&(i, j), m) in epoch.a_blocks() {
        out.push(BlockEntry { i, j, kind: "A".into(), values: row_major(m) });
    }
    for i in 0..pattern.s() {
        out.push(BlockEntry { i, j: i, kind: "C".into(), values: row_major(&epoch.c[i]) });
        out.push(BlockEntry { i, j: i, kind: "Q".into(), values: row_major(&epoch.q[i]) });
        out.push(BlockEntry { i, j: i, kind: "R".into(), values: row_major(&epoch.r[i]) });
    }
    out
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            v.push(m[(r, c)]);
        }
    }
    v
}

fn epoch_from_entries(pattern: &BlockPattern, entries: &[BlockEntry]) -> Result<EpochParams> {
    let s = pattern.s();
    let mut a = BTreeMap::new();
    let mut c: Vec<Option<DMatrix<f64>>> = vec![None; s];
    let mut q: Vec<Option<DMatrix<f64>>> = vec![None; s];
    let mut r: Vec<Option<DMatrix<f64>>> = vec![None; s];
    for e in entries {
        if e.i >= s || e.j >= s {
            return Err(Error::Parse(format!("block index ({}, {}) out of range", e.i, e.j)));
        }
        let (rows, cols) = match e.kind.as_str() {
            "A" => (pattern.state_dim(e.i), pattern.state_dim(e.j)),
            "C" => (pattern.meas_dim(e.i), pattern.state_dim(e.i)),
            "Q" => (pattern.state_dim(e.i), pattern.state_dim(e.i)),
            "R" => (pattern.meas_dim(e.i), pattern.meas_dim(e.i)),
            other => return Err(Error::Parse(format!("unknown block kind {other:?}"))),
        };
        if e.kind != "A" && e.j != e.i {
            return Err(Error::Parse(format!("{} block must have j == i, got ({}, {})", e.kind, e.i, e.j)));
        }
        if e.values.len() != rows * cols {
            return Err(Error::Parse(format!(
                "{} block ({}, {}): expected {} values, got {}",
                e.kind,
                e.i,
                e.j,
                rows * cols,
                e.values.len()
            )));
        }
        let m = DMatrix::from_row_slice(rows, cols, &e.values);
        let clash = match e.kind.as_str() {
            "A" => a.insert((e.i, e.j), m).is_some(),
            "C" => c[e.i].replace(m).is_some(),
            "Q" => q[e.i].replace(m).is_some(),
            _ => r[e.i].replace(m).is_some(),
        };
        if clash {
            return Err(Error::Parse(format!("duplicate {} block ({}, {})", e.kind, e.i, e.j)));
        }
    }
    let unwrap_all = |v: Vec<Option<DMatrix<f64>>>, kind: &str| -> Result<Vec<DMatrix<f64>>> {
        v.into_iter()
            .enumerate()
            .map(|(i, b)| b.ok_or_else(|| Error::Parse(format!("missing {kind} block for subsystem {i}"))))
            .collect()
    };
    EpochParams::new(pattern, a, unwrap_all(c, "C")?, unwrap_all(q, "Q")?, unwrap_all(r, "R")?)
}

/// Serialize a model to the JSON document format.
pub fn model_to_json(model: &LisModel) -> String {
    let pattern = model.pattern();
    let epochs = model.epochs();
    let file = ModelFile {
        s: pattern.s(),
        dims: pattern.state_dims().to_vec(),
        mdims: pattern.meas_dims().to_vec(),
        horizon: model.horizon(),
        blocks: blocks_of_epoch(pattern, &epochs[0].1),
        schedule: epochs[1..]
            .iter()
            .map(|(start_k, e)| EpochEntry { start_k: *start_k, blocks: blocks_of_epoch(pattern, e) })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}

/// Parse a model from the JSON document format, validating dimensions,
/// pattern membership and covariance definiteness.
pub fn model_from_json(text: &str) -> Result<LisModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if file.dims.len() != file.s || file.mdims.len() != file.s {
        return Err(Error::Parse(format!(
            "s={} but dims has {} entries and mdims {}",
            file.s,
            file.dims.len(),
            file.mdims.len()
        )));
    }
    // The coupling pattern is taken from the union of declared off-diagonal
    // A blocks across all epochs.
    let mut offdiag = std::collections::BTreeSet::new();
    for e in std::iter::once(&file.blocks).chain(file.schedule.iter().map(|e| &e.blocks)) {
        for b in e {
            if b.kind == "A" && b.i != b.j {
                offdiag.insert((b.i, b.j));
            }
        }
    }
    let pattern = BlockPattern::new(file.dims.clone(), file.mdims.clone(), offdiag)?;
    let mut epochs = vec![(0, epoch_from_entries(&pattern, &file.blocks)?)];
    for entry in &file.schedule {
        epochs.push((entry.start_k, epoch_from_entries(&pattern, &entry.blocks)?));
    }
    LisModel::scheduled(pattern, epochs, file.horizon)
}

pub fn write_model(model: &LisModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(model))?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<LisModel> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text)
}
