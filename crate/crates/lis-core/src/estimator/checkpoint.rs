//! Checkpoint files for resumable runs and cross-language comparison.
//!
//! Checkpoints are UTF-8 JSON carrying a time index and row-major matrix
//! blocks, one document kind for the running DMRE state and one for a solved
//! steady state.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BlockPattern;

use super::compact::{SolveStatus, SteadyState};
use super::{DmreState, GainSet};

#[derive(Serialize, Deserialize)]
struct MatrixEntry {
    i: usize,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl MatrixEntry {
    fn from_matrix(i: usize, m: &DMatrix<f64>) -> Self {
        let mut values = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                values.push(m[(r, c)]);
            }
        }
        Self { i, rows: m.nrows(), cols: m.ncols(), values }
    }

    fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.values.len() != self.rows * self.cols {
            return Err(Error::Parse(format!(
                "block {}: expected {} values, got {}",
                self.i,
                self.rows * self.cols,
                self.values.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.values))
    }
}

fn entries(blocks: &[DMatrix<f64>]) -> Vec<MatrixEntry> {
    blocks.iter().enumerate().map(|(i, m)| MatrixEntry::from_matrix(i, m)).collect()
}

fn matrices(entries: &[MatrixEntry]) -> Result<Vec<DMatrix<f64>>> {
    entries.iter().map(MatrixEntry::to_matrix).collect()
}

#[derive(Serialize, Deserialize)]
struct DmreCheckpoint {
    format: String,
    k: usize,
    p: Vec<MatrixEntry>,
    p_bar: Vec<MatrixEntry>,
}

#[derive(Serialize, Deserialize)]
struct SteadyCheckpoint {
    format: String,
    iterations: usize,
    residual: f64,
    sup_trace: f64,
    converged: bool,
    p_bar_star: Vec<MatrixEntry>,
    gains: Vec<MatrixEntry>,
}

pub fn save_dmre_checkpoint(state: &DmreState, path: &Path) -> Result<()> {
    let doc = DmreCheckpoint {
        format: "lis-dmre-v1".into(),
        k: state.time_index(),
        p: entries(state.posterior_blocks()),
        p_bar: entries(state.prior_blocks()),
    };
    std::fs::write(path, serde_json::to_string_pretty(&doc).expect("serialize"))?;
    Ok(())
}

pub fn load_dmre_checkpoint(path: &Path, pattern: &BlockPattern) -> Result<DmreState> {
    let doc: DmreCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Error::Parse(e.to_string()))?;
    if doc.format != "lis-dmre-v1" {
        return Err(Error::Parse(format!("unexpected checkpoint format {:?}", doc.format)));
    }
    let p = matrices(&doc.p)?;
    let p_bar = matrices(&doc.p_bar)?;
    DmreState::from_parts(pattern, doc.k, p, p_bar)
}

pub fn save_steady_checkpoint(steady: &SteadyState, path: &Path) -> Result<()> {
    let doc = SteadyCheckpoint {
        format: "lis-steady-v1".into(),
        iterations: steady.iterations,
        residual: steady.residual,
        sup_trace: steady.sup_trace,
        converged: steady.status == SolveStatus::Converged,
        p_bar_star: entries(&steady.p_bar_star),
        gains: entries(steady.k_star.blocks()),
    };
    std::fs::write(path, serde_json::to_string_pretty(&doc).expect("serialize"))?;
    Ok(())
}

pub fn load_steady_checkpoint(path: &Path) -> Result<SteadyState> {
    let doc: SteadyCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(|e| Error::Parse(e.to_string()))?;
    if doc.format != "lis-steady-v1" {
        return Err(Error::Parse(format!("unexpected checkpoint format {:?}", doc.format)));
    }
    Ok(SteadyState {
        p_bar_star: matrices(&doc.p_bar_star)?,
        k_star: GainSet::new(matrices(&doc.gains)?),
        iterations: doc.iterations,
        residual: doc.residual,
        sup_trace: doc.sup_trace,
        status: if doc.converged { SolveStatus::Converged } else { SolveStatus::MaxIter },
    })
}
