//! Jump-system equivalent of an interconnected linear system.
//!
//! Any block-coupled recursion
//! `ζᵢ(k+1) = Γᵢᵢ(k)ζᵢ(k) + Σ_{j∈𝕀ᵢ(k)} Γᵢⱼ(k)ζⱼ(k)` is reproduced exactly
//! by a jump system: a mode process hops from source `j` to destination `i`
//! with probability `1/(|𝕀ᵢ(k)|+1)` whenever `j ∈ 𝕀ᵢ(k)∪{i}`, the state is
//! multiplied by `(|𝕀ᵢ(k)|+1)·Γᵢⱼ(k)` along the hop, and the per-mode
//! conditional means `ξᵢ(k) = Pr(ϖ(k)=i)·E[ξ(k)|ϖ(k)=i]` coincide with
//! `ζᵢ(k)`.
//!
//! The hop table need not be column-stochastic: summed over destinations,
//! a source's outgoing probabilities can fall short of one (or exceed it).
//! The conditional-mean and second-moment recursions below are algebraic
//! identities that hold regardless, so the table is used as-is and the
//! column sums are surfaced as a diagnostic; only sampling-based checks
//! require a proper kernel.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, is_psd, max_abs, symmetrize};

mod closed_loop;
pub use closed_loop::closed_loop_blocks;

/// Transition blocks of one time step, keyed `(destination, source)`.
pub type GammaBlocks = BTreeMap<(usize, usize), DMatrix<f64>>;

#[derive(Debug, Clone)]
struct GammaStep {
    blocks: GammaBlocks,
    in_neighbors: Vec<BTreeSet<usize>>,
}

/// Jump-system realization of a time-varying interconnected recursion.
#[derive(Debug, Clone)]
pub struct MarkovEquivalent {
    state_dims: Vec<usize>,
    steps: Vec<GammaStep>,
}

impl MarkovEquivalent {
    /// Build the realization from per-step transition blocks.
    ///
    /// `steps[k]` holds the `Γᵢⱼ(k)` (absent blocks are zero); a block is a
    /// neighbor link iff it has a nonzero entry.
    pub fn new(state_dims: Vec<usize>, steps: Vec<GammaBlocks>) -> Result<Self> {
        let s = state_dims.len();
        if s == 0 {
            return Err(Error::InvalidModel("need at least one node".into()));
        }
        let steps = steps
            .into_iter()
            .enumerate()
            .map(|(k, blocks)| {
                let mut in_neighbors = vec![BTreeSet::new(); s];
                for (&(i, j), block) in &blocks {
                    if i >= s || j >= s {
                        return Err(Error::InvalidModel(format!("block ({i}, {j}) out of range at k={k}")));
                    }
                    if block.shape() != (state_dims[i], state_dims[j]) {
                        return Err(Error::DimensionMismatch(format!(
                            "block ({i}, {j}) at k={k} must be {}×{}",
                            state_dims[i], state_dims[j]
                        )));
                    }
                    if !all_finite(block) {
                        return Err(Error::NonFinite(format!("block ({i}, {j}) at k={k}")));
                    }
                    if i != j && max_abs(block) > 0.0 {
                        in_neighbors[i].insert(j);
                    }
                }
                Ok(GammaStep { blocks, in_neighbors })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { state_dims, steps })
    }

    pub fn node_count(&self) -> usize {
        self.state_dims.len()
    }

    pub fn state_dims(&self) -> &[usize] {
        &self.state_dims
    }

    /// Number of time steps the realization covers.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn step(&self, k: usize) -> Result<&GammaStep> {
        self.steps.get(k).ok_or(Error::HorizonExceeded {
            requested: k,
            horizon: self.steps.len().saturating_sub(1),
        })
    }

    pub fn gamma_block(&self, k: usize, i: usize, j: usize) -> Result<Option<&DMatrix<f64>>> {
        Ok(self.step(k)?.blocks.get(&(i, j)))
    }

    pub fn in_neighbors(&self, k: usize, i: usize) -> Result<&BTreeSet<usize>> {
        Ok(&self.step(k)?.in_neighbors[i])
    }

    /// `|𝕀ᵢ(k)| + 1`, the state inflation along hops into `i`.
    pub fn scale(&self, k: usize, i: usize) -> Result<usize> {
        Ok(self.step(k)?.in_neighbors[i].len() + 1)
    }

    /// Hop probability `Pr(ϖ(k+1)=i | ϖ(k)=j)`.
    pub fn transition_probability(&self, k: usize, i: usize, j: usize) -> Result<f64> {
        let step = self.step(k)?;
        if j == i || step.in_neighbors[i].contains(&j) {
            Ok(1.0 / (step.in_neighbors[i].len() + 1) as f64)
        } else {
            Ok(0.0)
        }
    }

    /// Outgoing probability mass per source: `Σᵢ p_ij(k)` for each `j`.
    pub fn column_sums(&self, k: usize) -> Result<Vec<f64>> {
        let s = self.node_count();
        let mut sums = vec![0.0; s];
        for j in 0..s {
            for i in 0..s {
                sums[j] += self.transition_probability(k, i, j)?;
            }
        }
        Ok(sums)
    }

    /// Sources whose outgoing mass differs from one at time `k`
    /// (sub- or super-stochastic columns), with the offending sums.
    pub fn improper_columns(&self, k: usize, tol: f64) -> Result<Vec<(usize, f64)>> {
        Ok(self
            .column_sums(k)?
            .into_iter()
            .enumerate()
            .filter(|(_, sum)| (sum - 1.0).abs() > tol)
            .collect())
    }

    /// Whether the hop table is a proper probability kernel at every step.
    pub fn is_proper(&self, tol: f64) -> Result<bool> {
        for k in 0..self.len() {
            if !self.improper_columns(k, tol)?.is_empty() {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// One step of the conditional-mean recursion, computed through the hop
/// table: `ξᵢ(k+1) = Σ_{j∈𝕀ᵢ(k)∪{i}} p_ij(k)·(|𝕀ᵢ(k)|+1)·Γᵢⱼ(k)·ξⱼ(k)`.
///
/// Seeded with the interconnected system's initial state this reproduces its
/// trajectory exactly.
pub fn mean_recursion_step(
    me: &MarkovEquivalent,
    xi: &[DVector<f64>],
    k: usize,
) -> Result<Vec<DVector<f64>>> {
    let s = me.node_count();
    if xi.len() != s {
        return Err(Error::DimensionMismatch("one state block per node".into()));
    }
    let step = me.step(k)?;
    let mut next = Vec::with_capacity(s);
    for i in 0..s {
        let mut acc = DVector::zeros(me.state_dims[i]);
        let scale = (step.in_neighbors[i].len() + 1) as f64;
        for &j in step.in_neighbors[i].iter().chain(std::iter::once(&i)) {
            if xi[j].len() != me.state_dims[j] {
                return Err(Error::DimensionMismatch(format!("state block {j}")));
            }
            if let Some(gamma) = step.blocks.get(&(i, j)) {
                let p = me.transition_probability(k, i, j)?;
                acc += p * scale * (gamma * &xi[j]);
            }
        }
        next.push(acc);
    }
    Ok(next)
}

/// Per-node second moments `Ξᵢ(k) = Pr(ϖ(k)=i)·E[ξξᵀ|ϖ(k)=i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMomentState {
    k: usize,
    xi: Vec<DMatrix<f64>>,
}

impl SecondMomentState {
    pub fn new(me: &MarkovEquivalent, k: usize, xi: Vec<DMatrix<f64>>) -> Result<Self> {
        if xi.len() != me.node_count() {
            return Err(Error::DimensionMismatch("one moment block per node".into()));
        }
        for (i, block) in xi.iter().enumerate() {
            let ni = me.state_dims[i];
            if block.shape() != (ni, ni) {
                return Err(Error::DimensionMismatch(format!("moment block {i} must be {ni}×{ni}")));
            }
            if !is_psd(block, 1e-10 * max_abs(block).max(1.0)) {
                return Err(Error::NotPositiveDefinite(format!("moment block {i}")));
            }
        }
        Ok(Self { k, xi })
    }

    pub fn time_index(&self) -> usize {
        self.k
    }

    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.xi[i]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.xi
    }

    pub fn total_trace(&self) -> f64 {
        self.xi.iter().map(|x| x.trace()).sum()
    }
}

/// One step of the second-moment recursion:
/// `Ξᵢ(k+1) = Σ_{j∈𝕀ᵢ(k)∪{i}} (|𝕀ᵢ(k)|+1)·Γᵢⱼ(k)Ξⱼ(k)Γᵢⱼᵀ(k)`.
pub fn second_moment_step(me: &MarkovEquivalent, sm: &SecondMomentState, k: usize) -> Result<SecondMomentState> {
    if sm.k != k {
        return Err(Error::InvalidModel(format!(
            "second-moment state is at k={}, step requested at k={k}",
            sm.k
        )));
    }
    let s = me.node_count();
    let step = me.step(k)?;
    let mut next = Vec::with_capacity(s);
    for i in 0..s {
        let ni = me.state_dims[i];
        let mut acc = DMatrix::zeros(ni, ni);
        let scale = (step.in_neighbors[i].len() + 1) as f64;
        for &j in step.in_neighbors[i].iter().chain(std::iter::once(&i)) {
            if let Some(gamma) = step.blocks.get(&(i, j)) {
                acc += scale * (gamma * &sm.xi[j] * gamma.transpose());
            }
        }
        symmetrize(&mut acc);
        next.push(acc);
    }
    Ok(SecondMomentState { k: k + 1, xi: next })
}

/// Outcome of the trace bound `‖ē(k)‖² ≤ Σᵢ Tr(Ξᵢ(k))`.
#[derive(Debug, Clone, Copy)]
pub struct TraceBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Check the norm-vs-trace bound for an error vector split into per-node
/// blocks. The bound is the Jensen gap between the squared conditional means
/// and the conditional second moments, so it holds with equality on
/// single-support (degenerate) mode distributions at the seed.
pub fn error_trace_bound(sm: &SecondMomentState, error_blocks: &[DVector<f64>]) -> Result<TraceBound> {
    if error_blocks.len() != sm.xi.len() {
        return Err(Error::DimensionMismatch("one error block per node".into()));
    }
    let lhs: f64 = error_blocks.iter().map(|e| e.norm_squared()).sum();
    let rhs = sm.total_trace();
    Ok(TraceBound { lhs, rhs, holds: lhs <= rhs + 1e-9 * rhs.abs().max(1.0) })
}
