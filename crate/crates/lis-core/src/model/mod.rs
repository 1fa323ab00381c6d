//! Block-structured models of large-scale interconnected systems.
//!
//! A model is a global linear state-space system partitioned into `s`
//! subsystems. The transition matrix carries the interconnection structure:
//! an off-diagonal block `A_ij` couples subsystem `j`'s state into subsystem
//! `i`'s dynamics. Measurements, process noise covariance and measurement
//! noise covariance are block-diagonal. Parameters may switch at scheduled
//! times (epochs); a time-invariant model is a single epoch.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, max_abs, min_eigenvalue, symmetrized};

mod io;
mod power;

pub use io::{model_from_json, model_to_json, read_model, write_model};
pub use power::{
    generate_power_system, power_measurement_matrix, power_system_model, PowerAreaParams,
    PowerParamRanges, PowerSystemConfig, PowerSystemParams, TieTopology,
};

/// Sparsity pattern of a block-partitioned system.
///
/// Subsystems are indexed `0..s`. `nonzero_offdiag` lists the ordered pairs
/// `(i, j)`, `i ≠ j`, whose coupling block `A_ij` is allowed to be nonzero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPattern {
    state_dims: Vec<usize>,
    meas_dims: Vec<usize>,
    nonzero_offdiag: BTreeSet<(usize, usize)>,
    state_offsets: Vec<usize>,
    meas_offsets: Vec<usize>,
}

impl BlockPattern {
    pub fn new(
        state_dims: Vec<usize>,
        meas_dims: Vec<usize>,
        nonzero_offdiag: BTreeSet<(usize, usize)>,
    ) -> Result<Self> {
        let s = state_dims.len();
        if s == 0 {
            return Err(Error::InvalidModel("a model needs at least one subsystem".into()));
        }
        if meas_dims.len() != s {
            return Err(Error::DimensionMismatch(format!(
                "{} state blocks but {} measurement blocks",
                s,
                meas_dims.len()
            )));
        }
        if state_dims.iter().any(|&n| n == 0) {
            return Err(Error::InvalidModel("zero-dimensional subsystem state".into()));
        }
        for &(i, j) in &nonzero_offdiag {
            if i >= s || j >= s {
                return Err(Error::InvalidModel(format!(
                    "coupling pair ({i}, {j}) out of range for s={s}"
                )));
            }
            if i == j {
                return Err(Error::InvalidModel(format!(
                    "coupling pair ({i}, {i}) is diagonal; diagonal blocks are always allowed"
                )));
            }
        }
        let mut state_offsets = Vec::with_capacity(s);
        let mut meas_offsets = Vec::with_capacity(s);
        let (mut so, mut mo) = (0, 0);
        for i in 0..s {
            state_offsets.push(so);
            meas_offsets.push(mo);
            so += state_dims[i];
            mo += meas_dims[i];
        }
        Ok(Self { state_dims, meas_dims, nonzero_offdiag, state_offsets, meas_offsets })
    }

    /// Fully dense off-diagonal pattern on `s` subsystems.
    pub fn fully_coupled(state_dims: Vec<usize>, meas_dims: Vec<usize>) -> Result<Self> {
        let s = state_dims.len();
        let pairs = (0..s)
            .flat_map(|i| (0..s).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        Self::new(state_dims, meas_dims, pairs)
    }

    pub fn s(&self) -> usize {
        self.state_dims.len()
    }

    pub fn state_dim(&self, i: usize) -> usize {
        self.state_dims[i]
    }

    pub fn meas_dim(&self, i: usize) -> usize {
        self.meas_dims[i]
    }

    pub fn state_dims(&self) -> &[usize] {
        &self.state_dims
    }

    pub fn meas_dims(&self) -> &[usize] {
        &self.meas_dims
    }

    /// Global state dimension `n = Σ nᵢ`.
    pub fn total_state_dim(&self) -> usize {
        self.state_dims.iter().sum()
    }

    /// Global measurement dimension `m = Σ mᵢ`.
    pub fn total_meas_dim(&self) -> usize {
        self.meas_dims.iter().sum()
    }

    /// Row offset of subsystem `i` in the stacked state vector.
    pub fn state_offset(&self, i: usize) -> usize {
        self.state_offsets[i]
    }

    pub fn meas_offset(&self, i: usize) -> usize {
        self.meas_offsets[i]
    }

    pub fn nonzero_offdiag(&self) -> &BTreeSet<(usize, usize)> {
        &self.nonzero_offdiag
    }

    pub fn allows_block(&self, i: usize, j: usize) -> bool {
        i == j || self.nonzero_offdiag.contains(&(i, j))
    }
}

/// One epoch's worth of system parameters.
///
/// `a` maps `(i, j)` to the transition block `A_ij` (diagonal included);
/// blocks absent from the map are zero. `c`, `q`, `r` hold per-subsystem
/// measurement and covariance blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochParams {
    a: BTreeMap<(usize, usize), DMatrix<f64>>,
    c: Vec<DMatrix<f64>>,
    q: Vec<DMatrix<f64>>,
    r: Vec<DMatrix<f64>>,
}

impl EpochParams {
    pub fn new(
        pattern: &BlockPattern,
        a: BTreeMap<(usize, usize), DMatrix<f64>>,
        c: Vec<DMatrix<f64>>,
        q: Vec<DMatrix<f64>>,
        r: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let s = pattern.s();
        for (&(i, j), block) in &a {
            if i >= s || j >= s {
                return Err(Error::InvalidModel(format!("A block ({i}, {j}) out of range")));
            }
            if !pattern.allows_block(i, j) {
                return Err(Error::InvalidModel(format!(
                    "A block ({i}, {j}) is outside the declared coupling pattern"
                )));
            }
            let want = (pattern.state_dim(i), pattern.state_dim(j));
            if block.shape() != want {
                return Err(Error::DimensionMismatch(format!(
                    "A block ({i}, {j}) is {:?}, pattern requires {want:?}",
                    block.shape()
                )));
            }
            if !all_finite(block) {
                return Err(Error::NonFinite(format!("A block ({i}, {j})")));
            }
        }
        if c.len() != s || q.len() != s || r.len() != s {
            return Err(Error::DimensionMismatch(
                "C, Q, R must each have one block per subsystem".into(),
            ));
        }
        for i in 0..s {
            let (ni, mi) = (pattern.state_dim(i), pattern.meas_dim(i));
            if c[i].shape() != (mi, ni) {
                return Err(Error::DimensionMismatch(format!(
                    "C block {i} is {:?}, pattern requires ({mi}, {ni})",
                    c[i].shape()
                )));
            }
            if q[i].shape() != (ni, ni) {
                return Err(Error::DimensionMismatch(format!("Q block {i} must be {ni}×{ni}")));
            }
            if r[i].shape() != (mi, mi) {
                return Err(Error::DimensionMismatch(format!("R block {i} must be {mi}×{mi}")));
            }
            if !all_finite(&c[i]) || !all_finite(&q[i]) || !all_finite(&r[i]) {
                return Err(Error::NonFinite(format!("C/Q/R block {i}")));
            }
            let qscale = max_abs(&q[i]).max(1.0);
            if min_eigenvalue(&q[i]) < -1e-10 * qscale {
                return Err(Error::NotPositiveDefinite(format!("Q block {i}")));
            }
            if symmetrized(&r[i]).cholesky().is_none() {
                return Err(Error::NotPositiveDefinite(format!("R block {i}")));
            }
        }
        Ok(Self { a, c, q, r })
    }

    pub fn a_blocks(&self) -> &BTreeMap<(usize, usize), DMatrix<f64>> {
        &self.a
    }

    pub fn c_blocks(&self) -> &[DMatrix<f64>] {
        &self.c
    }

    pub fn q_blocks(&self) -> &[DMatrix<f64>] {
        &self.q
    }

    pub fn r_blocks(&self) -> &[DMatrix<f64>] {
        &self.r
    }
}

/// Time-indexed block state-space model of an interconnected system.
#[derive(Debug, Clone)]
pub struct LisModel {
    pattern: BlockPattern,
    /// `(start_k, params)`, sorted by `start_k`; the first entry starts at 0
    /// and the last extends indefinitely (up to `horizon`, when declared).
    epochs: Vec<(usize, EpochParams)>,
    horizon: Option<usize>,
}

impl LisModel {
    pub fn time_invariant(pattern: BlockPattern, params: EpochParams) -> Self {
        Self { pattern, epochs: vec![(0, params)], horizon: None }
    }

    pub fn scheduled(
        pattern: BlockPattern,
        epochs: Vec<(usize, EpochParams)>,
        horizon: Option<usize>,
    ) -> Result<Self> {
        if epochs.is_empty() {
            return Err(Error::InvalidModel("schedule needs at least one epoch".into()));
        }
        if epochs[0].0 != 0 {
            return Err(Error::InvalidModel("first epoch must start at k=0".into()));
        }
        if epochs.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidModel("epoch start times must be strictly increasing".into()));
        }
        Ok(Self { pattern, epochs, horizon })
    }

    pub fn pattern(&self) -> &BlockPattern {
        &self.pattern
    }

    pub fn s(&self) -> usize {
        self.pattern.s()
    }

    pub fn is_time_invariant(&self) -> bool {
        self.epochs.len() == 1
    }

    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    pub fn epochs(&self) -> &[(usize, EpochParams)] {
        &self.epochs
    }

    pub fn check_time(&self, k: usize) -> Result<()> {
        match self.horizon {
            Some(h) if k > h => Err(Error::HorizonExceeded { requested: k, horizon: h }),
            _ => Ok(()),
        }
    }

    pub fn epoch_at(&self, k: usize) -> &EpochParams {
        let idx = self.epochs.partition_point(|(start, _)| *start <= k) - 1;
        &self.epochs[idx].1
    }

    /// Transition block `A_ij(k)`, `None` when structurally zero.
    pub fn a_block(&self, k: usize, i: usize, j: usize) -> Option<&DMatrix<f64>> {
        self.epoch_at(k).a.get(&(i, j))
    }

    pub fn c_block(&self, k: usize, i: usize) -> &DMatrix<f64> {
        &self.epoch_at(k).c[i]
    }

    pub fn q_block(&self, k: usize, i: usize) -> &DMatrix<f64> {
        &self.epoch_at(k).q[i]
    }

    pub fn r_block(&self, k: usize, i: usize) -> &DMatrix<f64> {
        &self.epoch_at(k).r[i]
    }

    pub fn assemble_a(&self, k: usize) -> DMatrix<f64> {
        let n = self.pattern.total_state_dim();
        let mut a = DMatrix::zeros(n, n);
        for (&(i, j), block) in &self.epoch_at(k).a {
            a.view_mut(
                (self.pattern.state_offset(i), self.pattern.state_offset(j)),
                block.shape(),
            )
            .copy_from(block);
        }
        a
    }

    pub fn assemble_c(&self, k: usize) -> DMatrix<f64> {
        let (n, m) = (self.pattern.total_state_dim(), self.pattern.total_meas_dim());
        let mut c = DMatrix::zeros(m, n);
        for i in 0..self.s() {
            let block = self.c_block(k, i);
            c.view_mut((self.pattern.meas_offset(i), self.pattern.state_offset(i)), block.shape())
                .copy_from(block);
        }
        c
    }

    pub fn assemble_q(&self, k: usize) -> DMatrix<f64> {
        crate::linalg::block_diag(&self.epoch_at(k).q)
    }

    pub fn assemble_r(&self, k: usize) -> DMatrix<f64> {
        crate::linalg::block_diag(&self.epoch_at(k).r)
    }

    /// Copy of the model with every off-diagonal transition block multiplied
    /// by `factor` (diagonal blocks, C, Q, R untouched).
    pub fn with_scaled_couplings(&self, factor: f64) -> Result<LisModel> {
        if !factor.is_finite() {
            return Err(Error::NonFinite("coupling scale".into()));
        }
        let epochs = self
            .epochs
            .iter()
            .map(|(start, e)| {
                let a = e
                    .a
                    .iter()
                    .map(|(&(i, j), block)| {
                        let scaled = if i == j { block.clone() } else { block * factor };
                        ((i, j), scaled)
                    })
                    .collect();
                EpochParams::new(&self.pattern, a, e.c.clone(), e.q.clone(), e.r.clone())
                    .map(|params| (*start, params))
            })
            .collect::<Result<Vec<_>>>()?;
        LisModel::scheduled(self.pattern.clone(), epochs, self.horizon)
    }
}

/// In/out neighbor sets of every subsystem at one time index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    in_neighbors: Vec<BTreeSet<usize>>,
    out_neighbors: Vec<BTreeSet<usize>>,
}

impl Topology {
    /// In-neighbors of `i`: subsystems `j ≠ i` with `A_ij ≠ 0`.
    pub fn in_neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.in_neighbors[i]
    }

    /// Out-neighbors of `i`: subsystems `j ≠ i` with `A_ji ≠ 0`.
    pub fn out_neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.out_neighbors[i]
    }

    /// Number of directed coupling edges `(i, j)` with `A_ij ≠ 0`, `i ≠ j`.
    pub fn edge_count(&self) -> usize {
        self.in_neighbors.iter().map(|s| s.len()).sum()
    }
}

/// Derive the neighbor topology from block sparsity at time `k`.
///
/// A block counts as zero iff its max-magnitude entry is at or below
/// `threshold` (exact zero for `threshold = 0`).
pub fn build_topology_with_threshold(
    model: &LisModel,
    k: usize,
    threshold: f64,
) -> Result<Topology> {
    model.check_time(k)?;
    let s = model.s();
    let mut in_neighbors = vec![BTreeSet::new(); s];
    let mut out_neighbors = vec![BTreeSet::new(); s];
    for (&(i, j), block) in &model.epoch_at(k).a {
        if i != j && max_abs(block) > threshold {
            in_neighbors[i].insert(j);
            out_neighbors[j].insert(i);
        }
    }
    Ok(Topology { in_neighbors, out_neighbors })
}

/// [`build_topology_with_threshold`] with an exact-zero threshold.
pub fn build_topology(model: &LisModel, k: usize) -> Result<Topology> {
    build_topology_with_threshold(model, k, 0.0)
}

/// Which neighbor count the decoupling variables are derived from.
///
/// The out-neighbor choice reads the topology one step ahead and carries the
/// exponential-stability guarantee in the time-varying case; the in-neighbor
/// choice reads the current topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DecouplingPolicy {
    OutNeighbor,
    InNeighbor,
}

impl std::fmt::Display for DecouplingPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecouplingPolicy::OutNeighbor => write!(f, "out"),
            DecouplingPolicy::InNeighbor => write!(f, "in"),
        }
    }
}

/// Per-subsystem decoupling variables ϑᵢ(k).
///
/// Out-neighbor policy: `ϑᵢ(k) = √(|𝕆ᵢ(k+1)| + 1)`; in-neighbor policy:
/// `ϑᵢ(k) = √(|𝕀ᵢ(k)| + 1)`. Always ≥ 1, and exactly 1 when the referenced
/// neighbor set is empty.
pub fn decoupling_variables(
    model: &LisModel,
    policy: DecouplingPolicy,
    k: usize,
) -> Result<Vec<f64>> {
    let theta = match policy {
        DecouplingPolicy::OutNeighbor => {
            let topo = build_topology(model, k + 1)?;
            (0..model.s())
                .map(|i| ((topo.out_neighbors(i).len() + 1) as f64).sqrt())
                .collect()
        }
        DecouplingPolicy::InNeighbor => {
            let topo = build_topology(model, k)?;
            (0..model.s())
                .map(|i| ((topo.in_neighbors(i).len() + 1) as f64).sqrt())
                .collect()
        }
    };
    Ok(theta)
}

/// First-order (Euler) discretization of continuous-time transition blocks:
/// `A_ij = δ_ij I + T_s A^c_ij`.
///
/// This preserves the off-diagonal sparsity pattern exactly; an exact
/// zero-order hold would fill in coupling blocks along indirect paths.
pub fn discretize_a(
    pattern: &BlockPattern,
    a_continuous: &BTreeMap<(usize, usize), DMatrix<f64>>,
    sampling_period: f64,
) -> Result<BTreeMap<(usize, usize), DMatrix<f64>>> {
    if !(sampling_period > 0.0) {
        return Err(Error::InvalidModel(format!(
            "sampling period must be positive, got {sampling_period}"
        )));
    }
    let mut out = BTreeMap::new();
    for (&(i, j), block) in a_continuous {
        if !all_finite(block) {
            return Err(Error::NonFinite(format!("continuous A block ({i}, {j})")));
        }
        let mut d = block * sampling_period;
        if i == j {
            let ni = pattern.state_dim(i);
            if block.shape() != (ni, ni) {
                return Err(Error::DimensionMismatch(format!("continuous A block ({i}, {i})")));
            }
            d += DMatrix::identity(ni, ni);
        }
        out.insert((i, j), d);
    }
    // Diagonal blocks absent from the input still pick up the identity.
    for i in 0..pattern.s() {
        let ni = pattern.state_dim(i);
        out.entry((i, i)).or_insert_with(|| DMatrix::identity(ni, ni));
    }
    Ok(out)
}

/// Euler discretization of input blocks: `B_i = T_s B^c_i`.
pub fn discretize_b(b_continuous: &[DMatrix<f64>], sampling_period: f64) -> Result<Vec<DMatrix<f64>>> {
    if !(sampling_period > 0.0) {
        return Err(Error::InvalidModel(format!(
            "sampling period must be positive, got {sampling_period}"
        )));
    }
    b_continuous
        .iter()
        .enumerate()
        .map(|(i, b)| {
            if all_finite(b) {
                Ok(b * sampling_period)
            } else {
                Err(Error::NonFinite(format!("continuous B block {i}")))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests;
