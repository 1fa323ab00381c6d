//! Shared fixtures for unit tests.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::linalg::{spectral_radius, symmetrized};
use crate::model::{BlockPattern, EpochParams, LisModel};

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

/// Random symmetric PSD matrix `G Gᵀ` (singular allowed).
pub fn random_psd(rng: &mut impl Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let g = random_matrix(rng, n, n, scale);
    symmetrized(&(&g * g.transpose()))
}

/// Random symmetric PD matrix `G Gᵀ + εI`.
pub fn random_pd(rng: &mut impl Rng, n: usize, scale: f64) -> DMatrix<f64> {
    random_psd(rng, n, scale) + DMatrix::identity(n, n) * 0.1
}

/// Square matrix rescaled to the requested spectral radius (when nonzero).
pub fn random_with_radius(rng: &mut impl Rng, n: usize, radius: f64) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n, 1.0);
    let rho = spectral_radius(&m);
    if rho < 1e-12 {
        m
    } else {
        m * (radius / rho)
    }
}

pub fn scalar_mat(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// `s` scalar subsystems with unit C/Q/R and the given diagonal and
/// off-diagonal transition entries.
pub fn scalar_model(s: usize, diag: &[f64], couplings: &[(usize, usize, f64)]) -> LisModel {
    let pairs: BTreeSet<_> = couplings.iter().map(|&(i, j, _)| (i, j)).collect();
    let pattern = BlockPattern::new(vec![1; s], vec![1; s], pairs).unwrap();
    let mut a = BTreeMap::new();
    for (i, &d) in diag.iter().enumerate() {
        a.insert((i, i), scalar_mat(d));
    }
    for &(i, j, v) in couplings {
        a.insert((i, j), scalar_mat(v));
    }
    let epoch = EpochParams::new(
        &pattern,
        a,
        vec![scalar_mat(1.0); s],
        vec![scalar_mat(1.0); s],
        vec![scalar_mat(1.0); s],
    )
    .unwrap();
    LisModel::time_invariant(pattern, epoch)
}

/// Options for [`random_model`].
pub struct RandomModelOptions {
    pub s_range: (usize, usize),
    pub n_range: (usize, usize),
    pub m_range: (usize, usize),
    /// Probability of each ordered off-diagonal pair being coupled.
    pub edge_prob: f64,
    /// Spectral radius the diagonal blocks are rescaled to.
    pub diag_radius: f64,
    /// Entry scale of coupling blocks.
    pub coupling_scale: f64,
}

impl Default for RandomModelOptions {
    fn default() -> Self {
        Self {
            s_range: (2, 4),
            n_range: (1, 3),
            m_range: (1, 2),
            edge_prob: 0.4,
            diag_radius: 0.8,
            coupling_scale: 0.1,
        }
    }
}

/// Random well-posed time-invariant model: stable-ish diagonal blocks, weak
/// couplings, PD covariances, full-rank-ish measurements.
pub fn random_model(rng: &mut impl Rng, opts: &RandomModelOptions) -> LisModel {
    let s = rng.random_range(opts.s_range.0..=opts.s_range.1);
    let dims: Vec<usize> = (0..s).map(|_| rng.random_range(opts.n_range.0..=opts.n_range.1)).collect();
    let mdims: Vec<usize> =
        (0..s).map(|_| rng.random_range(opts.m_range.0..=opts.m_range.1)).collect();
    let mut pairs = BTreeSet::new();
    for i in 0..s {
        for j in 0..s {
            if i != j && rng.random_bool(opts.edge_prob) {
                pairs.insert((i, j));
            }
        }
    }
    let pattern = BlockPattern::new(dims.clone(), mdims.clone(), pairs.clone()).unwrap();
    let mut a = BTreeMap::new();
    for i in 0..s {
        a.insert((i, i), random_with_radius(rng, dims[i], opts.diag_radius));
    }
    for &(i, j) in &pairs {
        a.insert((i, j), random_matrix(rng, dims[i], dims[j], opts.coupling_scale));
    }
    let c = (0..s).map(|i| random_matrix(rng, mdims[i], dims[i], 1.0)).collect();
    let q = (0..s).map(|i| random_pd(rng, dims[i], 0.7)).collect();
    let r = (0..s).map(|i| random_pd(rng, mdims[i], 0.7)).collect();
    let epoch = EpochParams::new(&pattern, a, c, q, r).unwrap();
    LisModel::time_invariant(pattern, epoch)
}
