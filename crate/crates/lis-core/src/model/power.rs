//! Multi-area power system model generator.
//!
//! Each area carries a 4-dimensional state (rotor angle deviation, speed
//! deviation, mechanical power deviation, valve position deviation) and a
//! 2-dimensional measurement of the first two states. Areas couple through
//! tie lines, which show up as rank-one off-diagonal transition blocks.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::{discretize_a, BlockPattern, EpochParams, LisModel};
use crate::error::{Error, Result};

/// Per-area physical parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerAreaParams {
    /// Inertial constant Hᵢ.
    pub inertia: f64,
    /// Damping coefficient Dᵢ.
    pub damping: f64,
    /// Prime mover time constant T_{t,i}.
    pub turbine_time: f64,
    /// Governor time constant T_{g,i}.
    pub governor_time: f64,
    /// Speed regulation Rᵢ.
    pub regulation: f64,
}

impl PowerAreaParams {
    fn validate(&self, i: usize) -> Result<()> {
        let fields = [
            ("inertia", self.inertia),
            ("damping", self.damping),
            ("turbine time constant", self.turbine_time),
            ("governor time constant", self.governor_time),
            ("speed regulation", self.regulation),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidModel(format!("area {i}: {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Full parameter set of a multi-area power system.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSystemParams {
    pub areas: Vec<PowerAreaParams>,
    /// Tie-line slopes `P_ij` keyed by ordered pair; sparsity must be
    /// symmetric (`P_ij` present iff `P_ji` present).
    pub tie_lines: BTreeMap<(usize, usize), f64>,
    /// Sampling period in seconds.
    pub sampling_period: f64,
}

impl PowerSystemParams {
    pub fn validate(&self) -> Result<()> {
        if self.areas.is_empty() {
            return Err(Error::InvalidModel("power system needs at least one area".into()));
        }
        if !(self.sampling_period > 0.0) {
            return Err(Error::InvalidModel("sampling period must be positive".into()));
        }
        for (i, a) in self.areas.iter().enumerate() {
            a.validate(i)?;
        }
        let s = self.areas.len();
        for (&(i, j), &p) in &self.tie_lines {
            if i >= s || j >= s || i == j {
                return Err(Error::InvalidModel(format!("tie line ({i}, {j}) out of range")));
            }
            if !p.is_finite() {
                return Err(Error::NonFinite(format!("tie line ({i}, {j})")));
            }
            // Sparsity symmetry: P_ij = 0 ⇔ P_ji = 0.
            if p != 0.0 && self.tie_lines.get(&(j, i)).copied().unwrap_or(0.0) == 0.0 {
                return Err(Error::InvalidModel(format!(
                    "tie line ({i}, {j}) present but ({j}, {i}) missing: tie sparsity must be symmetric"
                )));
            }
        }
        Ok(())
    }

    /// Continuous-time transition blocks `A^c_ii` and `A^c_ij`.
    pub fn continuous_a_blocks(&self) -> BTreeMap<(usize, usize), DMatrix<f64>> {
        let mut blocks = BTreeMap::new();
        for (i, area) in self.areas.iter().enumerate() {
            let tie_sum: f64 = self
                .tie_lines
                .iter()
                .filter(|(&(r, _), _)| r == i)
                .map(|(_, &p)| p)
                .sum();
            let two_h = 2.0 * area.inertia;
            #[rustfmt::skip]
            let a_ii = DMatrix::from_row_slice(4, 4, &[
                0.0,                                   1.0,                     0.0,                     0.0,
                -tie_sum / two_h,                      -area.damping / two_h,   1.0 / two_h,             0.0,
                0.0,                                   0.0,                     -1.0 / area.turbine_time, 1.0 / area.turbine_time,
                0.0, -1.0 / (area.regulation * area.governor_time), 0.0,       -1.0 / area.governor_time,
            ]);
            blocks.insert((i, i), a_ii);
        }
        for (&(i, j), &p) in &self.tie_lines {
            if p == 0.0 {
                continue;
            }
            let mut a_ij = DMatrix::zeros(4, 4);
            a_ij[(1, 0)] = p / (2.0 * self.areas[i].inertia);
            blocks.insert((i, j), a_ij);
        }
        blocks
    }

    /// Continuous-time input blocks `B^c_i`.
    pub fn continuous_b_blocks(&self) -> Vec<DMatrix<f64>> {
        self.areas
            .iter()
            .map(|area| {
                let mut b = DMatrix::zeros(4, 2);
                b[(1, 1)] = -1.0 / (2.0 * area.inertia);
                b[(3, 0)] = 1.0 / area.governor_time;
                b
            })
            .collect()
    }
}

/// Measurement matrix shared by every area: the first two states (angle and
/// speed deviation) are measured.
pub fn power_measurement_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
}

/// Sampling ranges for randomly drawn area parameters and tie-line slopes.
///
/// Defaults keep the discretized open-loop spectral radius near 1; they are
/// configuration, not physical ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerParamRanges {
    pub inertia: (f64, f64),
    pub damping: (f64, f64),
    pub turbine_time: (f64, f64),
    pub governor_time: (f64, f64),
    pub regulation: (f64, f64),
    pub tie_line: (f64, f64),
}

impl Default for PowerParamRanges {
    fn default() -> Self {
        Self {
            inertia: (4.0, 8.0),
            damping: (0.5, 1.5),
            turbine_time: (0.3, 0.6),
            governor_time: (0.1, 0.3),
            regulation: (0.03, 0.07),
            tie_line: (0.05, 0.2),
        }
    }
}

/// Tie-line sparsity pattern of the generated system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TieTopology {
    /// Areas `i` and `i+1` coupled, plus the wrap-around pair.
    Ring,
    /// Areas `i` and `i+1` coupled, no wrap-around.
    Line,
    /// Every pair coupled.
    Full,
    /// No tie lines: decoupled areas.
    None,
    /// Explicit undirected pairs `(i, j)`, `i < j`.
    Custom(Vec<(usize, usize)>),
}

impl TieTopology {
    fn undirected_pairs(&self, s: usize) -> Result<Vec<(usize, usize)>> {
        let pairs = match self {
            TieTopology::Ring if s >= 2 => {
                let mut p: Vec<_> = (0..s - 1).map(|i| (i, i + 1)).collect();
                if s > 2 {
                    p.push((0, s - 1));
                }
                p
            }
            TieTopology::Ring => Vec::new(),
            TieTopology::Line => (0..s.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
            TieTopology::Full => {
                (0..s).flat_map(|i| (i + 1..s).map(move |j| (i, j))).collect()
            }
            TieTopology::None => Vec::new(),
            TieTopology::Custom(pairs) => {
                for &(i, j) in pairs {
                    if i >= j || j >= s {
                        return Err(Error::InvalidModel(format!(
                            "custom tie pair ({i}, {j}) must satisfy i < j < s"
                        )));
                    }
                }
                pairs.clone()
            }
        };
        Ok(pairs)
    }
}

/// Configuration for [`generate_power_system`].
#[derive(Debug, Clone)]
pub struct PowerSystemConfig {
    pub areas: usize,
    pub sampling_period: f64,
    pub topology: TieTopology,
    pub ranges: PowerParamRanges,
    /// `Some(period)` resamples all parameters every `period` steps
    /// (fixed coupling pattern, time-varying values). `None` generates a
    /// time-invariant model.
    pub switch_period: Option<usize>,
    /// Number of parameter epochs generated in the time-varying mode; the
    /// last epoch extends indefinitely.
    pub num_epochs: usize,
    pub seed: u64,
}

impl Default for PowerSystemConfig {
    fn default() -> Self {
        Self {
            areas: 10,
            sampling_period: 0.1,
            topology: TieTopology::Ring,
            ranges: PowerParamRanges::default(),
            switch_period: None,
            num_epochs: 1,
            seed: 0,
        }
    }
}

fn sample_range(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn sample_params(
    rng: &mut impl Rng,
    s: usize,
    pairs: &[(usize, usize)],
    ranges: &PowerParamRanges,
    sampling_period: f64,
) -> PowerSystemParams {
    let areas = (0..s)
        .map(|_| PowerAreaParams {
            inertia: sample_range(rng, ranges.inertia),
            damping: sample_range(rng, ranges.damping),
            turbine_time: sample_range(rng, ranges.turbine_time),
            governor_time: sample_range(rng, ranges.governor_time),
            regulation: sample_range(rng, ranges.regulation),
        })
        .collect();
    let mut tie_lines = BTreeMap::new();
    for &(i, j) in pairs {
        let p = sample_range(rng, ranges.tie_line);
        tie_lines.insert((i, j), p);
        tie_lines.insert((j, i), p);
    }
    PowerSystemParams { areas, tie_lines, sampling_period }
}

fn epoch_from_params(pattern: &BlockPattern, params: &PowerSystemParams) -> Result<EpochParams> {
    params.validate()?;
    let s = params.areas.len();
    let a = discretize_a(pattern, &params.continuous_a_blocks(), params.sampling_period)?;
    let c = vec![power_measurement_matrix(); s];
    let q = vec![DMatrix::identity(4, 4); s];
    let r = vec![DMatrix::identity(2, 2); s];
    EpochParams::new(pattern, a, c, q, r)
}

/// Build an explicit parameter set into a time-invariant model.
pub fn power_system_model(params: &PowerSystemParams) -> Result<LisModel> {
    params.validate()?;
    let s = params.areas.len();
    let pairs = params
        .tie_lines
        .iter()
        .filter(|(_, &p)| p != 0.0)
        .map(|(&k, _)| k)
        .collect();
    let pattern = BlockPattern::new(vec![4; s], vec![2; s], pairs)?;
    let epoch = epoch_from_params(&pattern, params)?;
    Ok(LisModel::time_invariant(pattern, epoch))
}

/// Generate a multi-area power system model.
///
/// Parameters are drawn from `cfg.ranges` with a seeded generator. In the
/// time-varying mode the coupling pattern stays fixed while values are
/// resampled at every switch epoch.
pub fn generate_power_system(cfg: &PowerSystemConfig) -> Result<LisModel> {
    if cfg.areas == 0 {
        return Err(Error::InvalidModel("power system needs at least one area".into()));
    }
    let s = cfg.areas;
    let pairs = cfg.topology.undirected_pairs(s)?;
    let directed = pairs
        .iter()
        .flat_map(|&(i, j)| [(i, j), (j, i)])
        .collect();
    let pattern = BlockPattern::new(vec![4; s], vec![2; s], directed)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);

    match cfg.switch_period {
        None => {
            let params = sample_params(&mut rng, s, &pairs, &cfg.ranges, cfg.sampling_period);
            let epoch = epoch_from_params(&pattern, &params)?;
            Ok(LisModel::time_invariant(pattern, epoch))
        }
        Some(period) => {
            if period == 0 {
                return Err(Error::InvalidModel("switch period must be positive".into()));
            }
            let count = cfg.num_epochs.max(1);
            let mut epochs = Vec::with_capacity(count);
            for e in 0..count {
                let params = sample_params(&mut rng, s, &pairs, &cfg.ranges, cfg.sampling_period);
                epochs.push((e * period, epoch_from_params(&pattern, &params)?));
            }
            LisModel::scheduled(pattern, epochs, None)
        }
    }
}
