use std::collections::{BTreeMap, BTreeSet};

use approx::assert_relative_eq;
use nalgebra::DMatrix;

use super::*;
use crate::testutil::{scalar_mat as scalar, scalar_model};

#[test]
fn topology_reads_off_sparsity() {
    // s=3, only A_01 and A_12 nonzero off-diagonal.
    let model = scalar_model(3, &[0.5, 0.5, 0.5], &[(0, 1, 0.1), (1, 2, 0.2)]);
    let t = build_topology(&model, 0).unwrap();
    assert_eq!(t.in_neighbors(0), &BTreeSet::from([1]));
    assert_eq!(t.in_neighbors(1), &BTreeSet::from([2]));
    assert!(t.in_neighbors(2).is_empty());
    assert!(t.out_neighbors(0).is_empty());
    assert_eq!(t.out_neighbors(1), &BTreeSet::from([0]));
    assert_eq!(t.out_neighbors(2), &BTreeSet::from([1]));
}

#[test]
fn topology_block_diagonal_is_empty() {
    let model = scalar_model(3, &[0.5, 0.6, 0.7], &[]);
    let t = build_topology(&model, 0).unwrap();
    for i in 0..3 {
        assert!(t.in_neighbors(i).is_empty());
        assert!(t.out_neighbors(i).is_empty());
    }
    assert_eq!(t.edge_count(), 0);
}

#[test]
fn topology_fully_coupled() {
    let couplings: Vec<_> = (0..3)
        .flat_map(|i| (0..3).filter(move |&j| j != i).map(move |j| (i, j, 0.1)))
        .collect();
    let model = scalar_model(3, &[0.5; 3], &couplings);
    let t = build_topology(&model, 0).unwrap();
    for i in 0..3 {
        assert_eq!(t.in_neighbors(i).len(), 2);
        assert_eq!(t.out_neighbors(i).len(), 2);
    }
}

#[test]
fn topology_duality_and_handshake() {
    // Duality j ∈ 𝕀ᵢ ⇔ i ∈ 𝕆ⱼ plus the handshake identity
    // Σ|𝕀ᵢ| = Σ|𝕆ᵢ| = #nonzero off-diagonal blocks.
    let model = scalar_model(4, &[0.5; 4], &[(0, 1, 0.1), (1, 3, 0.2), (3, 0, 0.3), (2, 0, 0.4)]);
    let t = build_topology(&model, 0).unwrap();
    for i in 0..4 {
        for &j in t.in_neighbors(i) {
            assert!(t.out_neighbors(j).contains(&i));
        }
        for &j in t.out_neighbors(i) {
            assert!(t.in_neighbors(j).contains(&i));
        }
        assert!(!t.in_neighbors(i).contains(&i));
        assert!(!t.out_neighbors(i).contains(&i));
    }
    let in_sum: usize = (0..4).map(|i| t.in_neighbors(i).len()).sum();
    let out_sum: usize = (0..4).map(|i| t.out_neighbors(i).len()).sum();
    assert_eq!(in_sum, 4);
    assert_eq!(out_sum, 4);
}

#[test]
fn topology_threshold_drops_small_blocks() {
    let model = scalar_model(2, &[0.5, 0.5], &[(0, 1, 1e-12)]);
    let exact = build_topology(&model, 0).unwrap();
    assert_eq!(exact.in_neighbors(0).len(), 1);
    let thresholded = build_topology_with_threshold(&model, 0, 1e-9).unwrap();
    assert!(thresholded.in_neighbors(0).is_empty());
}

#[test]
fn decoupling_out_neighbor_formula() {
    // |𝕆_0(k+1)| = 2 under the out-neighbor policy → ϑ_0 = √3.
    let model = scalar_model(3, &[0.5; 3], &[(1, 0, 0.1), (2, 0, 0.1)]);
    let theta = decoupling_variables(&model, DecouplingPolicy::OutNeighbor, 0).unwrap();
    assert_relative_eq!(theta[0], 3.0_f64.sqrt(), max_relative = 1e-15);
    assert_relative_eq!(theta[1], 1.0);
    assert_relative_eq!(theta[2], 1.0);
}

#[test]
fn decoupling_in_neighbor_formula() {
    // |𝕀_0(k)| = 1 under the in-neighbor policy → ϑ_0 = √2.
    let model = scalar_model(2, &[0.5, 0.5], &[(0, 1, 0.1)]);
    let theta = decoupling_variables(&model, DecouplingPolicy::InNeighbor, 0).unwrap();
    assert_relative_eq!(theta[0], 2.0_f64.sqrt(), max_relative = 1e-15);
    assert_relative_eq!(theta[1], 1.0);
}

#[test]
fn decoupling_isolated_subsystem_is_one() {
    let model = scalar_model(2, &[0.5, 0.5], &[]);
    for policy in [DecouplingPolicy::OutNeighbor, DecouplingPolicy::InNeighbor] {
        let theta = decoupling_variables(&model, policy, 3).unwrap();
        assert!(theta.iter().all(|&t| t == 1.0));
    }
}

#[test]
fn decoupling_beyond_horizon_errors() {
    let text = model_to_json(&scalar_model(1, &[0.5], &[]));
    let mut model = model_from_json(&text).unwrap();
    model.horizon = Some(5);
    // Out-neighbor policy at k=5 needs topology at k=6, past the horizon.
    let err = decoupling_variables(&model, DecouplingPolicy::OutNeighbor, 5).unwrap_err();
    assert!(matches!(err, Error::HorizonExceeded { requested: 6, horizon: 5 }));
    assert!(decoupling_variables(&model, DecouplingPolicy::InNeighbor, 5).is_ok());
}

#[test]
fn discretize_zero_dynamics_gives_identity() {
    let pattern = BlockPattern::new(vec![2], vec![1], BTreeSet::new()).unwrap();
    let a_c = BTreeMap::from([((0, 0), DMatrix::zeros(2, 2))]);
    let a = discretize_a(&pattern, &a_c, 0.5).unwrap();
    assert_eq!(a[&(0, 0)], DMatrix::identity(2, 2));
}

#[test]
fn discretize_preserves_offdiag_sparsity() {
    let pattern =
        BlockPattern::new(vec![2, 2], vec![1, 1], BTreeSet::from([(0, 1)])).unwrap();
    let mut a_c = BTreeMap::new();
    a_c.insert((0, 0), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
    a_c.insert((1, 1), DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]));
    a_c.insert((0, 1), DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.0]));
    let a = discretize_a(&pattern, &a_c, 0.1).unwrap();
    // Absent blocks stay absent, present off-diagonal blocks are scaled.
    assert!(!a.contains_key(&(1, 0)));
    assert_relative_eq!(a[&(0, 1)][(0, 0)], 0.03, max_relative = 1e-15);
    assert_relative_eq!(a[&(0, 0)][(0, 0)], 1.0);
    assert_relative_eq!(a[&(0, 0)][(0, 1)], 0.1);
}

#[test]
fn discretize_rejects_bad_input() {
    let pattern = BlockPattern::new(vec![1], vec![1], BTreeSet::new()).unwrap();
    let a_c = BTreeMap::from([((0, 0), scalar(f64::NAN))]);
    assert!(discretize_a(&pattern, &a_c, 1.0).is_err());
    let a_c = BTreeMap::from([((0, 0), scalar(1.0))]);
    assert!(discretize_a(&pattern, &a_c, 0.0).is_err());
}

/// Truncated matrix-exponential series, used as an independent oracle for the
/// Euler discretization (agreement to first order in the sampling period).
fn expm_series(m: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let mut sum = DMatrix::identity(n, n);
    let mut power = DMatrix::identity(n, n);
    let mut factorial = 1.0;
    for t in 1..=terms {
        power = &power * m;
        factorial *= t as f64;
        sum += &power / factorial;
    }
    sum
}

#[test]
fn discretize_single_area_matches_matrix_exponential_to_first_order() {
    let params = PowerSystemParams {
        areas: vec![PowerAreaParams {
            inertia: 5.0,
            damping: 1.0,
            turbine_time: 0.5,
            governor_time: 0.2,
            regulation: 0.05,
        }],
        tie_lines: BTreeMap::new(),
        sampling_period: 1.0,
    };
    let a_c = params.continuous_a_blocks()[&(0, 0)].clone();
    let pattern = BlockPattern::new(vec![4], vec![2], BTreeSet::new()).unwrap();

    // Hand-checked Euler entries for H=5, D=1, T_t=0.5, T_g=0.2, R=0.05, T_s=1.
    let a1 = discretize_a(&pattern, &BTreeMap::from([((0, 0), a_c.clone())]), 1.0).unwrap();
    let a1 = &a1[&(0, 0)];
    assert_relative_eq!(a1[(0, 1)], 1.0);
    assert_relative_eq!(a1[(1, 1)], 1.0 - 1.0 / 10.0);
    assert_relative_eq!(a1[(1, 2)], 1.0 / 10.0);
    assert_relative_eq!(a1[(2, 2)], 1.0 - 2.0);
    assert_relative_eq!(a1[(3, 1)], -1.0 / (0.05 * 0.2));
    assert_relative_eq!(a1[(3, 3)], 1.0 - 5.0);

    // ‖(I + T_s A) − exp(T_s A)‖ = O(T_s²): the error must drop by ≈4 per halving.
    let mut errors = Vec::new();
    for ts in [0.1, 0.05, 0.025] {
        let euler = discretize_a(&pattern, &BTreeMap::from([((0, 0), a_c.clone())]), ts).unwrap();
        let exact = expm_series(&(&a_c * ts), 30);
        errors.push((&euler[&(0, 0)] - exact).norm());
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.0..5.0).contains(&ratio), "expected quadratic decay, ratios {errors:?}");
    }
}

#[test]
fn generate_power_system_time_varying_shape() {
    let cfg = PowerSystemConfig {
        areas: 10,
        switch_period: Some(100),
        num_epochs: 5,
        seed: 7,
        ..Default::default()
    };
    let model = generate_power_system(&cfg).unwrap();
    assert_eq!(model.s(), 10);
    assert!(!model.is_time_invariant());
    assert_eq!(model.epochs().len(), 5);
    assert_eq!(model.epochs()[1].0, 100);
    for i in 0..10 {
        assert_eq!(model.pattern().state_dim(i), 4);
        assert_eq!(model.pattern().meas_dim(i), 2);
    }
    // Fixed pattern across epochs, values change.
    let t0 = build_topology(&model, 0).unwrap();
    let t150 = build_topology(&model, 150).unwrap();
    assert_eq!(t0, t150);
    assert!(model.a_block(0, 0, 0).unwrap() != model.a_block(150, 0, 0).unwrap());
}

#[test]
fn generate_power_system_no_ties_is_decoupled() {
    let cfg = PowerSystemConfig { areas: 4, topology: TieTopology::None, ..Default::default() };
    let model = generate_power_system(&cfg).unwrap();
    let t = build_topology(&model, 0).unwrap();
    assert_eq!(t.edge_count(), 0);
}

#[test]
fn generate_power_system_ring_has_two_in_neighbors() {
    let cfg = PowerSystemConfig {
        areas: 4,
        topology: TieTopology::Ring,
        ranges: PowerParamRanges { tie_line: (0.1, 0.1), ..Default::default() },
        ..Default::default()
    };
    let model = generate_power_system(&cfg).unwrap();
    let t = build_topology(&model, 0).unwrap();
    for i in 0..4 {
        assert_eq!(t.in_neighbors(i).len(), 2, "ring area {i}");
        assert_eq!(t.out_neighbors(i).len(), 2);
    }
}

#[test]
fn power_params_reject_nonpositive_time_constant() {
    let params = PowerSystemParams {
        areas: vec![PowerAreaParams {
            inertia: 5.0,
            damping: 1.0,
            turbine_time: 0.0,
            governor_time: 0.2,
            regulation: 0.05,
        }],
        tie_lines: BTreeMap::new(),
        sampling_period: 1.0,
    };
    assert!(params.validate().is_err());
}

#[test]
fn power_params_reject_asymmetric_tie_sparsity() {
    let area = PowerAreaParams {
        inertia: 5.0,
        damping: 1.0,
        turbine_time: 0.5,
        governor_time: 0.2,
        regulation: 0.05,
    };
    let params = PowerSystemParams {
        areas: vec![area, area],
        tie_lines: BTreeMap::from([((0, 1), 0.1)]),
        sampling_period: 1.0,
    };
    assert!(params.validate().is_err());
}

#[test]
fn epoch_rejects_off_pattern_block() {
    let pattern = BlockPattern::new(vec![1, 1], vec![1, 1], BTreeSet::new()).unwrap();
    let a = BTreeMap::from([((0, 1), scalar(0.1))]);
    let err = EpochParams::new(
        &pattern,
        a,
        vec![scalar(1.0); 2],
        vec![scalar(1.0); 2],
        vec![scalar(1.0); 2],
    );
    assert!(err.is_err());
}

#[test]
fn epoch_rejects_indefinite_covariances() {
    let pattern = BlockPattern::new(vec![1], vec![1], BTreeSet::new()).unwrap();
    let mk = |q: f64, r: f64| {
        EpochParams::new(
            &pattern,
            BTreeMap::from([((0, 0), scalar(0.5))]),
            vec![scalar(1.0)],
            vec![scalar(q)],
            vec![scalar(r)],
        )
    };
    assert!(mk(-1.0, 1.0).is_err());
    assert!(mk(1.0, 0.0).is_err());
    assert!(mk(0.0, 1.0).is_ok());
}

#[test]
fn model_file_round_trips_losslessly() {
    let cfg = PowerSystemConfig {
        areas: 3,
        switch_period: Some(10),
        num_epochs: 2,
        seed: 42,
        ..Default::default()
    };
    let model = generate_power_system(&cfg).unwrap();
    let text = model_to_json(&model);
    let parsed = model_from_json(&text).unwrap();
    assert_eq!(model.pattern(), parsed.pattern());
    assert_eq!(model.epochs().len(), parsed.epochs().len());
    for ((k0, e0), (k1, e1)) in model.epochs().iter().zip(parsed.epochs()) {
        assert_eq!(k0, k1);
        assert_eq!(e0, e1);
    }
    // Serialize-parse-serialize is a fixed point.
    assert_eq!(text, model_to_json(&parsed));
}

#[test]
fn model_file_rejects_garbage() {
    assert!(model_from_json("not json").is_err());
    // Missing R block.
    let text = r#"{"s":1,"dims":[1],"mdims":[1],"blocks":[
        {"i":0,"j":0,"kind":"A","values":[0.5]},
        {"i":0,"j":0,"kind":"C","values":[1.0]},
        {"i":0,"j":0,"kind":"Q","values":[1.0]}]}"#;
    assert!(model_from_json(text).is_err());
    // Wrong value count.
    let text = r#"{"s":1,"dims":[2],"mdims":[1],"blocks":[
        {"i":0,"j":0,"kind":"A","values":[0.5]},
        {"i":0,"j":0,"kind":"C","values":[1.0,0.0]},
        {"i":0,"j":0,"kind":"Q","values":[1.0,0.0,0.0,1.0]},
        {"i":0,"j":0,"kind":"R","values":[1.0]}]}"#;
    assert!(model_from_json(text).is_err());
}
