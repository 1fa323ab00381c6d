//! Reachability and detectability checkers.
//!
//! Time-invariant pairs get exact finite tests: a Gramian over the
//! Cayley–Hamilton horizon for reachability, PBH rank plus a constructive
//! Riccati output-injection witness for detectability. Time-varying pairs
//! get finite-horizon evidence: a windowed Gramian sweep and a two-sided
//! detectability probe (sufficient certificate via an S-procedure,
//! falsification via sampling), both labeled as horizon-limited.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, max_abs, min_eigenvalue, spectral_radius, symmetrize};

/// Result of the time-invariant reachability test.
#[derive(Debug, Clone)]
pub struct ReachabilityReport {
    pub reachable: bool,
    /// Least eigenvalue of the horizon-(n−1) Gramian.
    pub gramian_min_eig: f64,
}

/// Reachability of the time-invariant pair `(X, Y)`.
///
/// Evaluates the Gramian `Σ_{i=0}^{n-1} XⁱYYᵀ(Xⁱ)ᵀ`; longer horizons add
/// nothing by Cayley–Hamilton. Reachable iff the least eigenvalue exceeds
/// `tol`.
pub fn reachability_check(x: &DMatrix<f64>, y: &DMatrix<f64>, tol: f64) -> Result<ReachabilityReport> {
    let n = x.nrows();
    if x.ncols() != n {
        return Err(Error::DimensionMismatch("X must be square".into()));
    }
    if y.nrows() != n {
        return Err(Error::DimensionMismatch("Y must have as many rows as X".into()));
    }
    if !all_finite(x) || !all_finite(y) {
        return Err(Error::NonFinite("reachability input".into()));
    }
    let mut gramian = DMatrix::<f64>::zeros(n, n);
    let mut power_y = y.clone();
    for _ in 0..n {
        gramian += &power_y * power_y.transpose();
        power_y = x * power_y;
    }
    let gramian_min_eig = min_eigenvalue(&gramian);
    Ok(ReachabilityReport { reachable: gramian_min_eig > tol, gramian_min_eig })
}

/// Result of the time-invariant detectability test.
#[derive(Debug, Clone)]
pub struct DetectabilityReport {
    pub detectable: bool,
    /// Output-injection gain with `ρ(X + KY) < 1`, when detectable and the
    /// constructive design succeeded.
    pub witness: Option<DMatrix<f64>>,
    /// `ρ(X + KY)` at the witness.
    pub closed_loop_radius: Option<f64>,
}

fn complex_rank(m: &DMatrix<Complex<f64>>) -> usize {
    let svd = m.clone().svd(false, false);
    let max_sv = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let tol = max_sv * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    svd.singular_values.iter().filter(|&&sv| sv > tol).count()
}

/// Detectability of the time-invariant pair `(Y, X)`: does some `K` make
/// `ρ(X + KY) < 1`?
///
/// Decided by the PBH rank test on every eigenvalue of `X` with modulus at
/// least `1 − 1e-9`. On success a witness is built by iterating the filter
/// Riccati equation with unit covariances and `ρ(X + KY) < 1` is re-verified.
pub fn detectability_check(y: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DetectabilityReport> {
    let n = x.nrows();
    if x.ncols() != n || y.ncols() != n {
        return Err(Error::DimensionMismatch("need X n×n and Y m×n".into()));
    }
    if !all_finite(x) || !all_finite(y) {
        return Err(Error::NonFinite("detectability input".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(x.clone(), 1e-14, 100_000)
        .ok_or_else(|| Error::EigenFailure("Schur decomposition of X did not converge".into()))?;
    let eigenvalues = schur.complex_eigenvalues();

    let xc = x.map(|v| Complex::new(v, 0.0));
    let yc = y.map(|v| Complex::new(v, 0.0));
    let mut detectable = true;
    for lambda in eigenvalues.iter().filter(|l| l.norm() >= 1.0 - 1e-9) {
        // rank([λI − X; Y]) must be n for unstable λ.
        let mut stacked = DMatrix::<Complex<f64>>::zeros(n + y.nrows(), n);
        let mut li = DMatrix::<Complex<f64>>::identity(n, n);
        li *= *lambda;
        stacked.view_mut((0, 0), (n, n)).copy_from(&(li - &xc));
        stacked.view_mut((n, 0), (y.nrows(), n)).copy_from(&yc);
        if complex_rank(&stacked) < n {
            detectable = false;
            break;
        }
    }
    if !detectable {
        return Ok(DetectabilityReport { detectable: false, witness: None, closed_loop_radius: None });
    }

    // Constructive witness: filter Riccati iteration for (X, Y) with unit
    // covariances; converges exactly because the pair is detectable.
    let mut p = DMatrix::<f64>::identity(n, n);
    let eye_m = DMatrix::<f64>::identity(y.nrows(), y.nrows());
    let mut gain = None;
    for _ in 0..200_000 {
        let yp = y * &p;
        let s = &yp * y.transpose() + &eye_m;
        let Some(chol) = crate::linalg::symmetrized(&s).cholesky() else { break };
        let l = x * yp.transpose() * chol.inverse();
        let mut next = x * &p * x.transpose() - &l * &yp * x.transpose() + DMatrix::identity(n, n);
        symmetrize(&mut next);
        let diff = crate::linalg::max_abs_diff(&next, &p);
        let scale = max_abs(&p).max(1.0);
        p = next;
        if !all_finite(&p) || max_abs(&p) > 1e14 {
            break;
        }
        if diff < 1e-10 * scale {
            gain = Some(-l);
            break;
        }
    }
    let (witness, closed_loop_radius) = match gain {
        Some(k) => {
            let rho = spectral_radius(&(x + &k * y));
            if rho < 1.0 {
                (Some(k), Some(rho))
            } else {
                (None, Some(rho))
            }
        }
        None => (None, None),
    };
    Ok(DetectabilityReport { detectable: true, witness, closed_loop_radius })
}

/// Finite-horizon evidence for uniform reachability of a time-varying pair.
#[derive(Debug, Clone)]
pub struct UniformReachabilityReport {
    pub passes: bool,
    /// min over k of the least eigenvalue of the windowed Gramian.
    pub min_gramian_eig: f64,
    pub threshold: f64,
    /// The check only covers `k ∈ [0, horizon]`; it is evidence, not proof.
    pub horizon: usize,
    pub window: usize,
}

/// Windowed reachability Gramian sweep for the pair sequence
/// `k ↦ (X(k), Y(k))`.
///
/// At every `k ∈ [0, horizon]` evaluates
/// `Σ_{i=0}^{t} Φ(k+t+1, k+i+1) Y(k+i)Yᵀ(k+i) Φᵀ(k+t+1, k+i+1)` with
/// `Φ(b, a) = X(b−1)⋯X(a)` and reports whether its least eigenvalue stays
/// above `r` throughout.
pub fn uniform_reachability_gramian(
    seq: &dyn Fn(usize) -> (DMatrix<f64>, DMatrix<f64>),
    window: usize,
    r: f64,
    horizon: usize,
) -> Result<UniformReachabilityReport> {
    let mut min_eig = f64::INFINITY;
    for k in 0..=horizon {
        let (x0, y0) = seq(k);
        let n = x0.nrows();
        if x0.ncols() != n || y0.nrows() != n {
            return Err(Error::DimensionMismatch(format!("pair at k={k}")));
        }
        let mut gramian = DMatrix::<f64>::zeros(n, n);
        // transition = Φ(k+t+1, k+i+1), built downward from i = t.
        let mut transition = DMatrix::<f64>::identity(n, n);
        for i in (0..=window).rev() {
            let (xi, yi) = if i == 0 { (x0.clone(), y0.clone()) } else { seq(k + i) };
            let m = &transition * yi;
            gramian += &m * m.transpose();
            transition *= xi;
        }
        min_eig = min_eig.min(min_eigenvalue(&gramian));
    }
    Ok(UniformReachabilityReport {
        passes: min_eig >= r,
        min_gramian_eig: min_eig,
        threshold: r,
        horizon,
        window,
    })
}

/// Parameters of the uniform detectability definition.
#[derive(Debug, Clone, Copy)]
pub struct UniformDetectabilityParams {
    /// Window of the contraction premise.
    pub mu: usize,
    /// Window of the observability Gramian (ν ≥ μ).
    pub nu: usize,
    /// Contraction threshold, 0 ≤ γ < 1.
    pub gamma: f64,
    /// Required observability level σ > 0.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeVerdict {
    /// An S-procedure certificate exists at every k on the horizon.
    CertifiedOnHorizon,
    /// A unit vector satisfying the premise but violating the Gramian bound.
    Falsified { k: usize, direction: DVector<f64> },
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct UniformDetectabilityReport {
    pub verdict: ProbeVerdict,
    /// Worst S-procedure margin over k (min eigenvalue of the certified
    /// combination at the best τ).
    pub worst_margin: f64,
    pub horizon: usize,
}

/// Two-sided finite-horizon probe of uniform detectability for
/// `k ↦ (X(k), Y(k))` (pair order: premise on `X`, Gramian on `Y`).
///
/// At each `k` it seeks τ ≥ 0 with
/// `O(k) − σI + τ(γ²I − Φ_μᵀΦ_μ) ⪰ 0` (sufficient, S-procedure), where
/// `O(k)` is the ν-window observability Gramian; and independently samples
/// unit vectors trying to violate the definition. Sampling hits are exact
/// counterexamples; certificates hold only on the tested horizon.
pub fn uniform_detectability_probe(
    seq: &dyn Fn(usize) -> (DMatrix<f64>, DMatrix<f64>),
    params: &UniformDetectabilityParams,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Result<UniformDetectabilityReport> {
    if params.nu < params.mu {
        return Err(Error::InvalidModel("need ν ≥ μ".into()));
    }
    if !(0.0..1.0).contains(&params.gamma) || !(params.sigma > 0.0) {
        return Err(Error::InvalidModel("need 0 ≤ γ < 1 and σ > 0".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let tau_grid: Vec<f64> = std::iter::once(0.0)
        .chain((-6..=6).map(|e| 10f64.powi(e)))
        .collect();

    let mut certified_everywhere = true;
    let mut worst_margin = f64::INFINITY;
    for k in 0..=horizon {
        let (x0, y0) = seq(k);
        let n = x0.nrows();
        if x0.ncols() != n || y0.ncols() != n {
            return Err(Error::DimensionMismatch(format!("pair at k={k}")));
        }
        // Gramian O(k) = Σ_{i=0}^{ν} Φᵀ(k+i,k)Yᵀ(k+i)Y(k+i)Φ(k+i,k) and the
        // premise matrix Φ_μ = Φ(k+μ,k), built forward.
        let mut gramian = DMatrix::<f64>::zeros(n, n);
        let mut phi = DMatrix::<f64>::identity(n, n);
        let mut phi_mu = DMatrix::<f64>::identity(n, n);
        for i in 0..=params.nu {
            let (xi, yi) = if i == 0 { (x0.clone(), y0.clone()) } else { seq(k + i) };
            let m = &yi * &phi;
            gramian += m.transpose() * m;
            phi = xi * phi;
            if i + 1 == params.mu {
                phi_mu = phi.clone();
            }
        }
        if params.mu == 0 {
            phi_mu = DMatrix::identity(n, n);
        }
        let premise = phi_mu.transpose() * &phi_mu; // ΦᵀΦ
        let obligation = &gramian - DMatrix::identity(n, n) * params.sigma;

        // (a) certificate search over the τ grid.
        let mut margin = f64::NEG_INFINITY;
        for &tau in &tau_grid {
            let combo = &obligation + (DMatrix::identity(n, n) * (params.gamma * params.gamma) - &premise) * tau;
            margin = margin.max(min_eigenvalue(&combo));
            if margin >= -1e-9 {
                break;
            }
        }
        worst_margin = worst_margin.min(margin);
        if margin < -1e-9 {
            certified_everywhere = false;
        }

        // (b) falsification by sampling unit directions, plus the
        // eigenvector candidates of the premise and obligation matrices.
        let mut candidates: Vec<DVector<f64>> = Vec::with_capacity(samples + 2 * n);
        for _ in 0..samples {
            let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0_f64));
            if v.norm() > 1e-12 {
                candidates.push(v.normalize());
            }
        }
        for m in [&premise, &gramian] {
            let eig = crate::linalg::symmetrized(m).symmetric_eigen();
            for c in 0..n {
                candidates.push(eig.eigenvectors.column(c).into_owned());
            }
        }
        for xi in candidates {
            let premise_holds = (&phi_mu * &xi).norm() >= params.gamma * xi.norm();
            let gram_value = (xi.transpose() * &gramian * &xi)[(0, 0)];
            if premise_holds && gram_value < params.sigma * xi.norm_squared() * (1.0 - 1e-12) - 1e-12 {
                return Ok(UniformDetectabilityReport {
                    verdict: ProbeVerdict::Falsified { k, direction: xi },
                    worst_margin,
                    horizon,
                });
            }
        }
    }
    Ok(UniformDetectabilityReport {
        verdict: if certified_everywhere {
            ProbeVerdict::CertifiedOnHorizon
        } else {
            ProbeVerdict::Inconclusive
        },
        worst_margin,
        horizon,
    })
}

/// Search a (μ, ν, γ, σ) grid for a certificate of uniform detectability.
///
/// Returns the first parameter set whose probe certifies the whole horizon.
pub fn uniform_detectability_grid_search(
    seq: &dyn Fn(usize) -> (DMatrix<f64>, DMatrix<f64>),
    windows: &[usize],
    gammas: &[f64],
    sigmas: &[f64],
    horizon: usize,
    seed: u64,
) -> Result<Option<(UniformDetectabilityParams, UniformDetectabilityReport)>> {
    for &w in windows {
        for &gamma in gammas {
            for &sigma in sigmas {
                let params = UniformDetectabilityParams { mu: w, nu: w, gamma, sigma };
                let report = uniform_detectability_probe(seq, &params, horizon, 16, seed)?;
                if report.verdict == ProbeVerdict::CertifiedOnHorizon {
                    return Ok(Some((params, report)));
                }
            }
        }
    }
    Ok(None)
}
