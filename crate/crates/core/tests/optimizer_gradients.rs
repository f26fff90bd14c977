//! Finite-difference validation of the analytic smoothed-objective gradients,
//! treating real and imaginary parts as independent real coordinates.

use nalgebra::Complex;
use noncoh_mac::linalg::CMat;
use noncoh_mac::optimizer::{
    euclidean_gradient_ambient, smooth_objective_ambient, Criterion, ObliquePoint,
    OptimizerConfig,
};

fn central_difference(
    c: &CMat,
    k1: usize,
    k2: usize,
    cfg: &OptimizerConfig,
    h: f64,
) -> CMat {
    let mut fd = CMat::zeros(c.nrows(), c.ncols());
    for j in 0..c.ncols() {
        for i in 0..c.nrows() {
            let probe = |delta: Complex<f64>| -> f64 {
                let mut cp = c.clone();
                cp[(i, j)] += delta;
                smooth_objective_ambient(&cp, k1, k2, cfg).unwrap()
            };
            let d_re =
                (probe(Complex::new(h, 0.0)) - probe(Complex::new(-h, 0.0))) / (2.0 * h);
            let d_im =
                (probe(Complex::new(0.0, h)) - probe(Complex::new(0.0, -h))) / (2.0 * h);
            fd[(i, j)] = Complex::new(d_re, d_im);
        }
    }
    fd
}

/// Max entry deviation relative to the largest analytic gradient entry.
fn gradient_rel_error(point: &ObliquePoint, cfg: &OptimizerConfig, h: f64) -> f64 {
    let (k1, k2) = point.split();
    let analytic = euclidean_gradient_ambient(point.matrix(), k1, k2, cfg).unwrap();
    let fd = central_difference(point.matrix(), k1, k2, cfg, h);
    let scale = analytic
        .iter()
        .map(|v| v.norm())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    (&fd - &analytic)
        .iter()
        .map(|v| v.norm())
        .fold(0.0f64, f64::max)
        / scale
}

fn check_criterion(criterion: Criterion, epsilon: f64, p: f64, seeds: std::ops::Range<u64>) {
    for seed in seeds {
        let point = ObliquePoint::random(4, 3, 3, seed).unwrap();
        let cfg = OptimizerConfig {
            criterion,
            epsilon,
            design_snr: p,
            ..OptimizerConfig::default()
        };
        let err = gradient_rel_error(&point, &cfg, 1e-6);
        assert!(
            err <= 1e-5,
            "{criterion:?} seed {seed}: finite-difference mismatch {err:.3e}"
        );
    }
}

#[test]
fn dmin_gradient_matches_finite_differences() {
    check_criterion(Criterion::DMin, 20.0, 100.0, 0..5);
}

#[test]
fn mean_pllr_gradient_matches_finite_differences() {
    check_criterion(Criterion::MeanPllr, 20.0, 100.0, 5..10);
}

#[test]
fn alt_d12_gradient_matches_finite_differences() {
    check_criterion(Criterion::AltD12, 20.0, 100.0, 10..15);
}

#[test]
fn alt_d21_gradient_matches_finite_differences() {
    check_criterion(Criterion::AltD21, 20.0, 100.0, 15..20);
}

#[test]
fn chordal_gradient_matches_finite_differences() {
    check_criterion(Criterion::Chordal, 0.05, 1.0, 20..25);
}

#[test]
fn reweighting_by_epsilon_keeps_gradients_consistent() {
    // halving / doubling epsilon recomputes the softmax weights; the analytic
    // gradient must track finite differences at every smoothing width
    for (seed, epsilon) in [(30u64, 40.0), (31, 10.0), (32, 5.0)] {
        let point = ObliquePoint::random(4, 2, 2, seed).unwrap();
        let cfg = OptimizerConfig {
            criterion: Criterion::DMin,
            epsilon,
            design_snr: 50.0,
            ..OptimizerConfig::default()
        };
        let err = gradient_rel_error(&point, &cfg, 1e-6);
        assert!(err <= 1e-5, "eps {epsilon} seed {seed}: {err:.3e}");
    }
}

#[test]
fn single_user_gradients_match_finite_differences() {
    // K2 = 0: the single-user pair sets used by codebook generation
    for criterion in [Criterion::Chordal, Criterion::DMin, Criterion::MeanPllr] {
        let point = ObliquePoint::random(4, 4, 0, 40).unwrap();
        let cfg = OptimizerConfig {
            criterion,
            epsilon: if criterion == Criterion::Chordal { 0.05 } else { 10.0 },
            design_snr: 30.0,
            ..OptimizerConfig::default()
        };
        let err = gradient_rel_error(&point, &cfg, 1e-6);
        assert!(err <= 1e-5, "{criterion:?}: {err:.3e}");
    }
}

#[test]
fn orthogonal_cross_pair_psi_gradient_vanishes() {
    // At exactly orthogonal columns the rank-1 psi factor annihilates: the
    // log-det term contributes nothing to the cross column's gradient.
    let mut c = CMat::zeros(4, 2);
    c[(0, 0)] = Complex::new(1.0, 0.0);
    c[(1, 1)] = Complex::new(1.0, 0.0);
    let cfg = OptimizerConfig {
        criterion: Criterion::MeanPllr,
        epsilon: 10.0,
        design_snr: 100.0,
        ..OptimizerConfig::default()
    };
    // single joint symbol per user is not a valid pair set for mean-pllr
    // (needs two distinct joint symbols), so build K1 = 2, K2 = 1 with the
    // user-1 columns orthogonal to the user-2 column.
    let mut c3 = CMat::zeros(4, 3);
    c3[(0, 0)] = Complex::new(1.0, 0.0);
    c3[(1, 1)] = Complex::new(1.0, 0.0);
    c3[(2, 2)] = Complex::new(1.0, 0.0);
    let point = ObliquePoint::new(c3, 2, 1).unwrap();
    let err = gradient_rel_error(&point, &cfg, 1e-6);
    assert!(err <= 1e-5, "orthogonal point: {err:.3e}");
    let _ = c;
}
