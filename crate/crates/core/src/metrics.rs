//! Closed-form detection metrics: likelihoods, pairwise log-likelihood ratio
//! moments, the Cantelli bound, d-metrics, the chordal criterion, and the
//! partitioning bounds.
//!
//! Every function here is pure; pair scans are exhaustive over ordered pairs
//! with ties broken by the lowest pair index.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constellation::{JointCodebook, GRASSMANNIAN_VALID_TOL};
use crate::error::{Error, Result};
use crate::linalg::{herm_eigenvalues, herm_sqrt, hermitianize, resolvent_matrix, CMat, HermChol};

/// Detection statistics of one ordered symbol pair `x -> x'`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairStats {
    /// `E[L(x -> x')]` in nats; nonnegative (it is N times a KL divergence).
    pub mean_pllr: f64,
    /// `Var[L(x -> x')]` in nats^2.
    pub var_pllr: f64,
    /// `tr((I + x' x'^H)^{-1} x x^H)`.
    pub d_value: f64,
    /// Cantelli bound on the pairwise error probability, in [0, 1].
    pub cantelli: f64,
    /// Eigenvalues of the Lambda matrix, ascending.
    pub lambda_eigs: Vec<f64>,
}

/// Codebook-level metric summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub d_min: f64,
    pub d12: f64,
    pub d21: f64,
    /// `(1/N) min E[L]` over ordered pairs (independent of N).
    pub min_mean_pllr: f64,
    /// Maximum normalized squared cross-correlation (the three-family max),
    /// normalized by `(PT)^2`.
    pub max_cross_corr: f64,
    /// Ordered joint index pair attaining `d_min`.
    pub worst_pair: (usize, usize),
}

/// log of the received-block likelihood:
/// `-tr(Y^H (I + x x^H)^{-1} Y) - N log det(I + x x^H) - N T log(pi)`.
pub fn log_likelihood(y: &CMat, x: &CMat) -> Result<f64> {
    if y.nrows() != x.nrows() {
        return Err(Error::Dimension(format!(
            "Y has {} rows but x has {}",
            y.nrows(),
            x.nrows()
        )));
    }
    let t = y.nrows() as f64;
    let n = y.ncols() as f64;
    let chol = HermChol::of_resolvent(x)?;
    Ok(-chol.quad_trace(y) - n * chol.ln_det() - n * t * std::f64::consts::PI.ln())
}

/// Pairwise log-likelihood ratio `L(x -> x')` for a received block `Y`,
/// computed as the log-det ratio plus the resolvent-difference trace.
pub fn pllr(y: &CMat, x: &CMat, xp: &CMat) -> Result<f64> {
    if y.nrows() != x.nrows() || y.nrows() != xp.nrows() {
        return Err(Error::Dimension("Y, x, x' must agree on T".into()));
    }
    let n = y.ncols() as f64;
    let chol_x = HermChol::of_resolvent(x)?;
    let chol_xp = HermChol::of_resolvent(xp)?;
    Ok(pllr_with(&chol_x, &chol_xp, y, n))
}

/// Same as [`pllr`] with the two resolvents already factored.
pub(crate) fn pllr_with(chol_x: &HermChol, chol_xp: &HermChol, y: &CMat, n: f64) -> f64 {
    n * (chol_xp.ln_det() - chol_x.ln_det()) - (chol_x.quad_trace(y) - chol_xp.quad_trace(y))
}

/// Moments of `L(x -> x')` through the Lambda-matrix eigenvalues, plus the
/// d-value and the Cantelli bound.
pub fn pair_stats(x: &CMat, xp: &CMat, n: usize) -> Result<PairStats> {
    if x.nrows() != xp.nrows() {
        return Err(Error::Dimension("x and x' must agree on T".into()));
    }
    let nf = n as f64;
    let s = resolvent_matrix(x);
    let chol_sp = HermChol::of_resolvent(xp)?;
    let s_sqrt = herm_sqrt(&s);
    let z = chol_sp.solve_mat(&s_sqrt);
    let mut lambda = hermitianize(&(&s_sqrt * z));
    for i in 0..lambda.nrows() {
        lambda[(i, i)] -= nalgebra::Complex::new(1.0, 0.0);
    }
    let lambda_eigs = herm_eigenvalues(&lambda);
    // eigenvalues of I + Lambda are positive, so ln_1p is well defined
    let mean_pllr = (nf * lambda_eigs.iter().map(|&l| l - l.ln_1p()).sum::<f64>()).max(0.0);
    let var_pllr = nf * lambda_eigs.iter().map(|&l| l * l).sum::<f64>();
    let d_value = chol_sp.quad_trace(x);
    Ok(PairStats {
        mean_pllr,
        var_pllr,
        d_value,
        cantelli: cantelli_bound(mean_pllr, var_pllr),
        lambda_eigs,
    })
}

/// Cantelli bound `Var / (Var + E^2)`; by convention 1 when the mean is 0.
pub fn cantelli_bound(mean: f64, var: f64) -> f64 {
    if mean == 0.0 {
        return 1.0;
    }
    let denom = var + mean * mean;
    if denom == 0.0 {
        1.0
    } else {
        var / denom
    }
}

/// Mean and variance of `L(x -> x')` via the direct determinant/trace
/// formulas, without forming Lambda. Independent algebraic route from
/// [`pair_stats`]; the two must agree to high relative accuracy.
pub fn pair_moments_direct(x: &CMat, xp: &CMat, n: usize) -> Result<(f64, f64)> {
    if x.nrows() != xp.nrows() {
        return Err(Error::Dimension("x and x' must agree on T".into()));
    }
    let t = x.nrows() as f64;
    let nf = n as f64;
    let s = resolvent_matrix(x);
    let chol_s = HermChol::new(s.clone())?;
    let chol_sp = HermChol::of_resolvent(xp)?;
    let mean = nf
        * (chol_sp.ln_det() - chol_s.ln_det() + chol_sp.trace_inverse()
            + chol_sp.quad_trace(x)
            - t);
    // Var = N (tr((S'^{-1} S)^2) - 2 tr(S'^{-1} S) + T)
    let a = chol_sp.solve_mat(&s);
    let tr_a: f64 = (0..a.nrows()).map(|i| a[(i, i)].re).sum();
    let mut tr_a2 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            tr_a2 += (a[(i, j)] * a[(j, i)]).re;
        }
    }
    let var = nf * (tr_a2 - 2.0 * tr_a + t);
    Ok((mean, var))
}

/// Union bounds on the symbol error probability from a pairwise error
/// probability matrix: `(max pep / |X|, min(1, (|X|-1) max pep))`.
pub fn union_bounds(pep: &DMatrix<f64>) -> Result<(f64, f64)> {
    let n = pep.nrows();
    if n == 0 {
        return Err(Error::Size("PEP matrix is empty".into()));
    }
    if pep.ncols() != n {
        return Err(Error::Dimension("PEP matrix must be square".into()));
    }
    let mut max_pep = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                max_pep = max_pep.max(pep[(i, j)]);
            }
        }
    }
    let lower = max_pep / n as f64;
    let upper = ((n as f64 - 1.0) * max_pep).min(1.0);
    Ok((lower, upper))
}

/// `d(x -> x') = tr((I + x' x'^H)^{-1} x x^H)` for two joint symbols.
pub fn d_value(x: &CMat, xp: &CMat) -> Result<f64> {
    if x.nrows() != xp.nrows() {
        return Err(Error::Dimension("x and x' must agree on T".into()));
    }
    Ok(HermChol::of_resolvent(xp)?.quad_trace(x))
}

fn joint_chols(joint: &JointCodebook) -> Result<Vec<HermChol>> {
    joint
        .joint_symbols()
        .iter()
        .map(HermChol::of_resolvent)
        .collect()
}

/// Minimum of `d(x -> x')` over all ordered pairs of distinct joint symbols,
/// with the attaining (ordered) index pair.
pub fn d_min(joint: &JointCodebook) -> Result<(f64, (usize, usize))> {
    let symbols = joint.joint_symbols();
    if symbols.len() < 2 {
        return Err(Error::Size("d_min needs at least 2 joint symbols".into()));
    }
    let chols = joint_chols(joint)?;
    let mut best = f64::INFINITY;
    let mut pair = (0usize, 0usize);
    for (i, x) in symbols.iter().enumerate() {
        for (j, chol) in chols.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = chol.quad_trace(x);
            if d < best {
                best = d;
                pair = (i, j);
            }
        }
    }
    Ok((best, pair))
}

/// `d12`: minimum over `x1 != x1'` in user 1 and any `x2` in user 2 of
/// `tr(x1^H (I + x1' x1'^H + x2 x2^H)^{-1} x1)`.
pub fn d12(joint: &JointCodebook) -> Result<f64> {
    if joint.user1().len() < 2 {
        return Err(Error::Size("d12 needs |X1| >= 2".into()));
    }
    let chols = joint_chols(joint)?;
    let k1 = joint.user1().len();
    let k2 = joint.user2().len();
    let mut best = f64::INFINITY;
    for i in 0..k1 {
        let x1 = joint.user1().symbol(i);
        for j in 0..k1 {
            if i == j {
                continue;
            }
            for l in 0..k2 {
                let d = chols[joint.joint_index(j, l)].quad_trace(x1);
                best = best.min(d);
            }
        }
    }
    Ok(best)
}

/// `d21`: roles of the two users swapped relative to [`d12`].
pub fn d21(joint: &JointCodebook) -> Result<f64> {
    if joint.user2().len() < 2 {
        return Err(Error::Size("d21 needs |X2| >= 2".into()));
    }
    let chols = joint_chols(joint)?;
    let k1 = joint.user1().len();
    let k2 = joint.user2().len();
    let mut best = f64::INFINITY;
    for l in 0..k2 {
        let x2 = joint.user2().symbol(l);
        for m in 0..k2 {
            if l == m {
                continue;
            }
            for i in 0..k1 {
                let d = chols[joint.joint_index(i, m)].quad_trace(x2);
                best = best.min(d);
            }
        }
    }
    Ok(best)
}

/// The three-family maximum of `||x'^H x||_F^2` (intra-user-1, intra-user-2,
/// cross), normalized by `(PT)^2` with `P = max(P1, P2)`.
pub fn chordal_objective(joint: &JointCodebook) -> f64 {
    let pt = joint.user1().power().max(joint.user2().power()) * joint.t() as f64;
    let norm = pt * pt;
    let mut best = 0.0f64;
    let intra = |cb: &crate::constellation::Codebook, best: &mut f64| {
        for i in 0..cb.len() {
            for j in (i + 1)..cb.len() {
                let v = (cb.symbol(j).adjoint() * cb.symbol(i)).norm_squared();
                *best = best.max(v);
            }
        }
    };
    intra(joint.user1(), &mut best);
    intra(joint.user2(), &mut best);
    for x1 in joint.user1().symbols() {
        for x2 in joint.user2().symbols() {
            best = best.max((x2.adjoint() * x1).norm_squared());
        }
    }
    best / norm
}

/// Guaranteed lower bound on `min{d12, d21}` for a maximum normalized
/// squared correlation `c` over Grassmannian constellations:
/// `PT (1 - 2 (1/(PT) + 1/M - sqrt(c))^{-1} c)`. May be vacuous (negative);
/// returned as-is.
pub fn sufficient_bound(c: f64, p: f64, t: usize, m: usize) -> Result<f64> {
    if !(0.0..=1.0 / m as f64).contains(&c) {
        return Err(Error::Domain(format!(
            "c = {c} outside [0, 1/M] = [0, {}]",
            1.0 / m as f64
        )));
    }
    let pt = p * t as f64;
    Ok(pt * (1.0 - 2.0 * c / (1.0 / pt + 1.0 / m as f64 - c.sqrt())))
}

/// Largest `c` for which the right-hand side of the sufficient bound still
/// scales linearly with `P`: `[sqrt(1/(2PT) + 1/(2M) + 1/16) - 1/4]^2`.
pub fn c_limit(p: f64, t: usize, m: usize) -> f64 {
    let pt = p * t as f64;
    let s = (1.0 / (2.0 * pt) + 1.0 / (2.0 * m as f64) + 1.0 / 16.0).sqrt() - 0.25;
    s * s
}

/// Single-user closed form
/// `d(x -> x') = PT (1 - alpha ||x'^H x||_F^2 / (PT)^2)` with
/// `alpha = (1/(PT) + 1/M)^{-1}`, valid for Grassmannian symbols.
pub fn single_user_d(x: &CMat, xp: &CMat, p: f64, t: usize, m: usize) -> Result<f64> {
    let pt = p * t as f64;
    let target = CMat::identity(m, m).map(|v| v * nalgebra::Complex::new(pt / m as f64, 0.0));
    for (name, s) in [("x", x), ("x'", xp)] {
        if s.nrows() != t || s.ncols() != m {
            return Err(Error::Dimension(format!("{name} must be {t}x{m}")));
        }
        if (s.adjoint() * s - &target).norm() > GRASSMANNIAN_VALID_TOL {
            return Err(Error::Invariant(format!(
                "{name} is not Grassmannian at power {p}"
            )));
        }
    }
    let alpha = 1.0 / (1.0 / pt + 1.0 / m as f64);
    let corr = (xp.adjoint() * x).norm_squared();
    Ok(pt * (1.0 - alpha * corr / (pt * pt)))
}

/// `(1/N) min E[L]` over ordered pairs of distinct joint symbols (the value
/// is independent of N), with the attaining pair.
pub fn min_mean_pllr(joint: &JointCodebook) -> Result<(f64, (usize, usize))> {
    let symbols = joint.joint_symbols();
    if symbols.len() < 2 {
        return Err(Error::Size("min mean PLLR needs at least 2 joint symbols".into()));
    }
    let t = joint.t() as f64;
    let chols = joint_chols(joint)?;
    let ln_dets: Vec<f64> = chols.iter().map(|c| c.ln_det()).collect();
    let tr_invs: Vec<f64> = chols.iter().map(|c| c.trace_inverse()).collect();
    let mut best = f64::INFINITY;
    let mut pair = (0usize, 0usize);
    for (i, x) in symbols.iter().enumerate() {
        for j in 0..symbols.len() {
            if i == j {
                continue;
            }
            let mean = ln_dets[j] - ln_dets[i] + tr_invs[j] + chols[j].quad_trace(x) - t;
            if mean < best {
                best = mean;
                pair = (i, j);
            }
        }
    }
    Ok((best, pair))
}

/// Largest Cantelli bound over ordered pairs of distinct joint symbols.
pub fn cantelli_worst(joint: &JointCodebook, n: usize) -> Result<f64> {
    let symbols = joint.joint_symbols();
    if symbols.len() < 2 {
        return Err(Error::Size("need at least 2 joint symbols".into()));
    }
    let mut worst = 0.0f64;
    let t = joint.t() as f64;
    let nf = n as f64;
    let resolvents: Vec<CMat> = symbols.iter().map(resolvent_matrix).collect();
    let chols: Vec<HermChol> = resolvents
        .iter()
        .map(|s| HermChol::new(s.clone()))
        .collect::<Result<_>>()?;
    let ln_dets: Vec<f64> = chols.iter().map(|c| c.ln_det()).collect();
    let tr_invs: Vec<f64> = chols.iter().map(|c| c.trace_inverse()).collect();
    for i in 0..symbols.len() {
        for j in 0..symbols.len() {
            if i == j {
                continue;
            }
            let mean = nf
                * (ln_dets[j] - ln_dets[i] + tr_invs[j] + chols[j].quad_trace(&symbols[i]) - t);
            let a = chols[j].solve_mat(&resolvents[i]);
            let tr_a: f64 = (0..a.nrows()).map(|k| a[(k, k)].re).sum();
            let mut tr_a2 = 0.0;
            for r in 0..a.nrows() {
                for c in 0..a.ncols() {
                    tr_a2 += (a[(r, c)] * a[(c, r)]).re;
                }
            }
            let var = nf * (tr_a2 - 2.0 * tr_a + t);
            worst = worst.max(cantelli_bound(mean.max(0.0), var.max(0.0)));
        }
    }
    Ok(worst)
}

/// Full metric summary of a joint codebook.
pub fn metric_report(joint: &JointCodebook) -> Result<MetricReport> {
    let (dmin, worst_pair) = d_min(joint)?;
    let (min_mean, _) = min_mean_pllr(joint)?;
    Ok(MetricReport {
        d_min: dmin,
        d12: d12(joint)?,
        d21: d21(joint)?,
        min_mean_pllr: min_mean,
        max_cross_corr: chordal_objective(joint),
        worst_pair,
    })
}
