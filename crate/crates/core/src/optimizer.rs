//! Riemannian gradient descent on the oblique manifold (product of complex
//! unit spheres) for the smoothed max-min design criteria, plus alternating
//! optimization of the two per-user constellations.
//!
//! The decision variable is a `T x (K1+K2)` matrix of unit-norm columns;
//! columns `0..K1` are user-1 directions, the rest user-2. Symbols are the
//! columns scaled by `sqrt(PT)` at the design SNR.

use nalgebra::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::{Codebook, JointCodebook};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, HermChol};

/// Unit-norm tolerance for oblique-manifold columns.
pub const UNIT_NORM_TOL: f64 = 1e-12;

const CHUNK: usize = 2048;
const STEP_MIN: f64 = 1e-18;

/// Design criterion being smoothed and descended on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Maximize the minimum expected PLLR, `f = (1/N) E[L]`.
    MeanPllr,
    /// Maximize the minimum `d(x -> x') = tr((I + x'x'^H)^{-1} x x^H)`.
    DMin,
    /// Maximize `d12` over user-1 directions (user 2 fixed).
    AltD12,
    /// Maximize `d21` over user-2 directions (user 1 fixed).
    AltD21,
    /// Minimize the maximum normalized squared correlation (three families).
    Chordal,
}

impl Criterion {
    pub fn parse(name: &str) -> Result<Criterion> {
        match name {
            "mean-pllr" => Ok(Criterion::MeanPllr),
            "dmin" => Ok(Criterion::DMin),
            "alt-d12" => Ok(Criterion::AltD12),
            "alt-d21" => Ok(Criterion::AltD21),
            "chordal" => Ok(Criterion::Chordal),
            other => Err(Error::Config(format!("unknown criterion '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Criterion::MeanPllr => "mean-pllr",
            Criterion::DMin => "dmin",
            Criterion::AltD12 => "alt-d12",
            Criterion::AltD21 => "alt-d21",
            Criterion::Chordal => "chordal",
        }
    }
}

/// Gradient-descent settings. `design_snr` is the linear power `P` at which
/// the metrics are evaluated, regardless of the SNRs the resulting codebook
/// is later benchmarked at.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub criterion: Criterion,
    /// Log-sum-exp smoothing width, in units of the criterion value.
    pub epsilon: f64,
    /// Linear design power `P`.
    pub design_snr: f64,
    pub max_iters: usize,
    pub step_init: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub grad_tol: f64,
    pub seed: u64,
    /// Halve epsilon every `max_iters / 4` iterations.
    pub anneal: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            criterion: Criterion::DMin,
            epsilon: 0.1,
            design_snr: 1000.0, // 30 dB
            max_iters: 500,
            step_init: 1e-2,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            grad_tol: 1e-8,
            seed: 0,
            anneal: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        if !(self.design_snr > 0.0) {
            return Err(Error::Config("design_snr must be > 0".into()));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0)
            || !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0)
        {
            return Err(Error::Config("Armijo parameters must lie in (0, 1)".into()));
        }
        if !(self.step_init > 0.0) {
            return Err(Error::Config("step_init must be > 0".into()));
        }
        Ok(())
    }
}

/// Point on the oblique manifold: unit-norm columns split between the users.
#[derive(Debug, Clone)]
pub struct ObliquePoint {
    c: CMat,
    k1: usize,
    k2: usize,
}

impl ObliquePoint {
    pub fn new(c: CMat, k1: usize, k2: usize) -> Result<Self> {
        if c.ncols() != k1 + k2 {
            return Err(Error::Dimension(format!(
                "matrix has {} columns, split says {k1}+{k2}",
                c.ncols()
            )));
        }
        if k1 == 0 && k2 == 0 {
            return Err(Error::Size("oblique point needs at least one column".into()));
        }
        for j in 0..c.ncols() {
            let norm = c.column(j).norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Invariant(format!(
                    "column {j} has norm {norm}, expected 1 within {UNIT_NORM_TOL:e}"
                )));
            }
        }
        Ok(Self { c, k1, k2 })
    }

    /// Normalized i.i.d. complex Gaussian columns; deterministic given seed.
    pub fn random(t: usize, k1: usize, k2: usize, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut c = crate::linalg::complex_gaussian_matrix(t, k1 + k2, &mut rng);
        normalize_columns(&mut c)?;
        Self::new(c, k1, k2)
    }

    /// Unit directions of an `M1 = M2 = 1` joint codebook.
    pub fn from_joint(joint: &JointCodebook) -> Result<Self> {
        if joint.user1().m() != 1 || joint.user2().m() != 1 {
            return Err(Error::Dimension(
                "oblique optimization requires single-antenna users".into(),
            ));
        }
        let t = joint.t();
        let (k1, k2) = (joint.user1().len(), joint.user2().len());
        let mut c = CMat::zeros(t, k1 + k2);
        for (j, s) in joint
            .user1()
            .symbols()
            .iter()
            .chain(joint.user2().symbols())
            .enumerate()
        {
            c.set_column(j, &s.column(0));
        }
        normalize_columns(&mut c)?;
        Self::new(c, k1, k2)
    }

    pub fn matrix(&self) -> &CMat {
        &self.c
    }

    pub fn t(&self) -> usize {
        self.c.nrows()
    }

    pub fn split(&self) -> (usize, usize) {
        (self.k1, self.k2)
    }

    /// Joint codebook with both users' columns scaled by `sqrt(PT)`.
    pub fn to_joint(&self, power: f64) -> Result<JointCodebook> {
        if self.k1 == 0 || self.k2 == 0 {
            return Err(Error::Size("both users need at least one column".into()));
        }
        let scale = Complex::new((power * self.t() as f64).sqrt(), 0.0);
        let grab = |range: std::ops::Range<usize>| -> Result<Codebook> {
            Codebook::new(
                range
                    .map(|j| CMat::from_column_slice(self.t(), 1, self.c.column(j).as_slice())
                        .map(|v| v * scale))
                    .collect(),
                power,
            )
        };
        JointCodebook::new(grab(0..self.k1)?, grab(self.k1..self.k1 + self.k2)?)
    }

    /// All columns as one single-user codebook scaled by `sqrt(PT)`.
    pub fn to_codebook(&self, power: f64) -> Result<Codebook> {
        let scale = Complex::new((power * self.t() as f64).sqrt(), 0.0);
        Codebook::new(
            (0..self.k1 + self.k2)
                .map(|j| {
                    CMat::from_column_slice(self.t(), 1, self.c.column(j).as_slice())
                        .map(|v| v * scale)
                })
                .collect(),
            power,
        )
    }
}

fn normalize_columns(c: &mut CMat) -> Result<()> {
    for j in 0..c.ncols() {
        let norm = c.column(j).norm();
        if norm < 1e-300 {
            return Err(Error::Invariant(format!("column {j} has zero norm")));
        }
        let inv = Complex::new(1.0 / norm, 0.0);
        for i in 0..c.nrows() {
            c[(i, j)] *= inv;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Pair enumeration and per-pair evaluation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Pair {
    /// `f = sum_a x_a^H S^{-1} x_a` over the x-columns, with `S` the
    /// resolvent of symbol `res_sym`; `x_sym` is set when the x side is a
    /// cached symbol (needed for the mean-PLLR log-det term).
    Res {
        x0: u32,
        x1: u32, // u32::MAX when absent
        x_sym: u32,
        res_sym: u32,
    },
    /// `f = -|c_a^H c_b|^2` on unit columns.
    Corr { a: u32, b: u32 },
}

const NONE: u32 = u32::MAX;

/// Columns of joint symbol `s` (user-2 columns offset by `k1`).
fn sym_cols(s: usize, k1: usize, k2: usize) -> (usize, Option<usize>) {
    if k2 == 0 {
        (s, None)
    } else {
        (s / k2, Some(k1 + (s % k2)))
    }
}

fn build_pairs(criterion: Criterion, k1: usize, k2: usize) -> Result<Vec<Pair>> {
    let mut pairs = Vec::new();
    let n_sym = if k2 == 0 { k1 } else { k1 * k2 };
    match criterion {
        Criterion::MeanPllr | Criterion::DMin => {
            for s in 0..n_sym {
                let (c0, c1) = sym_cols(s, k1, k2);
                for sp in 0..n_sym {
                    if s != sp {
                        pairs.push(Pair::Res {
                            x0: c0 as u32,
                            x1: c1.map_or(NONE, |c| c as u32),
                            x_sym: s as u32,
                            res_sym: sp as u32,
                        });
                    }
                }
            }
        }
        Criterion::AltD12 => {
            if k2 == 0 {
                return Err(Error::Size("alt-d12 needs a two-user point".into()));
            }
            for i in 0..k1 {
                for j in 0..k1 {
                    if i == j {
                        continue;
                    }
                    for l in 0..k2 {
                        pairs.push(Pair::Res {
                            x0: i as u32,
                            x1: NONE,
                            x_sym: NONE,
                            res_sym: (j * k2 + l) as u32,
                        });
                    }
                }
            }
        }
        Criterion::AltD21 => {
            if k2 == 0 {
                return Err(Error::Size("alt-d21 needs a two-user point".into()));
            }
            for l in 0..k2 {
                for m in 0..k2 {
                    if l == m {
                        continue;
                    }
                    for i in 0..k1 {
                        pairs.push(Pair::Res {
                            x0: (k1 + l) as u32,
                            x1: NONE,
                            x_sym: NONE,
                            res_sym: (i * k2 + m) as u32,
                        });
                    }
                }
            }
        }
        Criterion::Chordal => {
            for i in 0..k1 {
                for j in (i + 1)..k1 {
                    pairs.push(Pair::Corr { a: i as u32, b: j as u32 });
                }
            }
            for l in 0..k2 {
                for m in (l + 1)..k2 {
                    pairs.push(Pair::Corr { a: (k1 + l) as u32, b: (k1 + m) as u32 });
                }
            }
            for i in 0..k1 {
                for l in 0..k2 {
                    pairs.push(Pair::Corr { a: i as u32, b: (k1 + l) as u32 });
                }
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Size("criterion has no symbol pairs to optimize".into()));
    }
    Ok(pairs)
}

/// Per joint symbol: Cholesky factor of `I + x x^H` plus the quantities the
/// mean-PLLR gradient reuses.
struct SymData {
    chol: HermChol,
    ln_det: f64,
    tr_inv: f64,
    /// `S^{-1} x_k` for the symbol's own columns.
    v: Vec<CVec>,
    /// `S^{-2} x_k` for the symbol's own columns.
    w: Vec<CVec>,
}

struct Evaluator {
    pairs: Vec<Pair>,
    criterion: Criterion,
    k1: usize,
    k2: usize,
    t: usize,
    sqrt_beta: f64,
}

impl Evaluator {
    fn new(t: usize, k1: usize, k2: usize, cfg: &OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            pairs: build_pairs(cfg.criterion, k1, k2)?,
            criterion: cfg.criterion,
            k1,
            k2,
            t,
            sqrt_beta: (cfg.design_snr * t as f64).sqrt(),
        })
    }

    /// Ambient columns scaled by `sqrt(PT)`.
    fn scaled(&self, c: &CMat) -> CMat {
        c.map(|v| v * Complex::new(self.sqrt_beta, 0.0))
    }

    fn precompute(&self, x: &CMat) -> Result<Vec<SymData>> {
        if self.criterion == Criterion::Chordal {
            return Ok(Vec::new());
        }
        let n_sym = if self.k2 == 0 { self.k1 } else { self.k1 * self.k2 };
        let need_mean = self.criterion == Criterion::MeanPllr;
        (0..n_sym)
            .map(|s| {
                let (c0, c1) = sym_cols(s, self.k1, self.k2);
                let mut sm = CMat::identity(self.t, self.t);
                let mut cols = vec![c0];
                if let Some(c1) = c1 {
                    cols.push(c1);
                }
                for &col in &cols {
                    let xc = x.column(col);
                    sm.ger(Complex::new(1.0, 0.0), &xc, &xc.conjugate(), Complex::new(1.0, 0.0));
                }
                let chol = HermChol::new(sm)?;
                let ln_det = chol.ln_det();
                let (tr_inv, v, w) = if need_mean {
                    let v: Vec<CVec> = cols
                        .iter()
                        .map(|&col| chol.solve_vec(&CVec::from(x.column(col))))
                        .collect();
                    let w: Vec<CVec> = v.iter().map(|vi| chol.solve_vec(vi)).collect();
                    (chol.trace_inverse(), v, w)
                } else {
                    (0.0, Vec::new(), Vec::new())
                };
                Ok(SymData { chol, ln_det, tr_inv, v, w })
            })
            .collect()
    }

    /// `f` of one pair; `x` holds scaled columns, `c` unit columns.
    /// `scratch` is caller-provided to keep the hot loop allocation-free.
    fn pair_f(&self, pair: &Pair, x: &CMat, c: &CMat, syms: &[SymData], scratch: &mut CVec) -> f64 {
        match *pair {
            Pair::Res { x0, x1, x_sym, res_sym } => {
                let data = &syms[res_sym as usize];
                let mut f = 0.0;
                for col in [x0, x1] {
                    if col == NONE {
                        continue;
                    }
                    // tr(x^H S^{-1} x) = ||L^{-1} x||^2
                    scratch.copy_from(&x.column(col as usize));
                    data.chol.half_solve_vec_mut(scratch);
                    f += scratch.norm_squared();
                }
                if self.criterion == Criterion::MeanPllr {
                    let xd = &syms[x_sym as usize];
                    f += data.ln_det - xd.ln_det + data.tr_inv - self.t as f64;
                }
                f
            }
            Pair::Corr { a, b } => {
                let inner = c.column(a as usize).dotc(&c.column(b as usize));
                -inner.norm_sqr()
            }
        }
    }

    /// Adds `-weight * (2 d f / d c*)` of one pair into `grad`.
    /// `us` holds two reusable solve buffers.
    fn pair_grad(
        &self,
        pair: &Pair,
        weight: f64,
        x: &CMat,
        c: &CMat,
        syms: &[SymData],
        grad: &mut CMat,
        us: &mut [CVec; 2],
    ) {
        match *pair {
            Pair::Res { x0, x1, x_sym, res_sym } => {
                let data = &syms[res_sym as usize];
                // d f / d c* = sqrt(beta) * d f / d x*
                let factor = Complex::new(-weight * 2.0 * self.sqrt_beta, 0.0);
                let (r0, r1) = sym_cols(res_sym as usize, self.k1, self.k2);

                let mut n_x = 0usize;
                let mut x_cols = [0usize; 2];
                for col in [x0, x1] {
                    if col == NONE {
                        continue;
                    }
                    let col = col as usize;
                    let u = &mut us[n_x];
                    u.copy_from(&x.column(col));
                    data.chol.solve_vec_mut(u);
                    // d f / d x_a* = u_a
                    axpy_col(grad, col, factor, u);
                    x_cols[n_x] = col;
                    n_x += 1;
                }
                // d f / d x_r* = - sum_a (u_a^H x_r) u_a
                for r in std::iter::once(r0).chain(r1) {
                    let xr = x.column(r);
                    for u in us[..n_x].iter() {
                        let tau = u.dotc(&xr);
                        axpy_col(grad, r, -factor * tau, u);
                    }
                }
                if self.criterion == Criterion::MeanPllr {
                    let xd = &syms[x_sym as usize];
                    // + log det S_res: d/d x_r* = v_r ; + tr(S_res^{-1}): -w_r
                    for (k, r) in std::iter::once(r0).chain(r1).enumerate() {
                        axpy_col(grad, r, factor, &data.v[k]);
                        axpy_col(grad, r, -factor, &data.w[k]);
                    }
                    // - log det S_x: d/d x_a* = -v_a
                    for (k, &a) in x_cols[..n_x].iter().enumerate() {
                        axpy_col(grad, a, -factor, &xd.v[k]);
                    }
                }
            }
            Pair::Corr { a, b } => {
                let (a, b) = (a as usize, b as usize);
                let factor = Complex::new(-weight * 2.0, 0.0);
                let inner = c.column(a).dotc(&c.column(b));
                us[0].copy_from(&c.column(b));
                us[1].copy_from(&c.column(a));
                axpy_col(grad, a, -factor * inner.conj(), &us[0]);
                axpy_col(grad, b, -factor * inner, &us[1]);
            }
        }
    }

    /// Smoothed objective `g = eps * log sum exp(-f/eps)`.
    fn objective(&self, c: &CMat, eps: f64) -> Result<f64> {
        let x = self.scaled(c);
        let syms = self.precompute(&x)?;
        let fs = self.all_f(&x, c, &syms);
        Ok(log_sum_exp_neg(&fs, eps))
    }

    fn all_f(&self, x: &CMat, c: &CMat, syms: &[SymData]) -> Vec<f64> {
        self.pairs
            .par_chunks(CHUNK)
            .flat_map_iter(|chunk| {
                let mut scratch = CVec::zeros(self.t);
                chunk
                    .iter()
                    .map(|p| self.pair_f(p, x, c, syms, &mut scratch))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    fn objective_and_gradient(&self, c: &CMat, eps: f64) -> Result<(f64, CMat)> {
        let x = self.scaled(c);
        let syms = self.precompute(&x)?;
        let fs = self.all_f(&x, c, &syms);
        let h_max = fs.iter().map(|f| -f / eps).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = fs.iter().map(|f| (-f / eps - h_max).exp()).sum();
        let g = eps * (h_max + z.ln());

        // chunked, order-independent-deterministic gradient accumulation
        let partials: Vec<CMat> = self
            .pairs
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(ci, chunk)| {
                let mut grad = CMat::zeros(self.t, self.k1 + self.k2);
                let mut us = [CVec::zeros(self.t), CVec::zeros(self.t)];
                for (k, pair) in chunk.iter().enumerate() {
                    let f = fs[ci * CHUNK + k];
                    let weight = ((-f / eps - h_max).exp()) / z;
                    if weight != 0.0 {
                        self.pair_grad(pair, weight, &x, c, &syms, &mut grad, &mut us);
                    }
                }
                grad
            })
            .collect();
        let mut grad = CMat::zeros(self.t, self.k1 + self.k2);
        for p in partials {
            grad += p;
        }
        Ok((g, grad))
    }
}

#[cfg(test)]
fn col_mat(x: &CMat, col: usize) -> CMat {
    CMat::from_column_slice(x.nrows(), 1, x.column(col).as_slice())
}

fn axpy_col(grad: &mut CMat, col: usize, alpha: Complex<f64>, v: &CVec) {
    let t = grad.nrows();
    let g = &mut grad.as_mut_slice()[col * t..(col + 1) * t];
    let vs = v.as_slice();
    for i in 0..t {
        g[i] += alpha * vs[i];
    }
}

fn log_sum_exp_neg(fs: &[f64], eps: f64) -> f64 {
    let h_max = fs.iter().map(|f| -f / eps).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = fs.iter().map(|f| (-f / eps - h_max).exp()).sum();
    eps * (h_max + z.ln())
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// `eps * log sum_pairs exp(-f/eps)` over the criterion's pair set;
/// minimizing this approximately maximizes the minimum `f`.
pub fn smooth_objective(point: &ObliquePoint, cfg: &OptimizerConfig) -> Result<f64> {
    let (k1, k2) = point.split();
    Evaluator::new(point.t(), k1, k2, cfg)?.objective(point.matrix(), cfg.epsilon)
}

/// Ambient extension of [`smooth_objective`]: same formula evaluated at an
/// arbitrary (not necessarily unit-norm) coefficient matrix. This is what
/// finite-difference gradient checks probe.
pub fn smooth_objective_ambient(
    c: &CMat,
    k1: usize,
    k2: usize,
    cfg: &OptimizerConfig,
) -> Result<f64> {
    Evaluator::new(c.nrows(), k1, k2, cfg)?.objective(c, cfg.epsilon)
}

/// Euclidean gradient of the smoothed objective in real coordinates, packed
/// as a complex matrix: entry `(t, n)` is
/// `d g / d Re(c_tn) + i * d g / d Im(c_tn)` (twice the conjugate Wirtinger
/// derivative).
pub fn euclidean_gradient(point: &ObliquePoint, cfg: &OptimizerConfig) -> Result<CMat> {
    let (k1, k2) = point.split();
    let eval = Evaluator::new(point.t(), k1, k2, cfg)?;
    Ok(eval.objective_and_gradient(point.matrix(), cfg.epsilon)?.1)
}

/// Ambient-extension gradient, matching [`smooth_objective_ambient`].
pub fn euclidean_gradient_ambient(
    c: &CMat,
    k1: usize,
    k2: usize,
    cfg: &OptimizerConfig,
) -> Result<CMat> {
    let eval = Evaluator::new(c.nrows(), k1, k2, cfg)?;
    Ok(eval.objective_and_gradient(c, cfg.epsilon)?.1)
}

/// Tangent projection: column `n` of the result is
/// `(I - c_n c_n^H) g_n`.
pub fn riemannian_gradient(point: &ObliquePoint, euclidean_grad: &CMat) -> Result<CMat> {
    let c = point.matrix();
    if euclidean_grad.shape() != c.shape() {
        return Err(Error::Dimension(format!(
            "gradient shape {:?} does not match point shape {:?}",
            euclidean_grad.shape(),
            c.shape()
        )));
    }
    let mut out = euclidean_grad.clone();
    for j in 0..c.ncols() {
        let cj = c.column(j);
        let coeff = cj.dotc(&euclidean_grad.column(j));
        let mut col = out.column_mut(j);
        for i in 0..c.nrows() {
            col[i] -= coeff * cj[i];
        }
    }
    Ok(out)
}

/// Column-wise retraction `(c_n + step * t_n) / ||c_n + step * t_n||`.
pub fn retract(point: &ObliquePoint, tangent: &CMat, step: f64) -> Result<ObliquePoint> {
    let c = point.matrix();
    if tangent.shape() != c.shape() {
        return Err(Error::Dimension("tangent shape mismatch".into()));
    }
    if step == 0.0 {
        return Ok(point.clone());
    }
    let mut moved = c + tangent.map(|v| v * Complex::new(step, 0.0));
    for j in 0..moved.ncols() {
        let norm = moved.column(j).norm();
        if norm < 1e-300 {
            return Err(Error::Step(format!(
                "column {j} collapsed to zero norm during retraction"
            )));
        }
        let inv = Complex::new(1.0 / norm, 0.0);
        for i in 0..moved.nrows() {
            moved[(i, j)] *= inv;
        }
    }
    let (k1, k2) = point.split();
    ObliquePoint::new(moved, k1, k2)
}

/// One accepted iteration of the descent loop.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// Armijo-backtracking Riemannian gradient descent on the smoothed objective.
/// Returns the best-objective iterate and the per-iteration trace.
pub fn optimize_point(
    init: &ObliquePoint,
    cfg: &OptimizerConfig,
) -> Result<(ObliquePoint, Vec<IterRecord>)> {
    let (k1, k2) = init.split();
    let eval = Evaluator::new(init.t(), k1, k2, cfg)?;
    // alt criteria move only their own user's columns
    let mask: Option<std::ops::Range<usize>> = match cfg.criterion {
        Criterion::AltD12 => Some(k1..k1 + k2),
        Criterion::AltD21 => Some(0..k1),
        _ => None,
    };

    let mut eps = cfg.epsilon;
    let mut current = init.clone();
    let mut g = eval.objective(current.matrix(), eps)?;
    let mut best = (g, current.clone());
    let mut trace = vec![IterRecord { iter: 0, objective: g, grad_norm: f64::NAN, step: 0.0 }];
    let mut step_start = cfg.step_init;
    // previous iterate/gradient for the Barzilai-Borwein trial step
    let mut prev: Option<(CMat, CMat)> = None;
    let anneal_every = if cfg.anneal && cfg.max_iters >= 4 { cfg.max_iters / 4 } else { 0 };

    for iter in 1..=cfg.max_iters {
        if anneal_every > 0 && iter > 1 && (iter - 1) % anneal_every == 0 {
            eps *= 0.5;
            g = eval.objective(current.matrix(), eps)?;
            best = (eval.objective(best.1.matrix(), eps)?, best.1);
            if g < best.0 {
                best = (g, current.clone());
            }
            prev = None; // gradients across the anneal boundary are incomparable
        }
        let (g_now, egrad) = eval.objective_and_gradient(current.matrix(), eps)?;
        g = g_now;
        let mut rgrad = riemannian_gradient(&current, &egrad)?;
        if let Some(frozen) = &mask {
            for j in frozen.clone() {
                rgrad.column_mut(j).fill(Complex::new(0.0, 0.0));
            }
        }
        let grad_norm_sq = rgrad.norm_squared();
        let grad_norm = grad_norm_sq.sqrt();
        if grad_norm < cfg.grad_tol {
            break;
        }

        // Barzilai-Borwein trial step from ambient differences, safeguarded
        // by the Armijo backtracking below; fall back to doubling the last
        // accepted step when BB is unavailable or degenerate
        let mut trial = step_start;
        if let Some((pc, pg)) = &prev {
            let s = current.matrix() - pc;
            let y = &rgrad - pg;
            let sy = s
                .iter()
                .zip(y.iter())
                .map(|(a, b)| (a.conj() * b).re)
                .sum::<f64>();
            let yy = y.norm_squared();
            let bb = sy / yy;
            if bb.is_finite() && bb > 0.0 {
                trial = bb.clamp(1e-10, 1e3);
            }
        }
        prev = Some((current.matrix().clone(), rgrad.clone()));

        let direction = rgrad.map(|v| -v);
        let mut step = trial;
        let mut accepted = None;
        while step >= STEP_MIN {
            let cand = retract(&current, &direction, step)?;
            let cand_g = eval.objective(cand.matrix(), eps)?;
            if cand_g <= g - cfg.armijo_c * step * grad_norm_sq {
                accepted = Some((cand, cand_g));
                break;
            }
            step *= cfg.armijo_shrink;
        }
        let Some((cand, cand_g)) = accepted else {
            break; // no productive step exists at this scale
        };
        current = cand;
        g = cand_g;
        step_start = (step * 2.0).min(1.0);
        trace.push(IterRecord { iter, objective: g, grad_norm, step });
        if g < best.0 {
            best = (g, current.clone());
        }
    }
    Ok((best.1, trace))
}

/// [`optimize_point`] followed by scaling into a joint codebook at the
/// design SNR.
pub fn optimize(
    init: &ObliquePoint,
    cfg: &OptimizerConfig,
) -> Result<(JointCodebook, Vec<IterRecord>)> {
    let (point, trace) = optimize_point(init, cfg)?;
    Ok((point.to_joint(cfg.design_snr)?, trace))
}

/// Alternating optimization: repeatedly maximize `d12` over user 1 with user
/// 2 fixed, then `d21` over user 2 with user 1 fixed.
///
/// With `cfg.anneal` set, the smoothing width halves after each full round
/// (rather than inside the half-runs), so early rounds move both
/// constellations coarsely and later rounds sharpen the worst pairs.
pub fn alternating_optimize(
    init: &JointCodebook,
    cfg: &OptimizerConfig,
    rounds: usize,
) -> Result<JointCodebook> {
    if rounds == 0 {
        return Ok(init.clone());
    }
    let mut point = ObliquePoint::from_joint(init)?;
    let mut eps = cfg.epsilon;
    for _ in 0..rounds {
        let half = OptimizerConfig { epsilon: eps, anneal: false, ..cfg.clone() };
        let cfg12 = OptimizerConfig { criterion: Criterion::AltD12, ..half.clone() };
        point = optimize_point(&point, &cfg12)?.0;
        let cfg21 = OptimizerConfig { criterion: Criterion::AltD21, ..half };
        point = optimize_point(&point, &cfg21)?.0;
        if cfg.anneal {
            eps *= 0.5;
        }
    }
    point.to_joint(cfg.design_snr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::random_grassmannian;
    use approx::assert_relative_eq;

    fn cfg(criterion: Criterion, epsilon: f64, p: f64) -> OptimizerConfig {
        OptimizerConfig { criterion, epsilon, design_snr: p, ..OptimizerConfig::default() }
    }

    #[test]
    fn single_pair_objective_is_minus_f() {
        // one chordal pair: g = -f exactly
        let point = ObliquePoint::random(3, 2, 0, 1).unwrap();
        let c = cfg(Criterion::Chordal, 0.05, 1.0);
        let g = smooth_objective(&point, &c).unwrap();
        let inner = point.matrix().column(0).dotc(&point.matrix().column(1));
        let f = -inner.norm_sqr();
        assert_relative_eq!(g, -f, max_relative = 1e-12);
    }

    #[test]
    fn equal_pair_objective_gains_eps_log2() {
        // two ordered dmin pairs with equal f (single-user, two symbols)
        let point = ObliquePoint::random(4, 2, 0, 2).unwrap();
        let c = cfg(Criterion::DMin, 0.3, 2.0);
        let g = smooth_objective(&point, &c).unwrap();
        let joint_f = |i: usize, j: usize| {
            let x = |k: usize| {
                col_mat(point.matrix(), k).map(|v| v * Complex::new((2.0 * 4.0f64).sqrt(), 0.0))
            };
            crate::metrics::d_value(&x(i), &x(j)).unwrap()
        };
        let f01 = joint_f(0, 1);
        let f10 = joint_f(1, 0);
        assert_relative_eq!(f01, f10, max_relative = 1e-10);
        assert_relative_eq!(g, -f01 + 0.3 * 2.0f64.ln(), max_relative = 1e-9);
    }

    #[test]
    fn epsilon_sweep_brackets_the_min() {
        let point = ObliquePoint::random(4, 3, 3, 3).unwrap();
        let base = cfg(Criterion::DMin, 1.0, 10.0);
        let eval = Evaluator::new(4, 3, 3, &base).unwrap();
        let x = eval.scaled(point.matrix());
        let syms = eval.precompute(&x).unwrap();
        let fs = eval.all_f(&x, point.matrix(), &syms);
        let min_f = fs.iter().copied().fold(f64::INFINITY, f64::min);
        let n_pairs = fs.len() as f64;
        let mut prev = f64::INFINITY;
        for eps in [1.0, 0.1, 0.01] {
            let g = smooth_objective(&point, &cfg(Criterion::DMin, eps, 10.0)).unwrap();
            assert!(g >= -min_f - 1e-12, "lse must upper bound -min f");
            assert!(g <= -min_f + eps * n_pairs.ln() + 1e-12);
            assert!(g <= prev + 1e-12, "g must decrease monotonically in eps");
            prev = g;
        }
    }

    #[test]
    fn riemannian_projection_cases() {
        let point = ObliquePoint::random(4, 2, 1, 4).unwrap();
        let c = point.matrix();
        // gradient parallel to its own column projects to zero
        let mut par = CMat::zeros(4, 3);
        for j in 0..3 {
            let beta = Complex::new(1.3 + j as f64, -0.4);
            for i in 0..4 {
                par[(i, j)] = beta * c[(i, j)];
            }
        }
        let proj = riemannian_gradient(&point, &par).unwrap();
        assert!(proj.norm() < 1e-12);

        // random gradients project onto the tangent space
        let g = {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
            crate::linalg::complex_gaussian_matrix(4, 3, &mut rng)
        };
        let proj = riemannian_gradient(&point, &g).unwrap();
        for j in 0..3 {
            let t = proj.column(j);
            assert!(c.column(j).dotc(&t).norm() < 1e-12);
        }
        // a tangent gradient is left unchanged
        let again = riemannian_gradient(&point, &proj).unwrap();
        assert!((again - proj).norm() < 1e-12);
    }

    #[test]
    fn retraction_is_second_order() {
        let point = ObliquePoint::random(5, 2, 2, 5).unwrap();
        let g = {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
            crate::linalg::complex_gaussian_matrix(5, 4, &mut rng)
        };
        let tangent = riemannian_gradient(&point, &g).unwrap();

        let unchanged = retract(&point, &tangent, 0.0).unwrap();
        assert_eq!(unchanged.matrix(), point.matrix());

        for j in 0..4 {
            assert_relative_eq!(
                retract(&point, &tangent, 0.3).unwrap().matrix().column(j).norm(),
                1.0,
                epsilon = 1e-12
            );
        }

        let mut prev_ratio = None;
        for s in [1e-2, 1e-3, 1e-4] {
            let r = retract(&point, &tangent, s).unwrap();
            let linear = point.matrix() + tangent.map(|v| v * Complex::new(s, 0.0));
            let err = (r.matrix() - linear).norm();
            let ratio = err / (s * s);
            if let Some(prev) = prev_ratio {
                // O(s^2): the ratio err/s^2 stays bounded as s shrinks
                assert!(ratio < 4.0 * prev + 1e-9, "ratio {ratio} vs {prev}");
            }
            prev_ratio = Some(ratio);
        }
    }

    #[test]
    fn optimize_returns_init_at_stationary_point() {
        // orthonormal columns: every chordal pair has zero correlation, the
        // gradient vanishes
        let mut c = CMat::zeros(4, 3);
        for j in 0..3 {
            c[(j, j)] = Complex::new(1.0, 0.0);
        }
        let point = ObliquePoint::new(c, 2, 1).unwrap();
        let mut conf = cfg(Criterion::Chordal, 0.1, 1.0);
        conf.max_iters = 50;
        let (out, trace) = optimize_point(&point, &conf).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(out.matrix(), point.matrix());
    }

    #[test]
    fn objective_trace_is_non_increasing() {
        let point = ObliquePoint::random(4, 3, 3, 6).unwrap();
        for criterion in [
            Criterion::DMin,
            Criterion::MeanPllr,
            Criterion::AltD12,
            Criterion::AltD21,
            Criterion::Chordal,
        ] {
            let mut conf = cfg(criterion, 0.5, 100.0);
            conf.max_iters = 40;
            let (_, trace) = optimize_point(&point, &conf).unwrap();
            for w in trace.windows(2) {
                assert!(
                    w[1].objective <= w[0].objective + 1e-12,
                    "{criterion:?}: trace increased"
                );
            }
        }
    }

    #[test]
    fn alt_criteria_freeze_the_other_user() {
        let point = ObliquePoint::random(4, 3, 2, 7).unwrap();
        let mut conf = cfg(Criterion::AltD12, 0.5, 50.0);
        conf.max_iters = 20;
        let (out, _) = optimize_point(&point, &conf).unwrap();
        for j in 3..5 {
            assert_eq!(out.matrix().column(j), point.matrix().column(j));
        }
        let mut conf = cfg(Criterion::AltD21, 0.5, 50.0);
        conf.max_iters = 20;
        let (out, _) = optimize_point(&point, &conf).unwrap();
        for j in 0..3 {
            assert_eq!(out.matrix().column(j), point.matrix().column(j));
        }
    }

    #[test]
    fn optimize_improves_min_pair_d_on_most_seeds() {
        // T=2, K1=K2=2, dmin: the optimized min-pair d should beat the random
        // start on nearly all seeds
        let mut wins = 0;
        let total = 100;
        for seed in 0..total {
            let point = ObliquePoint::random(2, 2, 2, seed).unwrap();
            let mut conf = cfg(Criterion::DMin, 0.05, 10.0);
            conf.max_iters = 500;
            conf.grad_tol = 1e-10;
            let (joint, _) = optimize(&point, &conf).unwrap();
            let before = crate::metrics::d_min(&point.to_joint(10.0).unwrap()).unwrap().0;
            let after = crate::metrics::d_min(&joint).unwrap().0;
            if after > before {
                wins += 1;
            }
        }
        assert!(wins >= 95, "only {wins}/{total} seeds improved");
    }

    #[test]
    fn alternating_round_trip_contracts() {
        let user1 = random_grassmannian(4, 1, 3, 100.0, 20).unwrap();
        let user2 = random_grassmannian(4, 1, 3, 100.0, 21).unwrap();
        let joint = crate::constellation::JointCodebook::new(user1, user2).unwrap();
        let mut conf = cfg(Criterion::DMin, 0.5, 100.0);
        conf.max_iters = 15;

        let untouched = alternating_optimize(&joint, &conf, 0).unwrap();
        assert_eq!(untouched.joint_symbols(), joint.joint_symbols());

        // each half-round must not decrease its own smoothed objective
        let point = ObliquePoint::from_joint(&joint).unwrap();
        let cfg12 = OptimizerConfig { criterion: Criterion::AltD12, ..conf.clone() };
        let before = smooth_objective(&point, &cfg12).unwrap();
        let (half, _) = optimize_point(&point, &cfg12).unwrap();
        let after = smooth_objective(&half, &cfg12).unwrap();
        assert!(after <= before + 1e-12);

        let out = alternating_optimize(&joint, &conf, 2).unwrap();
        assert_eq!(out.len(), joint.len());
    }

    #[test]
    fn feasibility_all_iterates_unit_norm() {
        let point = ObliquePoint::random(3, 2, 2, 12).unwrap();
        let mut conf = cfg(Criterion::DMin, 0.2, 31.6);
        conf.max_iters = 60;
        let (out, _) = optimize_point(&point, &conf).unwrap();
        for j in 0..4 {
            assert!((out.matrix().column(j).norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn surrogate_brackets_true_min_at_convergence() {
        let point = ObliquePoint::random(4, 2, 2, 13).unwrap();
        let mut conf = cfg(Criterion::DMin, 0.25, 10.0);
        conf.max_iters = 200;
        let (out, _) = optimize_point(&point, &conf).unwrap();
        let eval = Evaluator::new(4, 2, 2, &conf).unwrap();
        let x = eval.scaled(out.matrix());
        let syms = eval.precompute(&x).unwrap();
        let fs = eval.all_f(&x, out.matrix(), &syms);
        let min_f = fs.iter().copied().fold(f64::INFINITY, f64::min);
        let g = smooth_objective(&out, &conf).unwrap();
        let gap = (-g) - min_f;
        assert!(gap <= 0.0 + 1e-12 || -gap <= conf.epsilon * (fs.len() as f64).ln() + 1e-9);
        assert!((-g - min_f).abs() <= conf.epsilon * (fs.len() as f64).ln() + 1e-9);
    }

    #[test]
    fn criterion_consistency_with_metrics_module() {
        let point = ObliquePoint::random(5, 3, 3, 14).unwrap();
        let mut conf = cfg(Criterion::DMin, 0.2, 100.0);
        conf.max_iters = 100;
        let (joint, _) = optimize(&point, &conf).unwrap();
        let eval = Evaluator::new(5, 3, 3, &conf).unwrap();
        let out_point = ObliquePoint::from_joint(&joint).unwrap();
        let x = eval.scaled(out_point.matrix());
        let syms = eval.precompute(&x).unwrap();
        let fs = eval.all_f(&x, out_point.matrix(), &syms);
        let min_f = fs.iter().copied().fold(f64::INFINITY, f64::min);
        let (dmin, _) = crate::metrics::d_min(&joint).unwrap();
        assert_relative_eq!(min_f, dmin, max_relative = 1e-9);
        // the optimization round trip preserves the Grassmannian scaling
        assert!(joint.user1().grassmannian_defect() <= 1e-8);
        assert!(joint.user2().grassmannian_defect() <= 1e-8);
        assert!(joint.user1().is_grassmannian());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let point = ObliquePoint::random(3, 2, 1, 15).unwrap();
        let mut conf = cfg(Criterion::DMin, 0.0, 1.0);
        assert!(smooth_objective(&point, &conf).is_err());
        conf.epsilon = 0.1;
        conf.armijo_c = 1.5;
        assert!(optimize_point(&point, &conf).is_err());
        // non-unit columns rejected at the point boundary
        let mut c = CMat::zeros(3, 2);
        c[(0, 0)] = Complex::new(2.0, 0.0);
        c[(1, 1)] = Complex::new(1.0, 0.0);
        assert!(matches!(ObliquePoint::new(c, 1, 1), Err(Error::Invariant(_))));
    }
}
