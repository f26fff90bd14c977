//! Small dense complex linear algebra helpers.
//!
//! Everything here operates on `T x ...` matrices with `T <= 16` or so, which
//! is why plain dense factorizations are used throughout. Resolvents
//! `(I + x x^H)^{-1}` are always applied through a Cholesky factor; explicit
//! inverses are reserved for test oracles.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn czero() -> C64 {
    Complex::new(0.0, 0.0)
}

pub fn cidentity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `I + x x^H` for a `T x M` signal matrix `x`.
pub fn resolvent_matrix(x: &CMat) -> CMat {
    let t = x.nrows();
    let mut s = CMat::identity(t, t);
    s.gemm(Complex::new(1.0, 0.0), x, &x.adjoint(), Complex::new(1.0, 0.0));
    s
}

/// Cholesky factor of a Hermitian positive-definite matrix, with the pieces
/// the rest of the crate keeps asking for (log-determinant, half solves).
#[derive(Debug, Clone)]
pub struct HermChol {
    l: CMat,
    /// Reciprocals of the (real, positive) diagonal pivots.
    inv_diag: Vec<C64>,
    ln_det: f64,
}

impl HermChol {
    pub fn new(mat: CMat) -> Result<Self> {
        let n = mat.nrows();
        if n != mat.ncols() {
            return Err(Error::Dimension(format!(
                "expected square matrix, got {}x{}",
                n,
                mat.ncols()
            )));
        }
        let chol = nalgebra::linalg::Cholesky::new(mat)
            .ok_or_else(|| Error::LinAlg("matrix is not positive definite".into()))?;
        let l = chol.l();
        // nalgebra's complex Cholesky happily takes square roots of negative
        // diagonals; a valid HPD factor has strictly positive real pivots
        for i in 0..n {
            let d = l[(i, i)];
            if !(d.re > 0.0) || !d.re.is_finite() || d.im.abs() > 1e-12 * d.re.abs() {
                return Err(Error::LinAlg("matrix is not positive definite".into()));
            }
        }
        let ln_det = 2.0 * (0..n).map(|i| l[(i, i)].re.ln()).sum::<f64>();
        let inv_diag = (0..n).map(|i| Complex::new(1.0, 0.0) / l[(i, i)]).collect();
        Ok(Self { l, inv_diag, ln_det })
    }

    /// Factor of `I + x x^H`.
    pub fn of_resolvent(x: &CMat) -> Result<Self> {
        Self::new(resolvent_matrix(x))
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn ln_det(&self) -> f64 {
        self.ln_det
    }

    /// `A^{-1} b` via forward/backward substitution.
    pub fn solve_mat(&self, b: &CMat) -> CMat {
        let mut y = self.l.solve_lower_triangular(b).expect("nonsingular factor");
        y = self.l.ad_solve_lower_triangular(&y).expect("nonsingular factor");
        y
    }

    pub fn solve_vec(&self, b: &CVec) -> CVec {
        let y = self.l.solve_lower_triangular(b).expect("nonsingular factor");
        self.l.ad_solve_lower_triangular(&y).expect("nonsingular factor")
    }

    /// `L^{-1} b`; useful because `tr(b^H A^{-1} b) = ||L^{-1} b||_F^2`.
    pub fn half_solve(&self, b: &CMat) -> CMat {
        self.l.solve_lower_triangular(b).expect("nonsingular factor")
    }

    /// In-place `b <- L^{-1} b` (forward substitution on raw slices; this is
    /// the innermost kernel of the pair scans).
    #[inline]
    pub fn half_solve_vec_mut(&self, b: &mut CVec) {
        let n = self.l.nrows();
        debug_assert_eq!(b.len(), n);
        let l = self.l.as_slice(); // column-major
        let bs = b.as_mut_slice();
        for j in 0..n {
            let xj = bs[j] * self.inv_diag[j];
            bs[j] = xj;
            let col = &l[j * n..(j + 1) * n];
            for i in (j + 1)..n {
                bs[i] -= col[i] * xj;
            }
        }
    }

    /// In-place `b <- A^{-1} b` = `L^{-H} L^{-1} b`.
    #[inline]
    pub fn solve_vec_mut(&self, b: &mut CVec) {
        self.half_solve_vec_mut(b);
        let n = self.l.nrows();
        let l = self.l.as_slice();
        let bs = b.as_mut_slice();
        for j in (0..n).rev() {
            let col = &l[j * n..(j + 1) * n];
            let mut s = bs[j];
            for i in (j + 1)..n {
                s -= col[i].conj() * bs[i];
            }
            bs[j] = s * self.inv_diag[j].conj();
        }
    }

    /// `tr(A^{-1})`, computed as `||L^{-1}||_F^2`.
    pub fn trace_inverse(&self) -> f64 {
        let n = self.dim();
        let inv_l = self.half_solve(&cidentity(n));
        inv_l.norm_squared()
    }

    /// `tr(A^{-1} b b^H) = ||L^{-1} b||_F^2` (real and nonnegative).
    pub fn quad_trace(&self, b: &CMat) -> f64 {
        self.half_solve(b).norm_squared()
    }

    /// Consumes self, returning the lower triangular factor.
    pub fn take_factor(self) -> CMat {
        self.l
    }
}

/// Eigenvalues (ascending) and matching eigenvectors of a Hermitian matrix.
pub fn herm_eigen(mat: &CMat) -> (Vec<f64>, CMat) {
    let n = mat.nrows();
    let se = nalgebra::linalg::SymmetricEigen::new(mat.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &se.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn herm_eigenvalues(mat: &CMat) -> Vec<f64> {
    let se = nalgebra::linalg::SymmetricEigen::new(mat.clone());
    let mut vals: Vec<f64> = se.eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Hermitian square root of a positive semidefinite matrix.
pub fn herm_sqrt(mat: &CMat) -> CMat {
    let (vals, vecs) = herm_eigen(mat);
    apply_spectral(&vecs, &vals, |v| v.max(0.0).sqrt())
}

/// Hermitian inverse square root; errors if the matrix is not positive definite.
pub fn herm_inv_sqrt(mat: &CMat) -> Result<CMat> {
    let (vals, vecs) = herm_eigen(mat);
    let max = vals.last().copied().unwrap_or(0.0);
    if vals.iter().any(|&v| v <= 0.0 || v <= 1e-14 * max) {
        return Err(Error::LinAlg(
            "matrix is not positive definite (inverse square root)".into(),
        ));
    }
    Ok(apply_spectral(&vecs, &vals, |v| 1.0 / v.sqrt()))
}

fn apply_spectral(vecs: &CMat, vals: &[f64], f: impl Fn(f64) -> f64) -> CMat {
    let n = vecs.nrows();
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let fv = Complex::new(f(v), 0.0);
        for i in 0..n {
            scaled[(i, j)] *= fv;
        }
    }
    &scaled * vecs.adjoint()
}

/// Numerically re-symmetrize `(m + m^H)/2`.
pub fn hermitianize(mat: &CMat) -> CMat {
    (mat + mat.adjoint()).scale(0.5)
}

/// One draw of a standard circularly-symmetric complex Gaussian CN(0, 1).
pub fn standard_complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Matrix with i.i.d. CN(0, 1) entries, filled column-major.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = standard_complex_gaussian(rng);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_hpd(n: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = complex_gaussian_matrix(n, n, &mut rng);
        &a * a.adjoint() + cidentity(n).scale(0.5)
    }

    #[test]
    fn cholesky_solve_matches_explicit_inverse() {
        let s = random_hpd(6, 1);
        let chol = HermChol::new(s.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = complex_gaussian_matrix(6, 3, &mut rng);
        let x = chol.solve_mat(&b);
        let x_ref = s.clone().try_inverse().unwrap() * &b;
        assert_relative_eq!((x - x_ref).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn ln_det_and_trace_inverse_match_eigenvalues() {
        let s = random_hpd(5, 3);
        let chol = HermChol::new(s.clone()).unwrap();
        let eigs = herm_eigenvalues(&s);
        let ln_det: f64 = eigs.iter().map(|v| v.ln()).sum();
        let tr_inv: f64 = eigs.iter().map(|v| 1.0 / v).sum();
        assert_relative_eq!(chol.ln_det(), ln_det, max_relative = 1e-11);
        assert_relative_eq!(chol.trace_inverse(), tr_inv, max_relative = 1e-11);
    }

    #[test]
    fn in_place_solves_match_generic_path() {
        let s = random_hpd(7, 9);
        let chol = HermChol::new(s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10 {
            let b = CVec::from_iterator(7, (0..7).map(|_| standard_complex_gaussian(&mut rng)));
            let full = chol.solve_vec(&b);
            let mut fast = b.clone();
            chol.solve_vec_mut(&mut fast);
            assert_relative_eq!((&full - &fast).norm(), 0.0, epsilon = 1e-12);

            let half = chol.half_solve(&CMat::from_column_slice(7, 1, b.as_slice()));
            let mut fast_half = b.clone();
            chol.half_solve_vec_mut(&mut fast_half);
            assert_relative_eq!(
                (CVec::from_column_slice(half.as_slice()) - fast_half).norm(),
                0.0,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn herm_sqrt_squares_back() {
        let s = random_hpd(5, 4);
        let r = herm_sqrt(&s);
        assert_relative_eq!((&r * &r - &s).norm(), 0.0, epsilon = 1e-10);
        let inv_r = herm_inv_sqrt(&s).unwrap();
        assert_relative_eq!((&r * &inv_r - cidentity(5)).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn non_pd_matrix_is_rejected() {
        let mut s = cidentity(3);
        s[(0, 0)] = Complex::new(-1.0, 0.0);
        assert!(HermChol::new(s.clone()).is_err());
        assert!(herm_inv_sqrt(&s).is_err());
    }

    #[test]
    fn complex_gaussian_has_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += standard_complex_gaussian(&mut rng).norm_sqr();
        }
        assert_relative_eq!(acc / n as f64, 1.0, epsilon = 0.01);
    }
}
