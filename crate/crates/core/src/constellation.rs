//! Single-user and joint constellations: validation, generation, partitioning,
//! the correlated-fading transform, and the codebook file format.

use std::path::Path;
use std::sync::OnceLock;

use nalgebra::Complex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian_matrix, herm_inv_sqrt, CMat};

/// Frobenius tolerance for `X^H X = (PT/M) I` when constructing symbols.
pub const GRASSMANNIAN_BUILD_TOL: f64 = 1e-10;
/// Frobenius tolerance when validating existing symbols (e.g. loaded files).
pub const GRASSMANNIAN_VALID_TOL: f64 = 1e-8;

/// Channel dimensions and per-user transmit powers (linear scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Coherence block length (channel uses).
    pub t: usize,
    /// Transmit antennas of user 1.
    pub m1: usize,
    /// Transmit antennas of user 2.
    pub m2: usize,
    /// Receive antennas.
    pub n: usize,
    /// SNR of user 1, linear.
    pub p1: f64,
    /// SNR of user 2, linear.
    pub p2: f64,
}

impl SystemConfig {
    pub fn new(t: usize, m1: usize, m2: usize, n: usize, p1: f64, p2: f64) -> Result<Self> {
        if t < 2 {
            return Err(Error::Dimension(format!("block length T = {t} must be >= 2")));
        }
        if m1 < 1 || m2 < 1 || n < 1 {
            return Err(Error::Dimension(
                "antenna counts M1, M2, N must be >= 1".into(),
            ));
        }
        if t < m1 + m2 {
            return Err(Error::Dimension(format!(
                "T = {t} must be >= M1 + M2 = {} for Grassmannian signaling",
                m1 + m2
            )));
        }
        if !(p1 > 0.0) || !(p2 > 0.0) {
            return Err(Error::Domain("powers P1, P2 must be > 0".into()));
        }
        Ok(Self { t, m1, m2, n, p1, p2 })
    }

    /// Symmetric two-user system: common antenna count and power.
    pub fn symmetric(t: usize, m: usize, n: usize, p: f64) -> Result<Self> {
        Self::new(t, m, m, n, p, p)
    }

    /// `P = max(P1, P2)`; derived, never stored.
    pub fn power(&self) -> f64 {
        self.p1.max(self.p2)
    }

    /// Both users rescaled to power `p`.
    pub fn at_power(&self, p: f64) -> Self {
        Self { p1: p, p2: p, ..*self }
    }
}

/// One user's constellation: `T x M` complex symbol matrices in insertion
/// order, plus the power used for their scaling.
#[derive(Debug, Clone)]
pub struct Codebook {
    symbols: Vec<CMat>,
    power: f64,
    grassmannian: bool,
}

impl Codebook {
    /// Wraps a list of equally-shaped symbols; the Grassmannian flag is
    /// derived by checking `X^H X = (PT/M) I` at the validation tolerance.
    pub fn new(symbols: Vec<CMat>, power: f64) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::Size("codebook must contain at least one symbol".into()));
        }
        if !(power > 0.0) {
            return Err(Error::Domain("codebook power must be > 0".into()));
        }
        let (t, m) = (symbols[0].nrows(), symbols[0].ncols());
        if t == 0 || m == 0 {
            return Err(Error::Dimension("symbols must be non-empty matrices".into()));
        }
        if symbols.iter().any(|s| s.nrows() != t || s.ncols() != m) {
            return Err(Error::Dimension("all symbols must share the same T x M shape".into()));
        }
        let grassmannian =
            max_grassmannian_defect(&symbols, power) <= GRASSMANNIAN_VALID_TOL;
        Ok(Self { symbols, power, grassmannian })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn t(&self) -> usize {
        self.symbols[0].nrows()
    }

    pub fn m(&self) -> usize {
        self.symbols[0].ncols()
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn is_grassmannian(&self) -> bool {
        self.grassmannian
    }

    pub fn symbols(&self) -> &[CMat] {
        &self.symbols
    }

    pub fn symbol(&self, idx: usize) -> &CMat {
        &self.symbols[idx]
    }

    /// Worst `||X^H X - (PT/M) I||_F` over the symbols.
    pub fn grassmannian_defect(&self) -> f64 {
        max_grassmannian_defect(&self.symbols, self.power)
    }

    /// Same directions rescaled to a new power.
    pub fn with_power(&self, power: f64) -> Result<Codebook> {
        if !(power > 0.0) {
            return Err(Error::Domain("codebook power must be > 0".into()));
        }
        let scale = Complex::new((power / self.power).sqrt(), 0.0);
        let symbols = self.symbols.iter().map(|s| s.scale_complex(scale)).collect();
        Codebook::new(symbols, power)
    }
}

trait ScaleComplex {
    fn scale_complex(&self, s: Complex<f64>) -> CMat;
}

impl ScaleComplex for CMat {
    fn scale_complex(&self, s: Complex<f64>) -> CMat {
        self.map(|v| v * s)
    }
}

fn max_grassmannian_defect(symbols: &[CMat], power: f64) -> f64 {
    let t = symbols[0].nrows();
    let m = symbols[0].ncols();
    let target = CMat::identity(m, m).map(|v| v * Complex::new(power * t as f64 / m as f64, 0.0));
    symbols
        .iter()
        .map(|x| (x.adjoint() * x - &target).norm())
        .fold(0.0, f64::max)
}

/// Cartesian product of two per-user codebooks. Joint symbol `i * |X2| + l`
/// is the column concatenation `[x1_i  x2_l]`.
#[derive(Debug)]
pub struct JointCodebook {
    user1: Codebook,
    user2: Codebook,
    joint: OnceLock<Vec<CMat>>,
}

impl Clone for JointCodebook {
    fn clone(&self) -> Self {
        Self {
            user1: self.user1.clone(),
            user2: self.user2.clone(),
            joint: OnceLock::new(),
        }
    }
}

impl JointCodebook {
    pub fn new(user1: Codebook, user2: Codebook) -> Result<Self> {
        if user1.t() != user2.t() {
            return Err(Error::Dimension(format!(
                "user codebooks disagree on T: {} vs {}",
                user1.t(),
                user2.t()
            )));
        }
        Ok(Self { user1, user2, joint: OnceLock::new() })
    }

    pub fn user1(&self) -> &Codebook {
        &self.user1
    }

    pub fn user2(&self) -> &Codebook {
        &self.user2
    }

    pub fn t(&self) -> usize {
        self.user1.t()
    }

    pub fn len(&self) -> usize {
        self.user1.len() * self.user2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn joint_index(&self, i: usize, l: usize) -> usize {
        i * self.user2.len() + l
    }

    /// Inverse of [`joint_index`](Self::joint_index).
    pub fn split_index(&self, idx: usize) -> (usize, usize) {
        (idx / self.user2.len(), idx % self.user2.len())
    }

    /// The concatenated `T x (M1+M2)` symbols, materialized on first use.
    pub fn joint_symbols(&self) -> &[CMat] {
        self.joint.get_or_init(|| {
            let t = self.t();
            let (m1, m2) = (self.user1.m(), self.user2.m());
            let mut all = Vec::with_capacity(self.len());
            for x1 in self.user1.symbols() {
                for x2 in self.user2.symbols() {
                    let mut x = CMat::zeros(t, m1 + m2);
                    x.view_mut((0, 0), (t, m1)).copy_from(x1);
                    x.view_mut((0, m1), (t, m2)).copy_from(x2);
                    all.push(x);
                }
            }
            all
        })
    }

    pub fn joint_symbol(&self, idx: usize) -> &CMat {
        &self.joint_symbols()[idx]
    }

    /// Both users' directions rescaled to a common power.
    pub fn with_power(&self, power: f64) -> Result<JointCodebook> {
        JointCodebook::new(self.user1.with_power(power)?, self.user2.with_power(power)?)
    }
}

/// `count` Q-factors of i.i.d. complex Gaussian `T x M` draws, scaled by
/// `sqrt(power * T / M)`. Deterministic given the seed.
pub fn random_grassmannian(
    t: usize,
    m: usize,
    count: usize,
    power: f64,
    seed: u64,
) -> Result<Codebook> {
    if m < 1 || t < m {
        return Err(Error::Dimension(format!(
            "need T >= M >= 1, got T = {t}, M = {m}"
        )));
    }
    if count < 1 {
        return Err(Error::Size("count must be >= 1".into()));
    }
    if !(power > 0.0) {
        return Err(Error::Domain("power must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = Complex::new((power * t as f64 / m as f64).sqrt(), 0.0);
    let mut symbols = Vec::with_capacity(count);
    for _ in 0..count {
        let g = complex_gaussian_matrix(t, m, &mut rng);
        let q = g.qr().q();
        symbols.push(q.map(|v| v * scale));
    }
    Codebook::new(symbols, power)
}

/// All unordered pairs of distinct joint symbols whose outer products
/// `x x^H` coincide to within `tol` in Frobenius norm. An empty result means
/// the codebook is identifiable at that tolerance.
pub fn check_identifiability(joint: &JointCodebook, tol: f64) -> Vec<(usize, usize)> {
    let symbols = joint.joint_symbols();
    let grams: Vec<CMat> = symbols.iter().map(|x| x * x.adjoint()).collect();
    let mut violations = Vec::new();
    for i in 0..grams.len() {
        for j in (i + 1)..grams.len() {
            if (&grams[i] - &grams[j]).norm() <= tol {
                violations.push((i, j));
            }
        }
    }
    violations
}

/// How a single-user codebook is split into two disjoint halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionStrategy {
    /// Uniform seeded shuffle split.
    Random,
    /// Pairwise-swap local search from the random split (first-improvement
    /// sweeps, capped at [`GREEDY_SWAP_MAX_SWEEPS`]).
    GreedySwap,
}

/// Sweep cap for the greedy-swap partition search.
pub const GREEDY_SWAP_MAX_SWEEPS: usize = 50;

/// Splits `base` into two disjoint codebooks of sizes `ceil(n/2)` and
/// `floor(n/2)` whose union is `base`.
///
/// The search objective is the maximum normalized squared cross-correlation
/// over the three pair families {intra-1, intra-2, cross}. Because those
/// families partition the set of all symbol pairs of `base`, that maximum is
/// the same for every split; ties are therefore broken by the largest
/// *within-half* correlation, which is what a swap can actually move across
/// the cut.
pub fn partition(
    base: &Codebook,
    strategy: PartitionStrategy,
    seed: u64,
) -> Result<JointCodebook> {
    let n = base.len();
    if n < 2 {
        return Err(Error::Size(format!(
            "partition needs at least 2 symbols, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let half = n.div_ceil(2);
    let mut side1: Vec<usize> = order[..half].to_vec();
    let mut side2: Vec<usize> = order[half..].to_vec();
    side1.sort_unstable();
    side2.sort_unstable();

    if strategy == PartitionStrategy::GreedySwap {
        let gram = normalized_corr_sq(base);
        greedy_swap(&gram, &mut side1, &mut side2);
        side1.sort_unstable();
        side2.sort_unstable();
    }

    let pick = |ids: &[usize]| -> Result<Codebook> {
        Codebook::new(
            ids.iter().map(|&i| base.symbol(i).clone()).collect(),
            base.power(),
        )
    };
    JointCodebook::new(pick(&side1)?, pick(&side2)?)
}

/// `||x_a^H x_b||_F^2 / (PT)^2` for all symbol pairs of a codebook.
fn normalized_corr_sq(base: &Codebook) -> Vec<Vec<f64>> {
    let n = base.len();
    let pt = base.power() * base.t() as f64;
    let mut g = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in (a + 1)..n {
            let v = (base.symbol(a).adjoint() * base.symbol(b)).norm_squared() / (pt * pt);
            g[a][b] = v;
            g[b][a] = v;
        }
    }
    g
}

fn intra_max(gram: &[Vec<f64>], side1: &[usize], side2: &[usize]) -> f64 {
    let mut best = 0.0f64;
    for side in [side1, side2] {
        for (k, &a) in side.iter().enumerate() {
            for &b in &side[k + 1..] {
                best = best.max(gram[a][b]);
            }
        }
    }
    best
}

fn greedy_swap(gram: &[Vec<f64>], side1: &mut Vec<usize>, side2: &mut Vec<usize>) {
    let mut current = intra_max(gram, side1, side2);
    for _ in 0..GREEDY_SWAP_MAX_SWEEPS {
        let mut improved = false;
        'sweep: for i in 0..side1.len() {
            for j in 0..side2.len() {
                std::mem::swap(&mut side1[i], &mut side2[j]);
                let candidate = intra_max(gram, side1, side2);
                if candidate < current {
                    current = candidate;
                    improved = true;
                    continue 'sweep;
                }
                std::mem::swap(&mut side1[i], &mut side2[j]);
            }
        }
        if !improved {
            break;
        }
    }
}

/// Right-multiplies every symbol by `R^{-1/2}` (Remark-2 transform for
/// per-user antenna correlation `R`).
///
/// With `renormalize` set, each transformed symbol is rescaled to Frobenius
/// norm `sqrt(PT)` so the original power constraint still holds; by default
/// the symbols are left as-is and the power field is recomputed from the
/// transformed norms.
pub fn correlation_transform(
    codebook: &Codebook,
    r: &CMat,
    renormalize: bool,
) -> Result<Codebook> {
    let m = codebook.m();
    if r.nrows() != m || r.ncols() != m {
        return Err(Error::Dimension(format!(
            "correlation matrix must be {m}x{m}, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    if (r - r.adjoint()).norm() > 1e-10 * r.norm().max(1.0) {
        return Err(Error::LinAlg("correlation matrix must be Hermitian".into()));
    }
    let r_inv_sqrt = herm_inv_sqrt(r)?;
    let t = codebook.t() as f64;
    let mut symbols: Vec<CMat> = codebook.symbols().iter().map(|x| x * &r_inv_sqrt).collect();
    let power = if renormalize {
        let target = (codebook.power() * t).sqrt();
        for s in symbols.iter_mut() {
            let norm = s.norm();
            if norm == 0.0 {
                return Err(Error::LinAlg("transformed symbol collapsed to zero".into()));
            }
            *s = s.map(|v| v * Complex::new(target / norm, 0.0));
        }
        codebook.power()
    } else {
        symbols.iter().map(|s| s.norm_squared()).sum::<f64>() / (symbols.len() as f64 * t)
    };
    Codebook::new(symbols, power)
}

// ---------------------------------------------------------------------------
// Codebook file format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "M")]
    m: usize,
    power: f64,
    /// One entry per symbol: `T*M` `[re, im]` pairs, row-major.
    symbols: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
struct JointCodebookFile {
    user1: CodebookFile,
    user2: CodebookFile,
}

fn to_file(cb: &Codebook) -> CodebookFile {
    let (t, m) = (cb.t(), cb.m());
    let symbols = cb
        .symbols()
        .iter()
        .map(|x| {
            let mut flat = Vec::with_capacity(t * m);
            for i in 0..t {
                for j in 0..m {
                    flat.push([x[(i, j)].re, x[(i, j)].im]);
                }
            }
            flat
        })
        .collect();
    CodebookFile { t, m, power: cb.power(), symbols }
}

fn from_file(f: CodebookFile) -> Result<Codebook> {
    let mut symbols = Vec::with_capacity(f.symbols.len());
    for flat in &f.symbols {
        if flat.len() != f.t * f.m {
            return Err(Error::Io(format!(
                "symbol has {} entries, expected T*M = {}",
                flat.len(),
                f.t * f.m
            )));
        }
        let mut x = CMat::zeros(f.t, f.m);
        for i in 0..f.t {
            for j in 0..f.m {
                let [re, im] = flat[i * f.m + j];
                x[(i, j)] = Complex::new(re, im);
            }
        }
        symbols.push(x);
    }
    Codebook::new(symbols, f.power)
}

pub fn codebook_to_json(cb: &Codebook) -> Result<String> {
    Ok(serde_json::to_string_pretty(&to_file(cb))?)
}

pub fn codebook_from_json(json: &str) -> Result<Codebook> {
    from_file(serde_json::from_str(json)?)
}

pub fn joint_to_json(joint: &JointCodebook) -> Result<String> {
    Ok(serde_json::to_string_pretty(&JointCodebookFile {
        user1: to_file(joint.user1()),
        user2: to_file(joint.user2()),
    })?)
}

pub fn joint_from_json(json: &str) -> Result<JointCodebook> {
    let f: JointCodebookFile = serde_json::from_str(json)?;
    JointCodebook::new(from_file(f.user1)?, from_file(f.user2)?)
}

pub fn save_codebook(cb: &Codebook, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, codebook_to_json(cb)?)?;
    Ok(())
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    codebook_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_joint(joint: &JointCodebook, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, joint_to_json(joint)?)?;
    Ok(())
}

pub fn load_joint(path: impl AsRef<Path>) -> Result<JointCodebook> {
    joint_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Complex;

    #[test]
    fn grassmannian_scaling_single_vector() {
        let cb = random_grassmannian(2, 1, 1, 1.0, 17).unwrap();
        // scaling forces ||v||^2 = PT = 2
        assert_relative_eq!(cb.symbol(0).norm_squared(), 2.0, epsilon = 1e-12);
        assert!(cb.is_grassmannian());
    }

    #[test]
    fn grassmannian_scaling_multi_antenna() {
        let cb = random_grassmannian(4, 2, 3, 2.0, 5).unwrap();
        for x in cb.symbols() {
            let g = x.adjoint() * x;
            let target = CMat::identity(2, 2).map(|v| v * Complex::new(4.0, 0.0));
            assert!((g - target).norm() <= 1e-10);
        }
        assert!(cb.grassmannian_defect() <= GRASSMANNIAN_BUILD_TOL);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = random_grassmannian(5, 2, 4, 3.0, 99).unwrap();
        let b = random_grassmannian(5, 2, 4, 3.0, 99).unwrap();
        for (x, y) in a.symbols().iter().zip(b.symbols()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn invalid_dimensions_are_rejected() {
        assert!(matches!(
            random_grassmannian(2, 3, 1, 1.0, 0),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(random_grassmannian(2, 1, 0, 1.0, 0), Err(Error::Size(_))));
    }

    #[test]
    fn identifiability_flags_duplicate_and_phase_pairs() {
        // user 2 holds two copies of the same symbol -> the two joint symbols
        // built from the same x1 share x x^H.
        let x1 = random_grassmannian(4, 1, 1, 1.0, 1).unwrap();
        let dup = x1.symbol(0).clone();
        let user2 = Codebook::new(vec![dup.clone(), dup], 1.0).unwrap();
        let joint = JointCodebook::new(x1.clone(), user2).unwrap();
        let violations = check_identifiability(&joint, 1e-9);
        assert_eq!(violations, vec![(0, 1)]);

        // common phase rotation leaves x x^H untouched
        let base = random_grassmannian(4, 1, 2, 1.0, 2).unwrap();
        let rotated = base
            .symbol(1)
            .map(|v| v * Complex::from_polar(1.0, 0.7));
        let user1 = Codebook::new(vec![base.symbol(1).clone(), rotated], 1.0).unwrap();
        let user2 = Codebook::new(vec![base.symbol(0).clone()], 1.0).unwrap();
        let joint = JointCodebook::new(user1, user2).unwrap();
        assert_eq!(check_identifiability(&joint, 1e-9), vec![(0, 1)]);
    }

    #[test]
    fn random_grassmannian_joint_is_identifiable() {
        let user1 = random_grassmannian(4, 1, 4, 1.0, 10).unwrap();
        let user2 = random_grassmannian(4, 1, 4, 1.0, 11).unwrap();
        let joint = JointCodebook::new(user1, user2).unwrap();
        assert!(check_identifiability(&joint, 1e-9).is_empty());
    }

    #[test]
    fn joint_symbols_concatenate_bit_exactly() {
        let user1 = random_grassmannian(5, 2, 3, 1.5, 7).unwrap();
        let user2 = random_grassmannian(5, 1, 2, 0.5, 8).unwrap();
        let joint = JointCodebook::new(user1.clone(), user2.clone()).unwrap();
        assert_eq!(joint.len(), 6);
        for idx in 0..joint.len() {
            let (i, l) = joint.split_index(idx);
            assert_eq!(joint.joint_index(i, l), idx);
            let x = joint.joint_symbol(idx);
            assert_eq!(x.view((0, 0), (5, 2)), user1.symbol(i).view((0, 0), (5, 2)));
            assert_eq!(x.view((0, 2), (5, 1)), user2.symbol(l).view((0, 0), (5, 1)));
        }
    }

    #[test]
    fn partition_of_two_symbols() {
        let base = random_grassmannian(3, 1, 2, 1.0, 3).unwrap();
        let joint = partition(&base, PartitionStrategy::Random, 0).unwrap();
        assert_eq!(joint.user1().len(), 1);
        assert_eq!(joint.user2().len(), 1);
        assert!(matches!(
            partition(&Codebook::new(vec![base.symbol(0).clone()], 1.0).unwrap(),
                PartitionStrategy::Random, 0),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn partition_preserves_multiset_and_sizes() {
        let base = random_grassmannian(4, 1, 9, 1.0, 13).unwrap();
        for strategy in [PartitionStrategy::Random, PartitionStrategy::GreedySwap] {
            let joint = partition(&base, strategy, 42).unwrap();
            assert_eq!(joint.user1().len(), 5);
            assert_eq!(joint.user2().len(), 4);
            let mut seen: Vec<Vec<(u64, u64)>> = joint
                .user1()
                .symbols()
                .iter()
                .chain(joint.user2().symbols())
                .map(|s| s.iter().map(|v| (v.re.to_bits(), v.im.to_bits())).collect())
                .collect();
            let mut expected: Vec<Vec<(u64, u64)>> = base
                .symbols()
                .iter()
                .map(|s| s.iter().map(|v| (v.re.to_bits(), v.im.to_bits())).collect())
                .collect();
            seen.sort();
            expected.sort();
            assert_eq!(seen, expected);
        }
    }

    #[test]
    fn greedy_swap_does_not_increase_intra_correlation() {
        let base = random_grassmannian(3, 1, 10, 1.0, 21).unwrap();
        let gram = normalized_corr_sq(&base);
        let random = partition(&base, PartitionStrategy::Random, 7).unwrap();
        let greedy = partition(&base, PartitionStrategy::GreedySwap, 7).unwrap();
        let ids = |j: &JointCodebook| -> (Vec<usize>, Vec<usize>) {
            let find = |s: &CMat| base.symbols().iter().position(|b| b == s).unwrap();
            (
                j.user1().symbols().iter().map(|s| find(s)).collect(),
                j.user2().symbols().iter().map(|s| find(s)).collect(),
            )
        };
        let (r1, r2) = ids(&random);
        let (g1, g2) = ids(&greedy);
        assert!(intra_max(&gram, &g1, &g2) <= intra_max(&gram, &r1, &r2));
    }

    #[test]
    fn correlation_transform_identity_is_bit_exact() {
        let cb = random_grassmannian(4, 2, 3, 2.0, 31).unwrap();
        let r = CMat::identity(2, 2);
        let out = correlation_transform(&cb, &r, false).unwrap();
        for (a, b) in cb.symbols().iter().zip(out.symbols()) {
            assert_eq!(a, b);
        }
        assert_relative_eq!(out.power(), cb.power(), max_relative = 1e-12);
    }

    #[test]
    fn correlation_transform_scalar_halves_norm() {
        let cb = random_grassmannian(4, 1, 3, 1.0, 32).unwrap();
        let r = CMat::identity(1, 1).map(|v| v * Complex::new(4.0, 0.0));
        let out = correlation_transform(&cb, &r, false).unwrap();
        for (a, b) in cb.symbols().iter().zip(out.symbols()) {
            assert_relative_eq!(b.norm(), a.norm() / 2.0, max_relative = 1e-12);
        }
        assert_relative_eq!(out.power(), cb.power() / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn correlation_transform_random_pd_consistency() {
        use crate::linalg::complex_gaussian_matrix;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        let a = complex_gaussian_matrix(2, 2, &mut rng);
        let r = &a * a.adjoint() + CMat::identity(2, 2).map(|v| v * Complex::new(0.3, 0.0));
        let r_inv_sqrt = herm_inv_sqrt(&r).unwrap();
        let cb = random_grassmannian(5, 2, 3, 1.0, 34).unwrap();
        let out = correlation_transform(&cb, &r, false).unwrap();
        for (x, y) in cb.symbols().iter().zip(out.symbols()) {
            let lhs = y.adjoint() * y;
            let rhs = &r_inv_sqrt * (x.adjoint() * x) * &r_inv_sqrt;
            assert!((lhs - rhs).norm() <= 1e-10);
        }
        // non-PD rejected
        let bad = &r - CMat::identity(2, 2).map(|v| v * Complex::new(1e3, 0.0));
        assert!(correlation_transform(&cb, &bad, false).is_err());
    }

    #[test]
    fn renormalized_transform_restores_symbol_energy() {
        let cb = random_grassmannian(4, 1, 3, 2.0, 35).unwrap();
        let r = CMat::identity(1, 1).map(|v| v * Complex::new(9.0, 0.0));
        let out = correlation_transform(&cb, &r, true).unwrap();
        for s in out.symbols() {
            assert_relative_eq!(s.norm_squared(), 2.0 * 4.0, max_relative = 1e-12);
        }
        assert_relative_eq!(out.power(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn codebook_json_round_trip_is_bit_exact() {
        let cb = random_grassmannian(5, 2, 3, 1.7, 40).unwrap();
        let back = codebook_from_json(&codebook_to_json(&cb).unwrap()).unwrap();
        assert_eq!(back.power(), cb.power());
        for (a, b) in cb.symbols().iter().zip(back.symbols()) {
            for (u, v) in a.iter().zip(b.iter()) {
                assert_eq!(u.re.to_bits(), v.re.to_bits());
                assert_eq!(u.im.to_bits(), v.im.to_bits());
            }
        }

        let joint = JointCodebook::new(
            random_grassmannian(5, 1, 2, 1.0, 41).unwrap(),
            random_grassmannian(5, 1, 3, 1.0, 42).unwrap(),
        )
        .unwrap();
        let back = joint_from_json(&joint_to_json(&joint).unwrap()).unwrap();
        assert_eq!(back.len(), joint.len());
        for (a, b) in joint.joint_symbols().iter().zip(back.joint_symbols()) {
            assert_eq!(a, b);
        }
    }
}
