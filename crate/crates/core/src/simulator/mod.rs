//! Monte-Carlo block-fading channel, exact ML joint detection, PEP/SER
//! estimation, and the pilot-based baseline.
//!
//! All randomness is drawn from counter-based ChaCha streams keyed by
//! `(seed, snr index, block index)`, so results are bit-identical regardless
//! of how blocks are distributed across workers.

pub mod pilot;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constellation::{JointCodebook, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian_matrix, resolvent_matrix, CMat};

/// Which transmission/detection scheme a simulation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Exact ML detection over a joint codebook.
    JointMl,
    /// Orthogonal pilots + QAM data, exhaustive ML over the induced codebook.
    PilotMl,
    /// Orthogonal pilots + QAM data, MMSE estimation/equalization/demapping.
    PilotMmse,
}

/// Monte-Carlo run settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub snr_grid_db: Vec<f64>,
    pub num_blocks: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_blocks < 1 {
            return Err(Error::Config("num_blocks must be >= 1".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("snr grid is empty".into()));
        }
        Ok(())
    }
}

/// Error rates at one SNR grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerPoint {
    pub snr_db: f64,
    pub joint_ser: f64,
    pub user1_ser: f64,
    pub user2_ser: f64,
    pub pep_worst: Option<f64>,
    pub blocks: usize,
    /// Binomial standard error of `joint_ser`.
    pub std_err: f64,
}

/// One row per SNR grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerResult {
    pub scheme: Scheme,
    pub points: Vec<SerPoint>,
}

fn block_rng(seed: u64, snr_idx: usize, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((snr_idx as u64) << 32) | block as u64);
    rng
}

/// Fixed-size block ranges for batched detection; chunking does not affect
/// results (per-block RNG streams, integer error counts).
fn block_chunks(total: usize) -> Vec<std::ops::Range<usize>> {
    const BLOCK_CHUNK: usize = 64;
    (0..total)
        .step_by(BLOCK_CHUNK)
        .map(|lo| lo..(lo + BLOCK_CHUNK).min(total))
        .collect()
}

/// One received block `Y = x H^T + Z` with i.i.d. CN(0,1) fading rows and
/// unit-variance noise. The fading is drawn first, then the noise.
pub fn sample_block<R: Rng + ?Sized>(x: &CMat, sys: &SystemConfig, rng: &mut R) -> CMat {
    debug_assert_eq!(x.nrows(), sys.t);
    let h_t = complex_gaussian_matrix(x.ncols(), sys.n, rng);
    let z = complex_gaussian_matrix(sys.t, sys.n, rng);
    x * h_t + z
}

/// ML detector with per-symbol resolvent factors and log-determinants
/// precomputed once per codebook.
pub struct MlDetector {
    /// Lower Cholesky factors of `I + x x^H`.
    factors: Vec<CMat>,
    ln_dets: Vec<f64>,
    t: usize,
}

impl MlDetector {
    pub fn new(joint: &JointCodebook) -> Result<Self> {
        Self::from_symbols(joint.joint_symbols())
    }

    pub fn from_symbols(symbols: &[CMat]) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::Size("detector needs at least one symbol".into()));
        }
        let t = symbols[0].nrows();
        let mut factors = Vec::with_capacity(symbols.len());
        let mut ln_dets = Vec::with_capacity(symbols.len());
        for x in symbols {
            let chol = crate::linalg::HermChol::new(resolvent_matrix(x))?;
            ln_dets.push(chol.ln_det());
            factors.push(chol.take_factor());
        }
        Ok(Self { factors, ln_dets, t })
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// `argmax -tr((I + x x^H)^{-1} Y Y^H) - N log det(I + x x^H)`;
    /// ties broken by the lowest index. The trace term is evaluated as
    /// `||L^{-1} Y||_F^2` through an in-place triangular solve.
    pub fn detect(&self, y: &CMat) -> usize {
        self.detect_many(y, y.ncols())[0]
    }

    /// Detects a batch of blocks laid side by side: `batch` is
    /// `T x (blocks * cols_per_block)`. One triangular solve per symbol
    /// covers the whole batch.
    pub fn detect_many(&self, batch: &CMat, cols_per_block: usize) -> Vec<usize> {
        debug_assert_eq!(batch.nrows(), self.t);
        debug_assert_eq!(batch.ncols() % cols_per_block, 0);
        let blocks = batch.ncols() / cols_per_block;
        let n = cols_per_block as f64;
        let span = cols_per_block * self.t;
        let mut best = vec![(f64::NEG_INFINITY, 0usize); blocks];
        let mut z = CMat::zeros(self.t, batch.ncols());
        for (idx, (l, ln_det)) in self.factors.iter().zip(&self.ln_dets).enumerate() {
            z.copy_from(batch);
            let ok = l.solve_lower_triangular_mut(&mut z);
            debug_assert!(ok);
            let penalty = n * ln_det;
            let zs = z.as_slice();
            for (b, slot) in best.iter_mut().enumerate() {
                let mut quad = 0.0;
                for v in &zs[b * span..(b + 1) * span] {
                    quad += v.norm_sqr();
                }
                let score = -quad - penalty;
                if score > slot.0 {
                    *slot = (score, idx);
                }
            }
        }
        best.into_iter().map(|(_, i)| i).collect()
    }
}

/// Convenience wrapper constructing the detector on the fly.
pub fn ml_detect(y: &CMat, joint: &JointCodebook) -> Result<usize> {
    Ok(MlDetector::new(joint)?.detect(y))
}

/// Monte-Carlo estimate of `P(L(x -> x') <= 0)` under hypothesis `x`.
pub fn estimate_pep(
    x: &CMat,
    xp: &CMat,
    sys: &SystemConfig,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials < 1 {
        return Err(Error::Size("trials must be >= 1".into()));
    }
    let chol_x = crate::linalg::HermChol::of_resolvent(x)?;
    let chol_xp = crate::linalg::HermChol::of_resolvent(xp)?;
    let n = sys.n as f64;
    let errors: usize = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = block_rng(seed, 0, trial);
            let y = sample_block(x, sys, &mut rng);
            let l = crate::metrics::pllr_with(&chol_x, &chol_xp, &y, n);
            usize::from(l <= 0.0)
        })
        .sum();
    Ok(errors as f64 / trials as f64)
}

/// SER of exact joint-ML detection over a codebook, one row per SNR point.
/// Constellation directions are fixed; the `sqrt(PT)` scaling is re-applied
/// at every grid point.
pub fn simulate_ser(joint: &JointCodebook, sys: &SystemConfig, sim: &SimConfig) -> Result<SerResult> {
    sim.validate()?;
    if joint.t() != sys.t {
        return Err(Error::Dimension(format!(
            "codebook T = {} but system T = {}",
            joint.t(),
            sys.t
        )));
    }
    if joint.user1().m() != sys.m1 || joint.user2().m() != sys.m2 {
        return Err(Error::Dimension("codebook antenna counts disagree with system".into()));
    }
    let mut points = Vec::with_capacity(sim.snr_grid_db.len());
    for (snr_idx, &snr_db) in sim.snr_grid_db.iter().enumerate() {
        let p = 10f64.powf(snr_db / 10.0);
        let scaled = joint.with_power(p)?;
        let sys_p = sys.at_power(p);
        let detector = MlDetector::new(&scaled)?;
        let symbols = scaled.joint_symbols();
        let len = scaled.len();
        let t = sys.t;
        let n = sys.n;
        let (joint_err, u1_err, u2_err) = block_chunks(sim.num_blocks)
            .into_par_iter()
            .map(|range| {
                let chunk = range.len();
                let mut sents = Vec::with_capacity(chunk);
                let mut batch = CMat::zeros(t, chunk * n);
                for (k, block) in range.clone().enumerate() {
                    let mut rng = block_rng(sim.seed, snr_idx, block);
                    let sent = rng.gen_range(0..len);
                    let y = sample_block(&symbols[sent], &sys_p, &mut rng);
                    batch.view_mut((0, k * n), (t, n)).copy_from(&y);
                    sents.push(sent);
                }
                let decided = detector.detect_many(&batch, n);
                let mut errs = (0usize, 0usize, 0usize);
                for (&sent, &dec) in sents.iter().zip(&decided) {
                    let (s1, s2) = scaled.split_index(sent);
                    let (d1, d2) = scaled.split_index(dec);
                    errs.0 += usize::from(dec != sent);
                    errs.1 += usize::from(d1 != s1);
                    errs.2 += usize::from(d2 != s2);
                }
                errs
            })
            .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
        points.push(make_point(snr_db, joint_err, u1_err, u2_err, sim.num_blocks));
    }
    Ok(SerResult { scheme: Scheme::JointMl, points })
}

/// SER of the pilot-based scheme (`B` data bits per user per block), decoded
/// per `sim.scheme` with the exhaustive ML or the MMSE systematic receiver.
pub fn simulate_pilot_ser(sys: &SystemConfig, bits: u32, sim: &SimConfig) -> Result<SerResult> {
    sim.validate()?;
    let scheme = sim.scheme;
    if scheme == Scheme::JointMl {
        return Err(Error::Config(
            "pilot simulation requires scheme pilot-ml or pilot-mmse".into(),
        ));
    }
    let mut points = Vec::with_capacity(sim.snr_grid_db.len());
    for (snr_idx, &snr_db) in sim.snr_grid_db.iter().enumerate() {
        let p = 10f64.powf(snr_db / 10.0);
        let sys_p = sys.at_power(p);
        let layout = pilot::PilotLayout::new(&sys_p, bits)?;
        let ml = match scheme {
            Scheme::PilotMl => Some(pilot::PilotMlDetector::new(&layout)?),
            _ => None,
        };
        let size = 1u64 << bits;
        let t = sys.t;
        let n = sys.n;
        let (joint_err, u1_err, u2_err) = block_chunks(sim.num_blocks)
            .into_par_iter()
            .map(|range| {
                let chunk = range.len();
                let mut sents = Vec::with_capacity(chunk);
                let mut batch = CMat::zeros(t, chunk * n);
                for (k, block) in range.clone().enumerate() {
                    let mut rng = block_rng(sim.seed, snr_idx, block);
                    let b1 = rng.gen_range(0..size) as u32;
                    let b2 = rng.gen_range(0..size) as u32;
                    let x = layout.encode_joint(b1, b2);
                    let y = sample_block(&x, &sys_p, &mut rng);
                    batch.view_mut((0, k * n), (t, n)).copy_from(&y);
                    sents.push((b1, b2));
                }
                let decided: Vec<(u32, u32)> = match &ml {
                    Some(det) => det.detect_many(&batch, n),
                    None => (0..chunk)
                        .map(|k| {
                            let y = batch.view((0, k * n), (t, n)).into_owned();
                            layout.mmse_detect(&y)
                        })
                        .collect(),
                };
                let mut errs = (0usize, 0usize, 0usize);
                for (&(b1, b2), &(d1, d2)) in sents.iter().zip(&decided) {
                    errs.0 += usize::from(d1 != b1 || d2 != b2);
                    errs.1 += usize::from(d1 != b1);
                    errs.2 += usize::from(d2 != b2);
                }
                errs
            })
            .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
        points.push(make_point(snr_db, joint_err, u1_err, u2_err, sim.num_blocks));
    }
    Ok(SerResult { scheme, points })
}

fn make_point(
    snr_db: f64,
    joint_err: usize,
    u1_err: usize,
    u2_err: usize,
    blocks: usize,
) -> SerPoint {
    let joint_ser = joint_err as f64 / blocks as f64;
    SerPoint {
        snr_db,
        joint_ser,
        user1_ser: u1_err as f64 / blocks as f64,
        user2_ser: u2_err as f64 / blocks as f64,
        pep_worst: None,
        blocks,
        std_err: (joint_ser * (1.0 - joint_ser) / blocks as f64).sqrt(),
    }
}
