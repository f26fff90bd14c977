//! Pilot-based baseline: orthogonal time pilots followed by QAM data slots,
//! decoded either by exhaustive non-coherent ML over the induced codebook or
//! by the systematic MMSE estimate/equalize/demap receiver.
//!
//! Layout for single-antenna users: slot 1 carries user 1's pilot, slot 2
//! user 2's pilot (the other user stays silent), slots 3..T carry QAM data.
//! Pilot and data slots all carry energy `PT/(T-1)` per user on average, so
//! a block's expected energy is `PT`.

use nalgebra::Complex;

use crate::constellation::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{C64, CMat};

/// Largest per-slot constellation: 1024-QAM.
pub const MAX_BITS_PER_SLOT: u32 = 10;
/// Exhaustive-ML guard: the induced joint codebook may not exceed `2^20`.
pub const MAX_ML_JOINT_BITS: u32 = 20;

/// Gray-mapped rectangular QAM with unit average energy; `points[v]` is the
/// point labeled by bit pattern `v`.
#[derive(Debug, Clone)]
pub struct QamTable {
    bits: u32,
    points: Vec<C64>,
    i_levels: u32,
    q_levels: u32,
    scale: f64,
}

fn gray(k: u32) -> u32 {
    k ^ (k >> 1)
}

impl QamTable {
    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 || bits > MAX_BITS_PER_SLOT {
            return Err(Error::Config(format!(
                "QAM size 2^{bits} unsupported (1..={MAX_BITS_PER_SLOT} bits)"
            )));
        }
        let bi = bits.div_ceil(2);
        let bq = bits / 2;
        let i_levels = 1u32 << bi;
        let q_levels = 1u32 << bq;
        let energy = |m: u32| (m as f64 * m as f64 - 1.0) / 3.0;
        let scale = (energy(i_levels) + energy(q_levels)).sqrt();
        let level = |k: u32, m: u32| (2.0 * k as f64 - (m as f64 - 1.0)) / scale;
        let mut points = vec![Complex::new(0.0, 0.0); 1 << bits];
        for ki in 0..i_levels {
            for kq in 0..q_levels {
                let label = (gray(ki) << bq) | gray(kq);
                points[label as usize] = Complex::new(level(ki, i_levels), level(kq, q_levels));
            }
        }
        Ok(Self { bits, points, i_levels, q_levels, scale })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn point(&self, label: u32) -> C64 {
        self.points[label as usize]
    }

    /// Bit pattern of the nearest constellation point.
    pub fn demap(&self, z: C64) -> u32 {
        let bq = self.bits / 2;
        let snap = |coord: f64, m: u32| -> u32 {
            let k = ((coord * self.scale + (m as f64 - 1.0)) / 2.0).round();
            (k.max(0.0) as u32).min(m - 1)
        };
        (gray(snap(z.re, self.i_levels)) << bq) | gray(snap(z.im, self.q_levels))
    }
}

/// Pilot/data slot structure of one coherence block for both users.
#[derive(Debug, Clone)]
pub struct PilotLayout {
    t: usize,
    bits: u32,
    /// Per-data-slot constellations; `None` marks a filler slot (0 bits).
    slots: Vec<Option<QamTable>>,
    /// Per-user slot amplitude `sqrt(P_k T / (T-1))`.
    amps: [f64; 2],
}

impl PilotLayout {
    pub fn new(sys: &SystemConfig, bits: u32) -> Result<Self> {
        if sys.m1 != 1 || sys.m2 != 1 {
            return Err(Error::Config("pilot scheme requires M1 = M2 = 1".into()));
        }
        if sys.t < 3 {
            return Err(Error::Config("pilot scheme requires T >= 3".into()));
        }
        if bits == 0 {
            return Err(Error::Config("pilot scheme requires B >= 1 data bit".into()));
        }
        let data_slots = (sys.t - 2) as u32;
        if bits > data_slots * MAX_BITS_PER_SLOT {
            return Err(Error::Config(format!(
                "B = {bits} bits do not fit into {data_slots} data slots at up to 1024-QAM"
            )));
        }
        // even split, larger constellations in earlier slots
        let base = bits / data_slots;
        let rem = bits % data_slots;
        let mut slots = Vec::with_capacity(data_slots as usize);
        for d in 0..data_slots {
            let b = base + u32::from(d < rem);
            slots.push(if b == 0 { None } else { Some(QamTable::new(b)?) });
        }
        let amp = |p: f64| (p * sys.t as f64 / (sys.t as f64 - 1.0)).sqrt();
        Ok(Self {
            t: sys.t,
            bits,
            slots,
            amps: [amp(sys.p1), amp(sys.p2)],
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Bit widths of the data slots, in slot order.
    pub fn slot_bits(&self) -> Vec<u32> {
        self.slots.iter().map(|s| s.as_ref().map_or(0, |q| q.bits())).collect()
    }

    /// One user's `T x 1` block for data index `v` (0-based user).
    pub fn encode_user(&self, user: usize, v: u32) -> CMat {
        debug_assert!(user < 2);
        debug_assert!(v < (1u32 << self.bits) || self.bits == 32);
        let amp = self.amps[user];
        let mut x = CMat::zeros(self.t, 1);
        x[(user, 0)] = Complex::new(amp, 0.0);
        let mut remaining = self.bits;
        for (d, slot) in self.slots.iter().enumerate() {
            let point = match slot {
                Some(qam) => {
                    remaining -= qam.bits();
                    let label = (v >> remaining) & ((1u32 << qam.bits()) - 1);
                    qam.point(label)
                }
                // 0-bit filler slot carries the fixed unit symbol
                None => Complex::new(1.0, 0.0),
            };
            x[(2 + d, 0)] = point * Complex::new(amp, 0.0);
        }
        x
    }

    /// Joint `T x 2` block for the two users' data indices.
    pub fn encode_joint(&self, b1: u32, b2: u32) -> CMat {
        let mut x = CMat::zeros(self.t, 2);
        x.set_column(0, &self.encode_user(0, b1).column(0));
        x.set_column(1, &self.encode_user(1, b2).column(0));
        x
    }

    /// Systematic receiver: per-user scalar MMSE channel estimates from the
    /// pilot slots, a per-data-slot two-user linear MMSE equalizer, and
    /// nearest-point demapping.
    pub fn mmse_detect(&self, y: &CMat) -> (u32, u32) {
        debug_assert_eq!(y.nrows(), self.t);
        let n = y.ncols();
        // h_hat_k[r] = p_k * y[k, r] / (p_k^2 + 1)
        let mut h_hat = CMat::zeros(n, 2);
        for user in 0..2 {
            let p = self.amps[user];
            let shrink = p / (p * p + 1.0);
            for r in 0..n {
                h_hat[(r, user)] = y[(user, r)] * Complex::new(shrink, 0.0);
            }
        }
        // effective per-slot mixing matrix: columns a_k * h_hat_k
        let mut g = CMat::zeros(n, 2);
        for user in 0..2 {
            let a = Complex::new(self.amps[user], 0.0);
            for r in 0..n {
                g[(r, user)] = a * h_hat[(r, user)];
            }
        }
        // (G^H G + I)^{-1} G^H, formed once per block (2x2 system)
        let gh_g = g.adjoint() * &g;
        let mut a = gh_g;
        a[(0, 0)] += Complex::new(1.0, 0.0);
        a[(1, 1)] += Complex::new(1.0, 0.0);
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        let inv = CMat::from_row_slice(
            2,
            2,
            &[a[(1, 1)] / det, -a[(0, 1)] / det, -a[(1, 0)] / det, a[(0, 0)] / det],
        );
        let equalizer = inv * g.adjoint();

        let mut decided = [0u32; 2];
        let mut remaining = self.bits;
        for (d, slot) in self.slots.iter().enumerate() {
            let Some(qam) = slot else { continue };
            remaining -= qam.bits();
            let y_slot = y.row(2 + d).transpose();
            let s_hat = &equalizer * y_slot;
            for user in 0..2 {
                let label = qam.demap(s_hat[(user, 0)]);
                decided[user] |= label << remaining;
            }
        }
        (decided[0], decided[1])
    }
}

/// Exhaustive non-coherent ML detection over the joint codebook induced by the
/// pilot layout: all `2^{2B}` joint blocks treated as non-coherent symbols.
pub struct PilotMlDetector {
    detector: super::MlDetector,
    bits: u32,
}

impl PilotMlDetector {
    pub fn new(layout: &PilotLayout) -> Result<Self> {
        if 2 * layout.bits() > MAX_ML_JOINT_BITS {
            return Err(Error::Config(format!(
                "pilot-ML joint codebook 2^{} exceeds the 2^{MAX_ML_JOINT_BITS} scan guard",
                2 * layout.bits()
            )));
        }
        let size = 1u32 << layout.bits();
        let mut symbols = Vec::with_capacity((size as usize) * (size as usize));
        let user1: Vec<CMat> = (0..size).map(|v| layout.encode_user(0, v)).collect();
        let user2: Vec<CMat> = (0..size).map(|v| layout.encode_user(1, v)).collect();
        for x1 in &user1 {
            for x2 in &user2 {
                let mut x = CMat::zeros(layout.t(), 2);
                x.set_column(0, &x1.column(0));
                x.set_column(1, &x2.column(0));
                symbols.push(x);
            }
        }
        Ok(Self { detector: super::MlDetector::from_symbols(&symbols)?, bits: layout.bits() })
    }

    /// Decided per-user data indices.
    pub fn detect(&self, y: &CMat) -> (u32, u32) {
        let idx = self.detector.detect(y) as u32;
        self.split(idx)
    }

    /// Batched form of [`detect`](Self::detect); see
    /// [`MlDetector::detect_many`](super::MlDetector::detect_many).
    pub fn detect_many(&self, batch: &CMat, cols_per_block: usize) -> Vec<(u32, u32)> {
        self.detector
            .detect_many(batch, cols_per_block)
            .into_iter()
            .map(|idx| self.split(idx as u32))
            .collect()
    }

    fn split(&self, idx: u32) -> (u32, u32) {
        (idx >> self.bits, idx & ((1u32 << self.bits) - 1))
    }
}

/// One-shot wrappers for the two pilot decoders.
pub fn pilot_ml_detect(y: &CMat, layout: &PilotLayout) -> Result<(u32, u32)> {
    Ok(PilotMlDetector::new(layout)?.detect(y))
}

pub fn pilot_mmse_detect(y: &CMat, layout: &PilotLayout) -> (u32, u32) {
    layout.mmse_detect(y)
}
