//! Hybrid analog-digital training matrices and their phase alphabets.

use std::f64::consts::TAU;
use std::fmt;

use crate::error::{shape_check, Error, Result};
use crate::linalg::{block_diag, frob_sq, CMat, C64};
use crate::metrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Transmitter,
    Receiver,
}

/// Feasible analog phases: the `2^B` roots of unity, or the whole circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhaseSet {
    bits: Option<u32>,
}

impl PhaseSet {
    pub const INFINITE: PhaseSet = PhaseSet { bits: None };

    pub fn with_bits(bits: u32) -> Result<Self> {
        if bits == 0 || bits > 16 {
            return Err(Error::Config(format!("phase-shifter resolution must be 1..=16 bits, got {bits}")));
        }
        Ok(Self { bits: Some(bits) })
    }

    pub fn bits(&self) -> Option<u32> {
        self.bits
    }

    pub fn is_finite(&self) -> bool {
        self.bits.is_some()
    }

    pub fn size(&self) -> Option<usize> {
        self.bits.map(|b| 1usize << b)
    }

    /// Alphabet ordered by phase in `[0, 2pi)`.
    pub fn alphabet(&self) -> Option<Vec<C64>> {
        self.size().map(|n| (0..n).map(|k| Self::point(k, n)).collect())
    }

    fn point(k: usize, n: usize) -> C64 {
        C64::from_polar(1.0, TAU * k as f64 / n as f64)
    }

    /// Nearest alphabet member; exact midpoints go to the smaller phase.
    /// The continuous set returns `z / |z|`.
    pub fn nearest(&self, z: C64) -> C64 {
        let Some(n) = self.size() else {
            let r = z.norm();
            return if r > 0.0 { z / r } else { C64::new(1.0, 0.0) };
        };
        let phase = z.arg().rem_euclid(TAU);
        let pos = phase * n as f64 / TAU;
        let lower = pos.floor();
        let frac = pos - lower;
        let lower = lower as usize % n;
        let upper = (lower + 1) % n;
        let k = if frac < 0.5 {
            lower
        } else if frac > 0.5 {
            upper
        } else {
            lower.min(upper)
        };
        Self::point(k, n)
    }

    pub fn contains(&self, z: C64, tol: f64) -> bool {
        if (z.norm() - 1.0).abs() > tol {
            return false;
        }
        match self.size() {
            None => true,
            Some(_) => (self.nearest(z) - z).norm() <= tol,
        }
    }
}

impl fmt::Display for PhaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bits {
            Some(b) => write!(f, "{b}"),
            None => write!(f, "inf"),
        }
    }
}

/// Anything that can act as a set of training beams: an `N x T` matrix whose
/// columns are grouped into blocks of `streams_per_block` beams per slot.
pub trait TrainingBeams {
    fn beams(&self) -> CMat;
    fn streams_per_block(&self) -> usize;
    fn side(&self) -> Side;

    fn num_antennas(&self) -> usize {
        self.beams().nrows()
    }

    /// Per-side equivalent dictionary: `B^H A` on receive, `B^T A^*` on
    /// transmit, where `B` is [`TrainingBeams::beams`].
    fn equivalent_factor(&self, a: &CMat) -> Result<CMat> {
        let beams = self.beams();
        let id = CMat::identity(beams.ncols(), beams.ncols());
        match self.side() {
            Side::Receiver => metrics::receive_factor(&beams, &id, a),
            Side::Transmitter => metrics::transmit_factor(&beams, &id, a),
        }
    }
}

/// Constant-modulus analog matrix plus block-diagonal digital matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridSensingMatrix {
    /// `N x (N_RF * num_blocks)`.
    pub analog: CMat,
    /// `num_blocks` matrices of size `N_RF x N_s`.
    pub digital_blocks: Vec<CMat>,
    pub phase_set: PhaseSet,
    pub side: Side,
}

impl HybridSensingMatrix {
    pub fn new(analog: CMat, digital_blocks: Vec<CMat>, phase_set: PhaseSet, side: Side) -> Result<Self> {
        let m = Self { analog, digital_blocks, phase_set, side };
        m.check_shapes()?;
        Ok(m)
    }

    fn check_shapes(&self) -> Result<()> {
        let nb = self.digital_blocks.len();
        shape_check(nb > 0, || "at least one digital block is required".into())?;
        let (rf, ns) = self.digital_blocks[0].shape();
        shape_check(self.digital_blocks.iter().all(|b| b.shape() == (rf, ns)), || {
            "digital blocks must share one shape".into()
        })?;
        shape_check(self.analog.ncols() == rf * nb, || {
            format!("analog matrix has {} columns, expected {} x {}", self.analog.ncols(), rf, nb)
        })
    }

    pub fn num_blocks(&self) -> usize {
        self.digital_blocks.len()
    }

    pub fn rf_chains(&self) -> usize {
        self.digital_blocks[0].nrows()
    }

    pub fn streams(&self) -> usize {
        self.digital_blocks[0].ncols()
    }

    pub fn num_beams(&self) -> usize {
        self.streams() * self.num_blocks()
    }

    /// Assembled `M x T` block-diagonal digital matrix.
    pub fn digital(&self) -> CMat {
        block_diag(&self.digital_blocks)
    }

    pub fn analog_block(&self, q: usize) -> CMat {
        let rf = self.rf_chains();
        self.analog.columns(q * rf, rf).into_owned()
    }

    pub fn set_analog_block(&mut self, q: usize, block: &CMat) {
        let rf = self.rf_chains();
        self.analog.columns_mut(q * rf, rf).copy_from(block);
    }

    /// `|| A^H W_RF W_BB W_BB^H W_RF^H A - I ||_F^2` for dictionary `a`.
    pub fn gram_objective(&self, a: &CMat) -> Result<f64> {
        metrics::gram_objective(a, &self.analog, &self.digital())
    }

    pub fn total_power(&self) -> f64 {
        frob_sq(&(&self.analog * self.digital()))
    }

    /// Scales the digital part so that `||W_RF W_BB||_F^2` equals the beam count.
    pub fn normalize_power(&mut self) -> Result<()> {
        let power = self.total_power();
        if !(power > 0.0 && power.is_finite()) {
            return Err(Error::Numeric(format!("cannot normalize a hybrid matrix with power {power}")));
        }
        let scale = (self.num_beams() as f64 / power).sqrt();
        for b in &mut self.digital_blocks {
            *b *= C64::new(scale, 0.0);
        }
        Ok(())
    }

    /// Checks unit modulus (and alphabet membership when the resolution is finite).
    pub fn analog_feasible(&self, tol: f64) -> bool {
        self.analog.iter().all(|&z| self.phase_set.contains(z, tol))
    }
}

impl TrainingBeams for HybridSensingMatrix {
    fn beams(&self) -> CMat {
        &self.analog * self.digital()
    }

    fn streams_per_block(&self) -> usize {
        self.streams()
    }

    fn side(&self) -> Side {
        self.side
    }
}

/// Training beams with no hardware constraint, used as a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedSensing {
    pub beams: CMat,
    pub streams_per_block: usize,
    pub side: Side,
}

impl TrainingBeams for UnconstrainedSensing {
    fn beams(&self) -> CMat {
        self.beams.clone()
    }

    fn streams_per_block(&self) -> usize {
        self.streams_per_block
    }

    fn side(&self) -> Side {
        self.side
    }
}
