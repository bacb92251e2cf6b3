//! Sensing-matrix construction for every scheme of a sweep.

use rand::Rng;

use crate::error::{Error, Result};
use crate::hybrid_inf::{design_hybrid_inf, InfDesignOptions};
use crate::hybrid_low::{design_hybrid_low, gd_digital_block, residual_target, GdOptions, LowDesignOptions};
use crate::linalg::{complex_gaussian_matrix, frob_sq, CMat, C64};
use crate::metrics;
use crate::sensing::{HybridSensingMatrix, PhaseSet, Side, TrainingBeams, UnconstrainedSensing};

use super::config::Scheme;

/// Either a hybrid design or unconstrained reference beams.
#[derive(Debug, Clone, PartialEq)]
pub enum Beams {
    Hybrid(HybridSensingMatrix),
    Unconstrained(UnconstrainedSensing),
}

impl TrainingBeams for Beams {
    fn beams(&self) -> CMat {
        match self {
            Beams::Hybrid(h) => h.beams(),
            Beams::Unconstrained(u) => u.beams(),
        }
    }

    fn streams_per_block(&self) -> usize {
        match self {
            Beams::Hybrid(h) => h.streams_per_block(),
            Beams::Unconstrained(u) => u.streams_per_block(),
        }
    }

    fn side(&self) -> Side {
        match self {
            Beams::Hybrid(h) => h.side,
            Beams::Unconstrained(u) => u.side,
        }
    }
}

/// Hardware dimensions of one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SideDims {
    pub num_blocks: usize,
    pub rf_chains: usize,
    pub streams: usize,
}

#[derive(Debug, Clone)]
pub struct SideDesign {
    pub beams: Beams,
    /// Objective before power normalization.
    pub design_objective: f64,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct DesignSettings {
    pub inf: InfDesignOptions,
    pub low: LowDesignOptions,
    pub gd: GdOptions,
}

/// Analog phases uniform over the alphabet and a single block-wise pass of
/// digital gradient descent from Gaussian blocks, then power normalization.
pub fn random_baseline<R: Rng + ?Sized>(
    a: &CMat,
    dims: SideDims,
    phase_set: PhaseSet,
    side: Side,
    gd: &GdOptions,
    rng: &mut R,
) -> Result<HybridSensingMatrix> {
    let mut m = random_baseline_unscaled(a, dims, phase_set, side, gd, rng)?;
    m.normalize_power()?;
    Ok(m)
}

fn random_baseline_unscaled<R: Rng + ?Sized>(
    a: &CMat,
    dims: SideDims,
    phase_set: PhaseSet,
    side: Side,
    gd: &GdOptions,
    rng: &mut R,
) -> Result<HybridSensingMatrix> {
    let Some(alphabet) = phase_set.alphabet() else {
        return Err(Error::Config("the random baseline needs a finite phase set".into()));
    };
    let analog = CMat::from_fn(a.nrows(), dims.rf_chains * dims.num_blocks, |_, _| {
        alphabet[rng.random_range(0..alphabet.len())]
    });
    let digital = (0..dims.num_blocks).map(|_| complex_gaussian_matrix(dims.rf_chains, dims.streams, 1.0, rng)).collect();
    let mut m = HybridSensingMatrix::new(analog, digital, phase_set, side)?;
    for q in 0..dims.num_blocks {
        let e = residual_target(a, &m, q)?.matrix;
        let a_e = m.analog_block(q).adjoint() * a;
        m.digital_blocks[q] = gd_digital_block(&m.digital_blocks[q], &a_e, &e, gd)?.w;
    }
    Ok(m)
}

/// I.i.d. `CN(0, 1)` beams scaled to `||B||_F^2 = T`.
pub fn gaussian_reference<R: Rng + ?Sized>(n: usize, dims: SideDims, side: Side, rng: &mut R) -> UnconstrainedSensing {
    let t = dims.num_blocks * dims.streams;
    let mut beams = complex_gaussian_matrix(n, t, 1.0, rng);
    let scale = (t as f64 / frob_sq(&beams)).sqrt();
    beams *= C64::new(scale, 0.0);
    UnconstrainedSensing { beams, streams_per_block: dims.streams, side }
}

pub fn design_side<R: Rng + ?Sized>(
    scheme: Scheme,
    phase_set: PhaseSet,
    a: &CMat,
    dims: SideDims,
    side: Side,
    settings: &DesignSettings,
    rng: &mut R,
) -> Result<SideDesign> {
    let SideDims { num_blocks, rf_chains, streams } = dims;
    match scheme {
        Scheme::ProposedInf => {
            let out = design_hybrid_inf(a, num_blocks, rf_chains, streams, side, &settings.inf, rng)?;
            Ok(SideDesign {
                beams: Beams::Hybrid(out.matrix),
                design_objective: out.design_objective,
                objective_trace: out.objective_trace,
            })
        }
        Scheme::ProposedLow => {
            let out = design_hybrid_low(a, num_blocks, rf_chains, streams, phase_set, side, &settings.low, rng)?;
            Ok(SideDesign {
                beams: Beams::Hybrid(out.matrix),
                design_objective: out.design_objective,
                objective_trace: out.objective_trace,
            })
        }
        Scheme::RandomLow => {
            let mut m = random_baseline_unscaled(a, dims, phase_set, side, &settings.gd, rng)?;
            let value = m.gram_objective(a)?;
            m.normalize_power()?;
            Ok(SideDesign { beams: Beams::Hybrid(m), design_objective: value, objective_trace: vec![value] })
        }
        Scheme::GaussianReference => {
            let u = gaussian_reference(a.nrows(), dims, side, rng);
            let id = CMat::identity(u.beams.ncols(), u.beams.ncols());
            let value = metrics::gram_objective(a, &u.beams, &id)?;
            Ok(SideDesign { beams: Beams::Unconstrained(u), design_objective: value, objective_trace: vec![value] })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_dictionary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DIMS: SideDims = SideDims { num_blocks: 2, rf_chains: 4, streams: 4 };

    #[test]
    fn random_baseline_is_in_alphabet_and_seeded() {
        let a = build_dictionary(8, 12, 0.5).unwrap().matrix;
        let set = PhaseSet::with_bits(2).unwrap();
        let m1 = random_baseline(&a, DIMS, set, Side::Receiver, &GdOptions::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let m2 = random_baseline(&a, DIMS, set, Side::Receiver, &GdOptions::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(m1.analog_feasible(1e-12));
        assert!((m1.total_power() - 8.0).abs() < 1e-9);
        assert_ne!(m1.analog, m2.analog);
        assert!(random_baseline(&a, DIMS, PhaseSet::INFINITE, Side::Receiver, &GdOptions::default(), &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn gaussian_reference_power() {
        let u = gaussian_reference(8, DIMS, Side::Transmitter, &mut ChaCha8Rng::seed_from_u64(3));
        assert!((frob_sq(&u.beams) - 8.0).abs() < 1e-10);
        assert_eq!(u.beams.shape(), (8, 8));
    }
}
