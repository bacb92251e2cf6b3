//! Block-wise hybrid design for low-resolution phase shifters.
//!
//! Each visit to block `q` freezes the other blocks into the residual target
//! `E_q`, alternates digital gradient descent with continuous-phase manifold
//! CG, quantizes the analog block and re-fits its digital part. The block is
//! committed only if the global objective strictly decreases.

use rand::Rng;

use crate::error::{shape_check, Error, Result};
use crate::hybrid_inf::{AnalogCost, DesignOutcome};
use crate::linalg::{complex_gaussian_matrix, frob_sq, hermitian_defect, hermitian_part, trace, CMat, CVec, C64};
use crate::manifold::CgOptions;
use crate::sensing::{HybridSensingMatrix, PhaseSet, Side};

/// Hermitian `E_q` a single block has to match.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockResidualTarget {
    pub matrix: CMat,
}

/// `E_q = I - sum_{t != q} A^H W_RF,t W_BB,t W_BB,t^H W_RF,t^H A`, with `q` 0-based.
pub fn residual_target(a: &CMat, hybrid: &HybridSensingMatrix, skip_block: usize) -> Result<BlockResidualTarget> {
    let nb = hybrid.num_blocks();
    if skip_block >= nb {
        return Err(Error::IndexOutOfRange { index: skip_block, len: nb });
    }
    shape_check(a.nrows() == hybrid.analog.nrows(), || "dictionary rows differ from analog rows".into())?;
    let g = a.ncols();
    let mut e = CMat::identity(g, g);
    for t in (0..nb).filter(|&t| t != skip_block) {
        let s = a.adjoint() * hybrid.analog_block(t) * &hybrid.digital_blocks[t];
        e -= &s * s.adjoint();
    }
    Ok(BlockResidualTarget { matrix: hermitian_part(&e) })
}

/// `|| A_E^H W W^H A_E - E ||_F^2` with `A_E = W_RF,q^H A`.
pub fn block_objective(w: &CMat, a_e: &CMat, e: &CMat) -> f64 {
    let s = a_e.adjoint() * w;
    frob_sq(&(&s * s.adjoint() - e))
}

fn check_block_shapes(w: &CMat, a_e: &CMat, e: &CMat) -> Result<()> {
    shape_check(w.nrows() == a_e.nrows(), || {
        format!("digital block has {} rows, equivalent dictionary {}", w.nrows(), a_e.nrows())
    })?;
    shape_check(e.shape() == (a_e.ncols(), a_e.ncols()), || "target must be G x G".into())
}

/// `4 A_E (A_E^H W W^H A_E - E) A_E^H W`.
pub fn digital_gradient(w: &CMat, a_e: &CMat, e: &CMat) -> Result<CMat> {
    check_block_shapes(w, a_e, e)?;
    let s = a_e.adjoint() * w;
    let d = &s * s.adjoint() - e;
    Ok(a_e * d * a_e.adjoint() * w * C64::new(4.0, 0.0))
}

/// Intermediates of the stepsize derivative at the current `W`, with
/// `D = A_E^H W W^H A_E - E` and `P = W W^H`.
#[derive(Debug, Clone)]
pub struct GammaWorkspace {
    /// `A_E D A_E^H`.
    pub gamma1: CMat,
    /// `A_E^H Γ1 P Γ1 A_E`.
    pub gamma2: CMat,
    /// `Γ1 P + P Γ1`.
    pub gamma3: CMat,
    /// `A_E^H Γ1 P A_E`.
    pub gamma4: CMat,
    residual: CMat,
    spread: CMat,
}

impl GammaWorkspace {
    pub fn new(w: &CMat, a_e: &CMat, e: &CMat) -> Result<Self> {
        check_block_shapes(w, a_e, e)?;
        let p = w * w.adjoint();
        let residual = a_e.adjoint() * &p * a_e - e;
        let gamma1 = hermitian_part(&(a_e * &residual * a_e.adjoint()));
        let g1p = &gamma1 * &p;
        let gamma2 = hermitian_part(&(a_e.adjoint() * &g1p * &gamma1 * a_e));
        let gamma3 = hermitian_part(&(&g1p + &p * &gamma1));
        let gamma4 = a_e.adjoint() * &g1p * a_e;
        let spread = &gamma4 + gamma4.adjoint();
        Ok(Self { gamma1, gamma2, gamma3, gamma4, residual, spread })
    }

    pub fn max_hermitian_defect(&self) -> f64 {
        hermitian_defect(&self.gamma1).max(hermitian_defect(&self.gamma2)).max(hermitian_defect(&self.gamma3))
    }

    /// Coefficients `[c0, c1, c2, c3]` of `dJ/ds = c0 + c1 s + c2 s^2 + c3 s^3`
    /// along `W - s Γ1 W`.
    fn coefficients(&self) -> [f64; 4] {
        let (d, b, g2) = (&self.residual, &self.spread, &self.gamma2);
        let c0 = -2.0 * trace(&(d * b)).re;
        let c1 = 4.0 * trace(&(g2 * d)).re + 2.0 * trace(&(b * b)).re;
        let c2 = -6.0 * trace(&(b * g2)).re;
        let c3 = 4.0 * trace(&(g2 * g2)).re;
        [c0, c1, c2, c3]
    }
}

/// `d/dη || A_E^H W(η) W(η)^H A_E - E ||_F^2` for `W(η) = W - η ∇J(W)`, with
/// `∇J = 4 Γ1 W`. `workspace` must be built from the same `W`.
pub fn stepsize_derivative(eta: f64, workspace: &GammaWorkspace) -> f64 {
    let [c0, c1, c2, c3] = workspace.coefficients();
    let s = 4.0 * eta;
    4.0 * (c0 + s * (c1 + s * (c2 + s * c3)))
}

fn stepsize_curvature(eta: f64, workspace: &GammaWorkspace) -> f64 {
    let [_, c1, c2, c3] = workspace.coefficients();
    let s = 4.0 * eta;
    16.0 * (c1 + s * (2.0 * c2 + s * 3.0 * c3))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdOptions {
    /// Meta-step for the stepsize update `η <- η - γ dJ/dη`.
    pub gamma: f64,
    /// Starting stepsize; `None` picks the minimizer of the local quadratic model.
    pub initial_step: Option<f64>,
    pub max_iterations: usize,
    pub relative_tolerance: f64,
}

impl Default for GdOptions {
    fn default() -> Self {
        Self { gamma: 1e-3, initial_step: None, max_iterations: 300, relative_tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct GdOutcome {
    pub w: CMat,
    /// `J` at the start point followed by every accepted iterate.
    pub objective_trace: Vec<f64>,
}

impl GdOutcome {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial value")
    }
}

const MAX_HALVINGS: usize = 60;

/// Steepest descent on the digital block with an adaptively tuned stepsize.
pub fn gd_digital_block(w0: &CMat, a_e: &CMat, e: &CMat, opts: &GdOptions) -> Result<GdOutcome> {
    if let Some(step) = opts.initial_step {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Config(format!("initial stepsize must be positive, got {step}")));
        }
    }
    check_block_shapes(w0, a_e, e)?;
    let mut w = w0.clone();
    let mut j = block_objective(&w, a_e, e);
    let mut trace = vec![j];
    let mut eta = opts.initial_step;

    for _ in 0..opts.max_iterations {
        if j == 0.0 {
            break;
        }
        let ws = GammaWorkspace::new(&w, a_e, e)?;
        let grad = &ws.gamma1 * &w * C64::new(4.0, 0.0);
        if frob_sq(&grad) == 0.0 {
            break;
        }
        let mut step = match eta {
            Some(prev) => {
                let tuned = prev - opts.gamma * stepsize_derivative(prev, &ws);
                if tuned.is_finite() && tuned > 0.0 {
                    tuned.min(4.0 * prev)
                } else {
                    0.5 * prev
                }
            }
            None => {
                let slope = stepsize_derivative(0.0, &ws);
                let curv = stepsize_curvature(0.0, &ws);
                if curv > 0.0 {
                    -slope / curv
                } else {
                    1e-3
                }
            }
        };
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &w - &grad * C64::new(step, 0.0);
            let jc = block_objective(&candidate, a_e, e);
            if jc <= j {
                accepted = Some((candidate, jc));
                break;
            }
            step *= 0.5;
        }
        let Some((next, j_next)) = accepted else { break };
        eta = Some(step);
        let decrease = (j - j_next) / j;
        w = next;
        j = j_next;
        trace.push(j);
        if decrease < opts.relative_tolerance {
            break;
        }
    }
    Ok(GdOutcome { w, objective_trace: trace })
}

/// `4 vec[A (A^H X W W^H X^H A - E) A^H X W W^H]` for the analog block `X = invec(x)`.
pub fn egrad_analog_block(x: &CVec, w_bb: &CMat, a: &CMat, e: &CMat) -> Result<CVec> {
    shape_check(x.len() == a.nrows() * w_bb.nrows(), || {
        format!("analog vector has length {}, expected {} x {}", x.len(), a.nrows(), w_bb.nrows())
    })?;
    Ok(AnalogCost::new(a, w_bb, e.clone())?.egrad(x))
}

/// Nearest alphabet member per entry; the identity for continuous phases.
pub fn quantize_phases(m: &CMat, phase_set: PhaseSet) -> CMat {
    m.map(|z| phase_set.nearest(z))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowDesignOptions {
    pub gd: GdOptions,
    pub cg: CgOptions,
    pub max_inner_iterations: usize,
    pub inner_relative_tolerance: f64,
    /// Hard cap on block visits as a multiple of the block count.
    pub max_visit_rounds: usize,
    /// A commit needs a decrease larger than this fraction of the current objective.
    pub commit_relative_tolerance: f64,
}

impl Default for LowDesignOptions {
    fn default() -> Self {
        Self {
            gd: GdOptions::default(),
            cg: CgOptions { max_iterations: 200, ..CgOptions::default() },
            max_inner_iterations: 30,
            inner_relative_tolerance: 1e-6,
            max_visit_rounds: 50,
            commit_relative_tolerance: 1e-12,
        }
    }
}

/// One block visit: returns the quantized analog block and its re-fitted digital part.
fn optimize_block(
    a: &CMat,
    analog: &CMat,
    digital: &CMat,
    e: &CMat,
    phase_set: PhaseSet,
    opts: &LowDesignOptions,
) -> Result<(CMat, CMat)> {
    let mut x = analog.clone();
    let mut w = digital.clone();
    let mut previous = block_objective(&w, &(x.adjoint() * a), e);
    for _ in 0..opts.max_inner_iterations {
        w = gd_digital_block(&w, &(x.adjoint() * a), e, &opts.gd)?.w;
        let cost = AnalogCost::new(a, &w, e.clone())?;
        let (next, trace) = cost.minimize(&x, &opts.cg)?;
        x = next;
        let value = *trace.last().expect("non-empty trace");
        let decrease = (previous - value) / previous.abs().max(f64::MIN_POSITIVE);
        previous = value;
        if decrease < opts.inner_relative_tolerance {
            break;
        }
    }
    let xq = quantize_phases(&x, phase_set);
    let wq = gd_digital_block(&w, &(xq.adjoint() * a), e, &opts.gd)?.w;
    Ok((xq, wq))
}

/// Block-wise alternating design with a commit-or-rollback judgment per visit.
/// `objective_trace` of the outcome holds the initial objective followed by
/// the objective after every commit.
#[allow(clippy::too_many_arguments)]
pub fn design_hybrid_low<R: Rng + ?Sized>(
    a: &CMat,
    num_blocks: usize,
    rf_chains: usize,
    streams: usize,
    phase_set: PhaseSet,
    side: Side,
    opts: &LowDesignOptions,
    rng: &mut R,
) -> Result<DesignOutcome> {
    let Some(alphabet) = phase_set.alphabet() else {
        return Err(Error::Config("low-resolution design needs a finite phase set".into()));
    };
    if streams == 0 || streams > rf_chains {
        return Err(Error::Config(format!("need 1 <= N_s ({streams}) <= N_RF ({rf_chains})")));
    }
    if num_blocks == 0 {
        return Err(Error::Config("need at least one training block".into()));
    }
    let n = a.nrows();
    let analog = CMat::from_fn(n, rf_chains * num_blocks, |_, _| alphabet[rng.random_range(0..alphabet.len())]);
    let digital = (0..num_blocks).map(|_| complex_gaussian_matrix(rf_chains, streams, 1.0, rng)).collect();
    let mut state = HybridSensingMatrix::new(analog, digital, phase_set, side)?;
    let mut committed = state.gram_objective(a)?;
    let mut trace = vec![committed];

    let mut failures = 0;
    let mut q = 0;
    for _ in 0..opts.max_visit_rounds * num_blocks {
        if failures >= num_blocks || committed == 0.0 {
            break;
        }
        let e = residual_target(a, &state, q)?.matrix;
        let (xq, wq) = optimize_block(a, &state.analog_block(q), &state.digital_blocks[q], &e, phase_set, opts)?;
        let mut candidate = state.clone();
        candidate.set_analog_block(q, &xq);
        candidate.digital_blocks[q] = wq;
        let value = candidate.gram_objective(a)?;
        if value < committed * (1.0 - opts.commit_relative_tolerance) {
            state = candidate;
            committed = value;
            trace.push(value);
            failures = 0;
        } else {
            failures += 1;
        }
        q = (q + 1) % num_blocks;
    }

    let design_objective = committed;
    state.normalize_power()?;
    Ok(DesignOutcome { matrix: state, design_objective, objective_trace: trace })
}
