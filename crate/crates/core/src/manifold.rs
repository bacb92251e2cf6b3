//! Nonlinear conjugate gradient on the product of complex unit circles.
//!
//! A point is a complex vector with unit-modulus entries. Tangent vectors at
//! `x` satisfy `Re{x_i^* z_i} = 0`. Each iteration projects the Euclidean
//! gradient onto the tangent space, takes an Armijo step along the conjugate
//! direction, pulls the result back onto the manifold by entrywise
//! normalization, and transports the previous direction into the new
//! tangent space before mixing it in with a Polak-Ribière (PR+) weight.

use crate::error::{shape_check, Error, Result};
use crate::linalg::{real_inner, CVec, C64};

/// Largest tolerated `| |x_i| - 1 |` for a point on the manifold.
pub const MODULUS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CirclePoint(CVec);

impl CirclePoint {
    pub fn new(values: CVec) -> Result<Self> {
        let defect = modulus_defect(&values);
        if defect > MODULUS_TOLERANCE {
            return Err(Error::Contract(format!("entry modulus deviates from 1 by {defect:e}")));
        }
        Ok(Self(values))
    }

    /// Normalizes every entry to unit modulus.
    pub fn normalized(values: CVec) -> Result<Self> {
        let mut out = values;
        for (i, z) in out.iter_mut().enumerate() {
            let r = z.norm();
            if r == 0.0 || !r.is_finite() {
                return Err(Error::Numeric(format!("entry {i} cannot be normalized (modulus {r})")));
            }
            *z /= r;
        }
        Ok(Self(out))
    }

    pub fn values(&self) -> &CVec {
        &self.0
    }

    pub fn into_inner(self) -> CVec {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn modulus_defect(values: &CVec) -> f64 {
    values.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max)
}

/// Removes the radial component: `g - Re{g ∘ x^*} ∘ x`.
pub fn project_tangent(x: &CirclePoint, g: &CVec) -> Result<CVec> {
    shape_check(x.len() == g.len(), || format!("point has length {}, vector {}", x.len(), g.len()))?;
    Ok(radial_removed(x.values(), g))
}

fn radial_removed(x: &CVec, v: &CVec) -> CVec {
    CVec::from_iterator(
        x.len(),
        x.iter().zip(v.iter()).map(|(xi, vi)| vi - xi * (vi * xi.conj()).re),
    )
}

/// Entrywise normalization of `x + step * d`.
pub fn retract(x: &CirclePoint, d: &CVec, step: f64) -> Result<CirclePoint> {
    shape_check(x.len() == d.len(), || format!("point has length {}, direction {}", x.len(), d.len()))?;
    let mut out = x.values().clone();
    for (i, (z, di)) in out.iter_mut().zip(d.iter()).enumerate() {
        let moved = *z + di * step;
        let r = moved.norm();
        if r == 0.0 || !r.is_finite() {
            return Err(Error::Numeric(format!("retraction collapses entry {i}")));
        }
        *z = moved / r;
    }
    Ok(CirclePoint(out))
}

/// Moves a direction into the tangent space at `x_next`.
pub fn transport(d: &CVec, x_next: &CirclePoint) -> Result<CVec> {
    shape_check(x_next.len() == d.len(), || format!("point has length {}, direction {}", x_next.len(), d.len()))?;
    Ok(radial_removed(x_next.values(), d))
}

/// PR+ coefficient `max(0, <g1, g1 - g0> / <g0, g0>)` with the real inner
/// product; zero when the previous gradient vanishes.
pub fn polak_ribiere(grad_next: &CVec, grad_prev: &CVec) -> f64 {
    let denom = real_inner(grad_prev, grad_prev);
    if denom <= f64::MIN_POSITIVE || !denom.is_finite() {
        return 0.0;
    }
    let num = real_inner(grad_next, &(grad_next - grad_prev));
    (num / denom).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub max_iterations: usize,
    /// Stop once `||grad|| < gradient_norm_tolerance * sqrt(D)`.
    pub gradient_norm_tolerance: f64,
    pub relative_cost_tolerance: f64,
    pub armijo_sufficient_decrease: f64,
    pub armijo_contraction: f64,
    /// Largest trial step; later trials start at twice the last accepted step.
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_norm_tolerance: 1e-6,
            relative_cost_tolerance: 1e-8,
            armijo_sufficient_decrease: 1e-4,
            armijo_contraction: 0.5,
            initial_step: 1.0,
            max_backtracks: 50,
        }
    }
}

impl CgOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.gradient_norm_tolerance, self.relative_cost_tolerance, self.initial_step]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        let unit = [self.armijo_sufficient_decrease, self.armijo_contraction]
            .iter()
            .all(|v| *v > 0.0 && *v < 1.0);
        if positive && unit && self.max_backtracks > 0 {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid conjugate-gradient options {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientNorm,
    RelativeDecrease,
    MaxIterations,
    LineSearchFailed,
}

/// An accepted line-search step: `cost_next <= cost + c * step * slope`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptedStep {
    pub step: f64,
    pub slope: f64,
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub point: CirclePoint,
    /// Cost at the start point followed by the cost after every iteration.
    pub cost_trace: Vec<f64>,
    pub steps: Vec<AcceptedStep>,
    pub termination: Termination,
}

impl CgOutcome {
    pub fn final_cost(&self) -> f64 {
        *self.cost_trace.last().expect("trace holds the initial cost")
    }
}

/// Minimizes `cost` over the circle manifold from `x0`. `egrad` must return
/// the Euclidean gradient with respect to the real and imaginary parts packed
/// as a complex vector (`d cost = Re{egrad^H dx}`).
pub fn cg_minimize<F, G>(cost: F, egrad: G, x0: CirclePoint, opts: &CgOptions) -> Result<CgOutcome>
where
    F: Fn(&CVec) -> f64,
    G: Fn(&CVec) -> CVec,
{
    opts.validate()?;
    let dim = x0.len();
    let grad_tol = opts.gradient_norm_tolerance * (dim as f64).sqrt();

    let mut x = x0;
    let mut f = cost(x.values());
    if !f.is_finite() {
        return Err(Error::Numeric("cost is not finite at the start point".into()));
    }
    let mut trace = vec![f];
    let mut steps = Vec::new();
    let mut grad = project_tangent(&x, &egrad(x.values()))?;
    if grad.norm() < grad_tol {
        return Ok(CgOutcome { point: x, cost_trace: trace, steps, termination: Termination::GradientNorm });
    }
    let mut dir = -&grad;
    let mut trial_step = opts.initial_step;

    for _ in 0..opts.max_iterations {
        let mut slope = real_inner(&grad, &dir);
        if slope >= 0.0 {
            dir = -&grad;
            slope = -grad.norm_squared();
        }
        let accepted = match armijo(&cost, &x, f, &dir, slope, trial_step, opts) {
            Some(found) => Some(found),
            None if dir != -&grad => {
                dir = -&grad;
                slope = -grad.norm_squared();
                armijo(&cost, &x, f, &dir, slope, opts.initial_step, opts)
            }
            None => None,
        };
        let Some((step, x_next, f_next)) = accepted else {
            return Ok(CgOutcome { point: x, cost_trace: trace, steps, termination: Termination::LineSearchFailed });
        };
        steps.push(AcceptedStep { step, slope });
        trial_step = (2.0 * step).min(opts.initial_step);

        let grad_next = project_tangent(&x_next, &egrad(x_next.values()))?;
        let decrease = (f - f_next) / f.abs().max(f64::MIN_POSITIVE);
        let beta = polak_ribiere(&grad_next, &grad);
        let carried = transport(&dir, &x_next)?;
        dir = -&grad_next + carried * C64::new(beta, 0.0);

        x = x_next;
        f = f_next;
        grad = grad_next;
        trace.push(f);

        if grad.norm() < grad_tol {
            return Ok(CgOutcome { point: x, cost_trace: trace, steps, termination: Termination::GradientNorm });
        }
        if decrease < opts.relative_cost_tolerance {
            return Ok(CgOutcome { point: x, cost_trace: trace, steps, termination: Termination::RelativeDecrease });
        }
    }
    Ok(CgOutcome { point: x, cost_trace: trace, steps, termination: Termination::MaxIterations })
}

fn armijo<F>(
    cost: &F,
    x: &CirclePoint,
    f: f64,
    dir: &CVec,
    slope: f64,
    first_step: f64,
    opts: &CgOptions,
) -> Option<(f64, CirclePoint, f64)>
where
    F: Fn(&CVec) -> f64,
{
    let mut step = first_step;
    for _ in 0..opts.max_backtracks {
        if let Ok(candidate) = retract(x, dir, step) {
            let f_new = cost(candidate.values());
            if f_new.is_finite() && f_new <= f + opts.armijo_sufficient_decrease * step * slope {
                return Some(refine(cost, x, f, dir, slope, (step, candidate, f_new)));
            }
        }
        step *= opts.armijo_contraction;
    }
    None
}

// One quadratic-interpolation probe inside the accepted interval; keeps
// whichever point is lower.
fn refine<F>(
    cost: &F,
    x: &CirclePoint,
    f: f64,
    dir: &CVec,
    slope: f64,
    accepted: (f64, CirclePoint, f64),
) -> (f64, CirclePoint, f64)
where
    F: Fn(&CVec) -> f64,
{
    let (step, _, f_step) = &accepted;
    let curvature = (f_step - f - slope * step) / (step * step);
    if curvature <= 0.0 {
        return accepted;
    }
    let guess = -slope / (2.0 * curvature);
    if !(guess > 0.05 * step && guess < 0.95 * step) {
        return accepted;
    }
    match retract(x, dir, guess) {
        Ok(p) => {
            let fp = cost(p.values());
            if fp.is_finite() && fp < *f_step {
                (guess, p, fp)
            } else {
                accepted
            }
        }
        Err(_) => accepted,
    }
}
