//! Alternating hybrid design with continuous phase shifters.
//!
//! The digital step relaxes every block product `W_q W_q^H` to a PSD matrix,
//! solves the resulting convex quadratic on the PSD cone with accelerated
//! projected gradient, and recovers `W_q` from the strongest eigenpairs. The
//! analog step runs manifold conjugate gradient on the constant-modulus
//! matrix with the digital part held fixed.

use rand::Rng;

use crate::error::{shape_check, Error, Result};
use crate::linalg::{frob_sq, hermitian_eigh, invec, random_phase_matrix, real_inner_mat, spectral_norm, vec, CMat, CVec, C64};
use crate::manifold::{cg_minimize, CgOptions, CirclePoint};
use crate::metrics;
use crate::sensing::{HybridSensingMatrix, PhaseSet, Side};

/// Block-diagonal PSD relaxation of `W_BB W_BB^H`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlockVariable {
    pub blocks: Vec<CMat>,
}

impl PsdBlockVariable {
    pub fn zeros(num_blocks: usize, size: usize) -> Self {
        Self { blocks: vec![CMat::zeros(size, size); num_blocks] }
    }

    pub fn from_digital(blocks: &[CMat]) -> Self {
        Self { blocks: blocks.iter().map(|w| w * w.adjoint()).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdOptions {
    pub max_iterations: usize,
    /// Stop when the projected-gradient residual drops below this fraction of
    /// the larger of the gradient norms at the start point and at zero.
    pub relative_tolerance: f64,
}

impl Default for PsdOptions {
    fn default() -> Self {
        Self { max_iterations: 20_000, relative_tolerance: 1e-7 }
    }
}

#[derive(Debug, Clone)]
pub struct PsdSolution {
    pub variable: PsdBlockVariable,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub initial_gradient_norm: f64,
    /// `L * ||X - P(X - grad / L)||` at the returned point.
    pub residual: f64,
}

/// The quadratic `|| sum_q B_q X_q B_q^H - E ||_F^2` over PSD blocks, with
/// `B = A^H W_RF` split column-wise into blocks.
pub struct PsdProblem {
    parts: Vec<CMat>,
    target: CMat,
    lipschitz: f64,
}

impl PsdProblem {
    pub fn new(a: &CMat, analog: &CMat, num_blocks: usize, target: CMat) -> Result<Self> {
        shape_check(a.nrows() == analog.nrows(), || {
            format!("dictionary rows {} differ from analog rows {}", a.nrows(), analog.nrows())
        })?;
        shape_check(num_blocks > 0 && analog.ncols().is_multiple_of(num_blocks), || {
            format!("{} analog columns do not split into {num_blocks} blocks", analog.ncols())
        })?;
        shape_check(target.shape() == (a.ncols(), a.ncols()), || "target must be G x G".into())?;
        let b = a.adjoint() * analog;
        let rf = analog.ncols() / num_blocks;
        let parts = (0..num_blocks).map(|q| b.columns(q * rf, rf).into_owned()).collect();
        let s = spectral_norm(&b);
        Ok(Self { parts, target, lipschitz: 2.0 * s.powi(4) })
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn residual_matrix(&self, x: &PsdBlockVariable) -> CMat {
        let mut s = -self.target.clone();
        for (b, xq) in self.parts.iter().zip(&x.blocks) {
            s += b * xq * b.adjoint();
        }
        s
    }

    pub fn objective(&self, x: &PsdBlockVariable) -> f64 {
        frob_sq(&self.residual_matrix(x))
    }

    pub fn gradient(&self, x: &PsdBlockVariable) -> PsdBlockVariable {
        let r = self.residual_matrix(x);
        PsdBlockVariable {
            blocks: self.parts.iter().map(|b| (b.adjoint() * &r * b).scale(2.0)).collect(),
        }
    }

    /// `P(X - step * grad)` blockwise.
    pub fn projected_step(&self, x: &PsdBlockVariable, grad: &PsdBlockVariable, step: f64) -> PsdBlockVariable {
        PsdBlockVariable {
            blocks: x.blocks.iter().zip(&grad.blocks).map(|(xq, gq)| project_psd(&(xq - gq.scale(step)))).collect(),
        }
    }
}

/// Euclidean projection onto the PSD cone: Hermitian part, eigenvalues clipped at 0.
pub fn project_psd(m: &CMat) -> CMat {
    let (vals, vecs) = hermitian_eigh(m);
    let n = m.nrows();
    let mut out = CMat::zeros(n, n);
    for (k, &v) in vals.iter().enumerate() {
        if v > 0.0 {
            let col = vecs.column(k);
            out += col * col.adjoint() * C64::new(v, 0.0);
        }
    }
    crate::linalg::hermitian_part(&out)
}

fn var_norm(v: &PsdBlockVariable) -> f64 {
    v.blocks.iter().map(frob_sq).sum::<f64>().sqrt()
}

fn var_axpy(x: &PsdBlockVariable, y: &PsdBlockVariable, a: f64) -> PsdBlockVariable {
    PsdBlockVariable { blocks: x.blocks.iter().zip(&y.blocks).map(|(p, q)| p + q.scale(a)).collect() }
}

fn var_dot(x: &PsdBlockVariable, y: &PsdBlockVariable) -> f64 {
    x.blocks.iter().zip(&y.blocks).map(|(p, q)| real_inner_mat(p, q)).sum()
}

/// Solves the digital PSD subproblem towards the identity starting from zero.
pub fn solve_digital_psd(a: &CMat, analog: &CMat, num_blocks: usize, opts: &PsdOptions) -> Result<PsdSolution> {
    let g = a.ncols();
    let problem = PsdProblem::new(a, analog, num_blocks, CMat::identity(g, g))?;
    let rf = analog.ncols() / num_blocks;
    solve_psd(&problem, PsdBlockVariable::zeros(num_blocks, rf), opts)
}

/// Accelerated projected gradient with function-value restart; the returned
/// point never has a larger objective than `start`.
pub fn solve_psd(problem: &PsdProblem, start: PsdBlockVariable, opts: &PsdOptions) -> Result<PsdSolution> {
    let start = PsdBlockVariable { blocks: start.blocks.iter().map(project_psd).collect() };
    let l = problem.lipschitz();
    let mut x = start;
    let mut fx = problem.objective(&x);
    let g0 = problem.gradient(&x);
    let zero = PsdBlockVariable { blocks: x.blocks.iter().map(|b| CMat::zeros(b.nrows(), b.ncols())).collect() };
    // Scale the stopping rule by the gradient at the origin as well, so a
    // warm start close to the optimum does not shrink the tolerance.
    let initial_gradient_norm = var_norm(&g0).max(var_norm(&problem.gradient(&zero)));
    let done = |x: &PsdBlockVariable, g: &PsdBlockVariable| -> f64 {
        let next = problem.projected_step(x, g, 1.0 / l);
        l * var_norm(&var_axpy(x, &next, -1.0))
    };
    if l == 0.0 || initial_gradient_norm == 0.0 {
        return Ok(PsdSolution {
            variable: x,
            objective: fx,
            converged: true,
            iterations: 0,
            initial_gradient_norm,
            residual: 0.0,
        });
    }
    let tol = opts.relative_tolerance * initial_gradient_norm;
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut residual = done(&x, &g0);
    let mut iterations = 0;
    while iterations < opts.max_iterations && residual > tol {
        iterations += 1;
        let gy = problem.gradient(&y);
        let x_next = problem.projected_step(&y, &gy, 1.0 / l);
        let f_next = problem.objective(&x_next);
        if f_next > fx {
            // Restart momentum from the current best point.
            y = x.clone();
            t = 1.0;
            let gx = problem.gradient(&x);
            let x_plain = problem.projected_step(&x, &gx, 1.0 / l);
            let f_plain = problem.objective(&x_plain);
            if f_plain <= fx {
                x = x_plain;
                fx = f_plain;
            }
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum = (t - 1.0) / t_next;
            let diff = var_axpy(&x_next, &x, -1.0);
            // Gradient-based restart when the momentum points uphill.
            if var_dot(&gy, &diff) > 0.0 {
                t = 1.0;
                y = x_next.clone();
            } else {
                y = var_axpy(&x_next, &diff, momentum);
                t = t_next;
            }
            x = x_next;
            fx = f_next;
        }
        residual = done(&x, &problem.gradient(&x));
    }
    Ok(PsdSolution {
        variable: x,
        objective: fx,
        converged: residual <= tol,
        iterations,
        initial_gradient_norm,
        residual,
    })
}

/// `W = V Σ^{1/2}` from the `num_streams` strongest eigenpairs of `block`.
pub fn extract_digital(block: &CMat, num_streams: usize) -> Result<CMat> {
    shape_check(block.is_square(), || "digital PSD block must be square".into())?;
    shape_check(num_streams <= block.nrows(), || {
        format!("{num_streams} streams exceed block size {}", block.nrows())
    })?;
    let (vals, vecs) = hermitian_eigh(block);
    if let Some(&min) = vals.last() {
        if min < -1e-8 {
            return Err(Error::Contract(format!("PSD block has eigenvalue {min:e}")));
        }
    }
    let mut w = CMat::zeros(block.nrows(), num_streams);
    for (k, &v) in vals.iter().take(num_streams).enumerate() {
        let scale = v.max(0.0).sqrt();
        w.set_column(k, &(vecs.column(k) * C64::new(scale, 0.0)));
    }
    Ok(w)
}

/// Euclidean gradient of `|| A^H X P X^H A - I ||_F^2`, `P = W_BB W_BB^H`,
/// written as `4 vec[A A^H X P (X^H A A^H X P - I_M)]`.
pub fn egrad_analog_inf(x: &CVec, w_bb: &CMat, a: &CMat) -> Result<CVec> {
    let n = a.nrows();
    let m = w_bb.nrows();
    shape_check(x.len() == n * m, || format!("analog vector has length {}, expected {n} x {m}", x.len()))?;
    let xm = invec(x, n, m);
    let p = w_bb * w_bb.adjoint();
    let aah = a * a.adjoint();
    let left = &aah * &xm * &p;
    let inner = xm.adjoint() * &left - CMat::identity(m, m);
    Ok(vec(&(left * inner)) * C64::new(4.0, 0.0))
}

/// `|| A^H X P X^H A - E ||_F^2` as a function of `vec(X)` together with its
/// Euclidean gradient `4 vec[A (A^H X P X^H A - E) A^H X P]`.
#[derive(Debug, Clone)]
pub struct AnalogCost {
    a: CMat,
    target: CMat,
    weight: CMat,
    rows: usize,
    cols: usize,
}

impl AnalogCost {
    pub fn new(a: &CMat, digital: &CMat, target: CMat) -> Result<Self> {
        shape_check(target.shape() == (a.ncols(), a.ncols()), || "target must be G x G".into())?;
        Ok(Self {
            a: a.clone(),
            target,
            weight: digital * digital.adjoint(),
            rows: a.nrows(),
            cols: digital.nrows(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.rows * self.cols
    }

    fn residual(&self, x: &CMat) -> (CMat, CMat) {
        let ax = self.a.adjoint() * x;
        let r = &ax * &self.weight * ax.adjoint() - &self.target;
        (ax, r)
    }

    pub fn cost(&self, x: &CVec) -> f64 {
        let xm = invec(x, self.rows, self.cols);
        frob_sq(&self.residual(&xm).1)
    }

    pub fn egrad(&self, x: &CVec) -> CVec {
        let xm = invec(x, self.rows, self.cols);
        let (ax, r) = self.residual(&xm);
        let g = &self.a * r * ax * &self.weight;
        vec(&g) * C64::new(4.0, 0.0)
    }

    /// Runs manifold conjugate gradient from `start`.
    pub fn minimize(&self, start: &CMat, opts: &CgOptions) -> Result<(CMat, Vec<f64>)> {
        shape_check(start.shape() == (self.rows, self.cols), || "analog start has the wrong shape".into())?;
        let x0 = CirclePoint::normalized(vec(start))?;
        let out = cg_minimize(|x| self.cost(x), |x| self.egrad(x), x0, opts)?;
        let trace = out.cost_trace.clone();
        Ok((invec(out.point.values(), self.rows, self.cols), trace))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfDesignOptions {
    pub max_outer_iterations: usize,
    pub outer_relative_tolerance: f64,
    pub cg: CgOptions,
    pub psd: PsdOptions,
}

impl Default for InfDesignOptions {
    fn default() -> Self {
        Self { max_outer_iterations: 50, outer_relative_tolerance: 1e-6, cg: CgOptions::default(), psd: PsdOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct DesignOutcome {
    /// Power-normalized design.
    pub matrix: HybridSensingMatrix,
    /// Objective before power normalization.
    pub design_objective: f64,
    /// Objective after the first digital step, then after every alternation.
    pub objective_trace: Vec<f64>,
}

/// Alternating analog/digital design with continuous phases.
#[allow(clippy::too_many_arguments)]
pub fn design_hybrid_inf<R: Rng + ?Sized>(
    a: &CMat,
    num_blocks: usize,
    rf_chains: usize,
    streams: usize,
    side: Side,
    opts: &InfDesignOptions,
    rng: &mut R,
) -> Result<DesignOutcome> {
    if streams == 0 || streams > rf_chains {
        return Err(Error::Config(format!("need 1 <= N_s ({streams}) <= N_RF ({rf_chains})")));
    }
    if num_blocks == 0 {
        return Err(Error::Config("need at least one training block".into()));
    }
    let n = a.nrows();
    let g = a.ncols();
    let identity = CMat::identity(g, g);
    let mut analog = random_phase_matrix(n, rf_chains * num_blocks, rng);
    let mut digital: Option<Vec<CMat>> = None;
    let mut trace = Vec::new();
    let mut previous = f64::INFINITY;

    for _ in 0..opts.max_outer_iterations {
        // Digital step, warm-started from the current digital part.
        let problem = PsdProblem::new(a, &analog, num_blocks, identity.clone())?;
        let start = match &digital {
            Some(blocks) => PsdBlockVariable::from_digital(blocks),
            None => PsdBlockVariable::zeros(num_blocks, rf_chains),
        };
        let solution = solve_psd(&problem, start, &opts.psd)?;
        let candidate: Vec<CMat> =
            solution.variable.blocks.iter().map(|x| extract_digital(x, streams)).collect::<Result<_>>()?;
        let cand_obj = metrics::gram_objective(a, &analog, &crate::linalg::block_diag(&candidate))?;
        let blocks = match digital.take() {
            Some(old) if metrics::gram_objective(a, &analog, &crate::linalg::block_diag(&old))? <= cand_obj => old,
            _ => candidate,
        };
        let assembled = crate::linalg::block_diag(&blocks);
        if trace.is_empty() {
            trace.push(metrics::gram_objective(a, &analog, &assembled)?);
        }

        // Analog step.
        let cost = AnalogCost::new(a, &assembled, identity.clone())?;
        let (next, cg_trace) = cost.minimize(&analog, &opts.cg)?;
        analog = next;
        digital = Some(blocks);
        let objective = *cg_trace.last().expect("non-empty trace");
        trace.push(objective);

        let decrease = (previous - objective) / previous.abs().max(f64::MIN_POSITIVE);
        if previous.is_finite() && decrease < opts.outer_relative_tolerance {
            break;
        }
        previous = objective;
    }

    let blocks = digital.expect("at least one outer iteration ran");
    let design_objective = metrics::gram_objective(a, &analog, &crate::linalg::block_diag(&blocks))?;
    let mut matrix = HybridSensingMatrix::new(analog, blocks, PhaseSet::INFINITE, side)?;
    matrix.normalize_power()?;
    Ok(DesignOutcome { matrix, design_objective, objective_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_dictionary;
    use crate::linalg::{complex_gaussian_matrix, hermitian_defect};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dft_columns(n: usize, cols: usize) -> CMat {
        CMat::from_fn(n, cols, |i, j| C64::from_polar(1.0, std::f64::consts::TAU * (i * j) as f64 / n as f64))
    }

    #[test]
    fn psd_closed_form_for_orthogonal_analog() {
        let n = 8;
        let analog = dft_columns(n, 4);
        let sol = solve_digital_psd(&CMat::identity(n, n), &analog, 1, &PsdOptions::default()).unwrap();
        let expect = CMat::identity(4, 4).scale(1.0 / n as f64);
        let err = frob_sq(&(&sol.variable.blocks[0] - &expect)).sqrt();
        assert!(err < 1e-6, "distance to I/N: {err}");
        assert!((sol.objective - (n - 4) as f64).abs() < 1e-6 * (n - 4) as f64);
    }

    #[test]
    fn psd_zero_analog_returns_zero() {
        let a = build_dictionary(4, 6, 0.5).unwrap().matrix;
        let sol = solve_digital_psd(&a, &CMat::zeros(4, 4), 2, &PsdOptions::default()).unwrap();
        assert!(sol.variable.blocks.iter().all(|b| frob_sq(b) == 0.0));
        assert!((sol.objective - 6.0).abs() < 1e-12);
    }

    #[test]
    fn psd_solution_is_feasible_and_improves() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = build_dictionary(8, 12, 0.5).unwrap().matrix;
        let analog = random_phase_matrix(8, 8, &mut rng);
        let sol = solve_digital_psd(&a, &analog, 2, &PsdOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.residual <= 1e-5 * sol.initial_gradient_norm);
        assert!(sol.objective <= 12.0);
        for b in &sol.variable.blocks {
            assert!(hermitian_defect(b) < 1e-10);
            let (vals, _) = hermitian_eigh(b);
            assert!(*vals.last().unwrap() >= -1e-10);
        }
    }

    #[test]
    fn extract_examples() {
        let id = CMat::identity(3, 3);
        let w = extract_digital(&id, 3).unwrap();
        assert!(frob_sq(&(&w * w.adjoint() - &id)) < 1e-24);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = complex_gaussian_matrix(4, 1, 1.0, &mut rng);
        let block = &v * v.adjoint();
        let w = extract_digital(&block, 1).unwrap();
        assert!(frob_sq(&(&w * w.adjoint() - &block)).sqrt() < 1e-12 * frob_sq(&block).sqrt());

        let diag = CMat::from_diagonal(&CVec::from_vec([4.0, 1.0, 0.0, 0.0].map(|x| C64::new(x, 0.0)).to_vec()));
        let w = extract_digital(&diag, 2).unwrap();
        assert!(frob_sq(&(&w * w.adjoint() - &diag)) < 1e-24);

        let neg = CMat::from_diagonal(&CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(-1e-3, 0.0)]));
        assert!(matches!(extract_digital(&neg, 1), Err(Error::Contract(_))));
    }

    #[test]
    fn extract_is_lossless_at_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = complex_gaussian_matrix(4, 4, 1.0, &mut rng);
        let x = &m * m.adjoint();
        let w = extract_digital(&x, 4).unwrap();
        assert!(frob_sq(&(&w * w.adjoint() - &x)).sqrt() <= 1e-10 * frob_sq(&x).sqrt());
    }

    #[test]
    fn egrad_zero_digital() {
        let a = build_dictionary(4, 6, 0.5).unwrap().matrix;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = vec(&random_phase_matrix(4, 2, &mut rng));
        let g = egrad_analog_inf(&x, &CMat::zeros(2, 2), &a).unwrap();
        assert_eq!(g.norm(), 0.0);
        assert!(matches!(egrad_analog_inf(&x, &CMat::zeros(3, 2), &a), Err(Error::Shape(_))));
    }

    #[test]
    fn printed_gradient_form_matches_cost_gradient() {
        let a = build_dictionary(8, 12, 0.5).unwrap().matrix;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w_bb = complex_gaussian_matrix(8, 8, 0.3, &mut rng);
        let x = vec(&random_phase_matrix(8, 8, &mut rng));
        let cost = AnalogCost::new(&a, &w_bb, CMat::identity(12, 12)).unwrap();
        let g1 = egrad_analog_inf(&x, &w_bb, &a).unwrap();
        let g2 = cost.egrad(&x);
        assert!((&g1 - &g2).norm() < 1e-10 * g1.norm());
    }

    #[test]
    fn descent_along_negative_gradient() {
        let a = build_dictionary(8, 12, 0.5).unwrap().matrix;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w_bb = complex_gaussian_matrix(8, 8, 0.3, &mut rng);
        let cost = AnalogCost::new(&a, &w_bb, CMat::identity(12, 12)).unwrap();
        let x = CirclePoint::new(vec(&random_phase_matrix(8, 8, &mut rng))).unwrap();
        let rg = crate::manifold::project_tangent(&x, &cost.egrad(x.values())).unwrap();
        let moved = crate::manifold::retract(&x, &(-rg), 1e-6).unwrap();
        assert!(cost.cost(x.values()) - cost.cost(moved.values()) >= 0.0);
    }

    #[test]
    fn design_meets_invariants() {
        let a = build_dictionary(8, 12, 0.5).unwrap().matrix;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let out = design_hybrid_inf(&a, 2, 4, 4, Side::Receiver, &InfDesignOptions::default(), &mut rng).unwrap();
        let m = &out.matrix;
        assert!(m.analog_feasible(1e-12));
        assert_eq!(m.digital().shape(), (8, 8));
        assert!((m.total_power() - 8.0).abs() < 1e-10 * 8.0);
        assert!(out.objective_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(out.design_objective <= out.objective_trace[0]);
    }

    #[test]
    fn design_rejects_more_streams_than_chains() {
        let a = build_dictionary(8, 12, 0.5).unwrap().matrix;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let err = design_hybrid_inf(&a, 2, 2, 3, Side::Receiver, &InfDesignOptions::default(), &mut rng);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
