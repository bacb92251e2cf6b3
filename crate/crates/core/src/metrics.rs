//! Gram-matrix and coherence statistics of (equivalent) dictionaries.

use crate::error::{shape_check, Error, Result};
use crate::linalg::{frob_sq, CMat};

/// Column-normalized Gram matrix `D_n^H D_n`.
pub fn normalized_gram(dictionary: &CMat) -> Result<CMat> {
    let mut normalized = dictionary.clone();
    for (idx, mut col) in normalized.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Domain(format!("column {idx} has zero or non-finite norm")));
        }
        col.unscale_mut(norm);
    }
    Ok(normalized.adjoint() * &normalized)
}

/// Largest normalized inner product between two distinct columns.
pub fn mutual_coherence(dictionary: &CMat) -> Result<f64> {
    if dictionary.ncols() < 2 {
        return Err(Error::Domain("coherence needs at least two columns".into()));
    }
    let gram = normalized_gram(dictionary)?;
    let n = gram.nrows();
    let mut max: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                max = max.max(gram[(i, j)].norm());
            }
        }
    }
    Ok(max.min(1.0))
}

/// `A^H W_RF W_BB` checked for chained dimensions.
pub fn sensing_product(a: &CMat, w_rf: &CMat, w_bb: &CMat) -> Result<CMat> {
    shape_check(a.nrows() == w_rf.nrows(), || {
        format!("dictionary has {} rows but analog matrix has {}", a.nrows(), w_rf.nrows())
    })?;
    shape_check(w_rf.ncols() == w_bb.nrows(), || {
        format!("analog matrix has {} columns but digital matrix has {} rows", w_rf.ncols(), w_bb.nrows())
    })?;
    Ok(a.adjoint() * (w_rf * w_bb))
}

/// `|| A^H W_RF W_BB W_BB^H W_RF^H A - I ||_F^2`.
pub fn gram_objective(a: &CMat, w_rf: &CMat, w_bb: &CMat) -> Result<f64> {
    let b = sensing_product(a, w_rf, w_bb)?;
    Ok(gram_minus_identity(&(&b * b.adjoint())))
}

/// `|| gram - I ||_F^2` for a square matrix.
pub fn gram_minus_identity(gram: &CMat) -> f64 {
    let mut acc = 0.0;
    for j in 0..gram.ncols() {
        for i in 0..gram.nrows() {
            let z = gram[(i, j)];
            acc += if i == j { (z - 1.0).norm_sqr() } else { z.norm_sqr() };
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramSummary {
    pub max_offdiag_coherence: f64,
    /// Row-major list of the `G(G-1)` off-diagonal normalized magnitudes.
    pub offdiag_magnitudes: Vec<f64>,
    /// `|| D^H D - I ||_F^2` on the unnormalized dictionary.
    pub objective_value: f64,
    pub dimension: usize,
}

pub fn gram_summary(dictionary: &CMat) -> Result<GramSummary> {
    let gram = normalized_gram(dictionary)?;
    let g = gram.nrows();
    let mut mags = Vec::with_capacity(g * g.saturating_sub(1));
    for i in 0..g {
        for j in 0..g {
            if i != j {
                mags.push(gram[(i, j)].norm().min(1.0));
            }
        }
    }
    let max_offdiag_coherence = mags.iter().copied().fold(0.0, f64::max);
    let objective_value = gram_minus_identity(&(dictionary.adjoint() * dictionary));
    Ok(GramSummary { max_offdiag_coherence, offdiag_magnitudes: mags, objective_value, dimension: g })
}

/// Receive-side factor `W_BB^H W_RF^H A_R`.
pub fn receive_factor(w_rf: &CMat, w_bb: &CMat, a_r: &CMat) -> Result<CMat> {
    Ok(sensing_product(a_r, w_rf, w_bb)?.adjoint())
}

/// Transmit-side factor `F_BB^T F_RF^T A_T^*`.
pub fn transmit_factor(f_rf: &CMat, f_bb: &CMat, a_t: &CMat) -> Result<CMat> {
    Ok(sensing_product(a_t, f_rf, f_bb)?.adjoint().map(|z| z.conj()))
}

/// `Q = (F_BB^T F_RF^T A_T^*) ⊗ (W_BB^H W_RF^H A_R)`.
pub fn equivalent_dictionary(
    f_rf: &CMat,
    f_bb: &CMat,
    w_rf: &CMat,
    w_bb: &CMat,
    a_t: &CMat,
    a_r: &CMat,
) -> Result<CMat> {
    let tx = transmit_factor(f_rf, f_bb, a_t)?;
    let rx = receive_factor(w_rf, w_bb, a_r)?;
    Ok(tx.kronecker(&rx))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledObjective {
    pub zeta: f64,
    pub value: f64,
}

/// Optimal scaling `zeta` of `Q^H Q` towards the identity and the resulting
/// `|| zeta Q^H Q - I ||_F^2`.
pub fn scaled_identity_objective(q: &CMat) -> Result<ScaledObjective> {
    let t1 = frob_sq(q);
    if t1 == 0.0 {
        return Err(Error::Domain("scaled objective of a zero matrix".into()));
    }
    // Tr{(Q^H Q)^2} = ||Q Q^H||_F^2; use whichever Gram is smaller.
    let t2 = if q.nrows() <= q.ncols() { frob_sq(&(q * q.adjoint())) } else { frob_sq(&(q.adjoint() * q)) };
    let zeta = t1 / t2;
    let value = (zeta * zeta * t2 - 2.0 * zeta * t1 + q.ncols() as f64).max(0.0);
    Ok(ScaledObjective { zeta, value })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: u64,
}

/// Histogram of off-diagonal normalized Gram magnitudes on `[0, 1]`; bins are
/// half-open except the last, which includes 1.
pub fn offdiag_histogram(dictionary: &CMat, num_bins: usize) -> Result<Vec<HistogramBin>> {
    let summary = gram_summary(dictionary)?;
    histogram_of(&summary.offdiag_magnitudes, num_bins)
}

pub fn histogram_of(values: &[f64], num_bins: usize) -> Result<Vec<HistogramBin>> {
    if num_bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let width = 1.0 / num_bins as f64;
    let mut bins: Vec<HistogramBin> = (0..num_bins)
        .map(|b| HistogramBin { low: b as f64 * width, high: if b + 1 == num_bins { 1.0 } else { (b + 1) as f64 * width }, count: 0 })
        .collect();
    for &v in values {
        let idx = ((v.clamp(0.0, 1.0) * num_bins as f64).floor() as usize).min(num_bins - 1);
        bins[idx].count += 1;
    }
    Ok(bins)
}
