//! Small complex linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const J: C64 = C64 { re: 0.0, im: 1.0 };

/// Column-major vectorization.
pub fn vec(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`] for a `rows x cols` matrix.
pub fn invec(v: &CVec, rows: usize, cols: usize) -> CMat {
    assert_eq!(v.len(), rows * cols, "invec length mismatch");
    CMat::from_column_slice(rows, cols, v.as_slice())
}

pub fn frob_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// `Re{a^H b}`, the real inner product on complex vectors.
pub fn real_inner(a: &CVec, b: &CVec) -> f64 {
    a.dotc(b).re
}

pub fn real_inner_mat(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// Largest absolute entry of `m - m^H`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let d = m - m.adjoint();
    d.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order. Columns of the returned matrix are the eigenvectors.
pub fn hermitian_eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Spectral norm via the largest eigenvalue of `m^H m`.
pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let g = if m.nrows() < m.ncols() { m * m.adjoint() } else { m.adjoint() * m };
    let (vals, _) = hermitian_eigh(&g);
    vals.first().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Log-determinant (natural log) of a Hermitian positive definite matrix.
pub fn hermitian_logdet(m: &CMat) -> Option<f64> {
    let chol = hermitian_part(m).cholesky()?;
    Some(chol.l_dirty().diagonal().iter().take(m.nrows()).map(|z| 2.0 * z.re.ln()).sum())
}

/// Matrix with i.i.d. unit-modulus entries of uniformly random phase.
pub fn random_phase_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let phase: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        C64::from_polar(1.0, phase)
    })
}

/// Matrix with i.i.d. `CN(0, variance)` entries.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> CMat {
    let sd = (variance / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(sd * re, sd * im)
    })
}

pub fn complex_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> C64 {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(sd * re, sd * im)
}

/// Block-diagonal assembly of equally sized blocks.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vec_invec_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (r, c) in [(1, 1), (3, 5), (8, 4), (12, 1)] {
            let m = complex_gaussian_matrix(r, c, 1.0, &mut rng);
            assert_eq!(invec(&vec(&m), r, c), m);
        }
    }

    #[test]
    fn vec_is_column_major() {
        let m = CMat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0].map(|x| C64::new(x, 0.0)));
        let v = vec(&m);
        assert_eq!(v[1], C64::new(3.0, 0.0));
    }

    #[test]
    fn eigh_sorted_descending() {
        let m = CMat::from_diagonal(&CVec::from_vec(
            [1.0, 4.0, 0.0, 2.0].iter().map(|&x| C64::new(x, 0.0)).collect(),
        ));
        let (vals, vecs) = hermitian_eigh(&m);
        assert_eq!(vals, vec![4.0, 2.0, 1.0, 0.0]);
        assert!((vecs[(1, 0)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logdet_matches_diagonal() {
        let m = CMat::from_diagonal(&CVec::from_vec(vec![C64::new(2.0, 0.0), C64::new(3.0, 0.0)]));
        assert!((hermitian_logdet(&m).unwrap() - 6f64.ln()).abs() < 1e-12);
    }
}
