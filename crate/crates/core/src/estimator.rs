//! Training measurements, OMP recovery and channel-quality scores.

use rand::Rng;

use crate::channel::{AngularDictionary, ChannelRealization};
use crate::error::{shape_check, Error, Result};
use crate::linalg::{complex_gaussian_matrix, frob_sq, hermitian_logdet, invec, vec, CMat, CVec, C64};
use crate::sensing::TrainingBeams;

#[derive(Debug, Clone)]
pub struct MeasurementSet {
    /// `vec` of the `T_r x T_t` received training matrix.
    pub observations: CVec,
    /// `(F^T A_T^*) ⊗ (W^H A_R)`.
    pub equivalent_dictionary: CMat,
    pub pilot_power: f64,
    pub noise_variance: f64,
    pub pnr_db: f64,
}

/// `Q` for a transmit/receive pair of training-beam sets.
pub fn equivalent_dictionary<T: TrainingBeams + ?Sized, R: TrainingBeams + ?Sized>(
    tx: &T,
    rx: &R,
    dict_tx: &AngularDictionary,
    dict_rx: &AngularDictionary,
) -> Result<CMat> {
    let t = tx.equivalent_factor(&dict_tx.matrix)?;
    let r = rx.equivalent_factor(&dict_rx.matrix)?;
    Ok(t.kronecker(&r))
}

/// `y = vec(√P W^H H F + W^H N)`, where the raw noise `N` is drawn
/// independently for every (receive block, transmit block) slot pair and
/// filtered by that slot's receive beams.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_measurements<T, R, G>(
    channel: &ChannelRealization,
    tx: &T,
    rx: &R,
    dict_tx: &AngularDictionary,
    dict_rx: &AngularDictionary,
    pilot_power: f64,
    noise_variance: f64,
    rng: &mut G,
) -> Result<MeasurementSet>
where
    T: TrainingBeams + ?Sized,
    R: TrainingBeams + ?Sized,
    G: Rng + ?Sized,
{
    if !(pilot_power >= 0.0 && pilot_power.is_finite()) {
        return Err(Error::Domain(format!("pilot power must be non-negative, got {pilot_power}")));
    }
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(Error::Domain(format!("noise variance must be non-negative, got {noise_variance}")));
    }
    let f = tx.beams();
    let w = rx.beams();
    shape_check(f.nrows() == channel.num_tx && w.nrows() == channel.num_rx, || {
        format!(
            "beams are {}x{} (tx) and {}x{} (rx) for a {}x{} channel",
            f.nrows(),
            f.ncols(),
            w.nrows(),
            w.ncols(),
            channel.num_rx,
            channel.num_tx
        )
    })?;
    let (ns_t, ns_r) = (tx.streams_per_block(), rx.streams_per_block());
    shape_check(ns_t > 0 && f.ncols().is_multiple_of(ns_t) && ns_r > 0 && w.ncols().is_multiple_of(ns_r), || {
        "beam counts must be whole multiples of the per-block stream counts".into()
    })?;

    let mut y = w.adjoint() * &channel.dense * &f * C64::new(pilot_power.sqrt(), 0.0);
    if noise_variance > 0.0 {
        let nr = channel.num_rx;
        for p in 0..f.ncols() / ns_t {
            for q in 0..w.ncols() / ns_r {
                let raw = complex_gaussian_matrix(nr, ns_t, noise_variance, rng);
                let wq = w.columns(q * ns_r, ns_r);
                let filtered = wq.adjoint() * raw;
                let mut slot = y.view_mut((q * ns_r, p * ns_t), (ns_r, ns_t));
                slot += filtered;
            }
        }
    }
    let q = equivalent_dictionary(tx, rx, dict_tx, dict_rx)?;
    let pnr_db = 10.0 * (pilot_power / noise_variance).log10();
    Ok(MeasurementSet {
        observations: vec(&y),
        equivalent_dictionary: q,
        pilot_power,
        noise_variance,
        pnr_db,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    pub coefficients: CVec,
    /// Selected columns in selection order.
    pub support: Vec<usize>,
    /// Residual norm before the first selection and after every refit.
    pub residual_norms: Vec<f64>,
    /// Set when the selected columns became numerically dependent.
    pub singular: bool,
}

const SINGULAR_RATIO: f64 = 1e-10;

/// Orthogonal matching pursuit with a full least-squares refit per step.
pub fn omp_recover(q: &CMat, y: &CVec, sparsity: usize, residual_tolerance: f64) -> Result<OmpResult> {
    if sparsity == 0 {
        return Err(Error::Config("OMP sparsity must be at least 1".into()));
    }
    shape_check(q.nrows() == y.len(), || format!("dictionary has {} rows, observations {}", q.nrows(), y.len()))?;
    let g = q.ncols();
    let norms: Vec<f64> = q.column_iter().map(|c| c.norm()).collect();
    let y_norm = y.norm();
    let mut coefficients = CVec::zeros(g);
    let mut support: Vec<usize> = Vec::new();
    let mut residual = y.clone();
    let mut residual_norms = vec![y_norm];
    let mut singular = false;
    let stop = residual_tolerance * y_norm;

    while support.len() < sparsity.min(g) && residual.norm() > stop && y_norm > 0.0 {
        let corr = q.ad_mul(&residual);
        let pick = (0..g)
            .filter(|k| norms[*k] > 0.0 && !support.contains(k))
            .map(|k| (k, corr[k].norm() / norms[k]))
            .fold(None, |best: Option<(usize, f64)>, (k, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((k, v)),
            });
        let Some((k, _)) = pick else { break };
        let mut trial = support.clone();
        trial.push(k);
        let sub = CMat::from_columns(&trial.iter().map(|&c| q.column(c)).collect::<Vec<_>>());
        let Some(c) = least_squares(&sub, y) else {
            singular = true;
            break;
        };
        support = trial;
        residual = y - &sub * &c;
        coefficients.fill(C64::new(0.0, 0.0));
        for (&idx, &v) in support.iter().zip(c.iter()) {
            coefficients[idx] = v;
        }
        residual_norms.push(residual.norm());
    }
    Ok(OmpResult { coefficients, support, residual_norms, singular })
}

fn least_squares(a: &CMat, y: &CVec) -> Option<CVec> {
    let qr = a.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = r.diagonal().iter().map(|z| z.norm()).collect();
    let largest = diag.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 || diag.iter().any(|&d| d <= SINGULAR_RATIO * largest) {
        return None;
    }
    let rhs = qr.q().ad_mul(y);
    r.solve_upper_triangular(&rhs)
}

/// `A_R invec(h) A_T^H` with `h` indexed as `g_t * G_r + g_r`.
pub fn reconstruct_channel(angular: &CVec, a_r: &CMat, a_t: &CMat) -> Result<CMat> {
    let (gr, gt) = (a_r.ncols(), a_t.ncols());
    shape_check(angular.len() == gr * gt, || format!("angular vector has length {}, expected {gr} x {gt}", angular.len()))?;
    Ok(a_r * invec(angular, gr, gt) * a_t.adjoint())
}

/// `||H - Ĥ||_F^2 / ||H||_F^2` and its dB value (`-inf` for a perfect estimate).
pub fn nmse(h_true: &CMat, h_est: &CMat) -> Result<(f64, f64)> {
    shape_check(h_true.shape() == h_est.shape(), || "channel shapes differ".into())?;
    let denom = frob_sq(h_true);
    if denom == 0.0 {
        return Err(Error::Domain("NMSE of an all-zero channel is undefined".into()));
    }
    let linear = frob_sq(&(h_true - h_est)) / denom;
    Ok((linear, to_db(linear)))
}

pub fn to_db(linear: f64) -> f64 {
    if linear == 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * linear.log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEfficiency {
    pub bits_per_hz: f64,
    /// Set when `W^H W` needed the ridge to be factorized.
    pub regularized: bool,
}

const RIDGE: f64 = 1e-12;

/// Rate of SVD beamforming designed on `h_est` and applied to `h_true`.
pub fn spectral_efficiency(
    h_true: &CMat,
    h_est: &CMat,
    data_power: f64,
    streams: usize,
    noise_variance: f64,
) -> Result<SpectralEfficiency> {
    shape_check(h_true.shape() == h_est.shape(), || "channel shapes differ".into())?;
    if streams == 0 || streams > h_est.nrows().min(h_est.ncols()) {
        return Err(Error::Config(format!("{streams} streams do not fit a {:?} channel", h_est.shape())));
    }
    let valid = noise_variance > 0.0 && data_power >= 0.0;
    if !valid {
        return Err(Error::Domain("need positive noise variance and non-negative power".into()));
    }
    let svd = h_est.clone().svd(true, true);
    let u = svd.u.expect("left vectors requested");
    let v_t = svd.v_t.expect("right vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let top = &order[..streams];
    let w = CMat::from_columns(&top.iter().map(|&k| u.column(k)).collect::<Vec<_>>());
    let f = CMat::from_columns(&top.iter().map(|&k| v_t.row(k).adjoint()).collect::<Vec<_>>());

    let k = w.adjoint() * &w;
    let hw = w.adjoint() * h_true * &f;
    let m = &hw * hw.adjoint() * C64::new(data_power / (streams as f64 * noise_variance), 0.0);
    let total = &k + &m;
    let (ld_total, ld_k, regularized) = match (hermitian_logdet(&total), hermitian_logdet(&k)) {
        (Some(a), Some(b)) => (a, b, false),
        _ => {
            let ridge = CMat::identity(streams, streams) * C64::new(RIDGE, 0.0);
            let a = hermitian_logdet(&(&total + &ridge));
            let b = hermitian_logdet(&(&k + &ridge));
            match (a, b) {
                (Some(a), Some(b)) => (a, b, true),
                _ => return Err(Error::Numeric("combiner Gram matrix is not positive definite".into())),
            }
        }
    };
    Ok(SpectralEfficiency {
        bits_per_hz: ((ld_total - ld_k) / std::f64::consts::LN_2).max(0.0),
        regularized,
    })
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub recovered_angular: CVec,
    pub recovered_support: Vec<usize>,
    pub dense_estimate: CMat,
    pub nmse_linear: f64,
    pub nmse_db: f64,
    pub singular: bool,
}

pub const DEFAULT_RESIDUAL_TOLERANCE: f64 = 1e-6;

/// Measures `channel`, recovers it with OMP given the path count and scores it.
#[allow(clippy::too_many_arguments)]
pub fn estimate_channel<T, R, G>(
    channel: &ChannelRealization,
    tx: &T,
    rx: &R,
    dict_tx: &AngularDictionary,
    dict_rx: &AngularDictionary,
    pilot_power: f64,
    noise_variance: f64,
    sparsity: usize,
    rng: &mut G,
) -> Result<EstimateReport>
where
    T: TrainingBeams + ?Sized,
    R: TrainingBeams + ?Sized,
    G: Rng + ?Sized,
{
    let m = synthesize_measurements(channel, tx, rx, dict_tx, dict_rx, pilot_power, noise_variance, rng)?;
    estimate_from(&m, channel, dict_tx, dict_rx, sparsity)
}

/// Recovery and scoring for an existing measurement set.
pub fn estimate_from(
    m: &MeasurementSet,
    channel: &ChannelRealization,
    dict_tx: &AngularDictionary,
    dict_rx: &AngularDictionary,
    sparsity: usize,
) -> Result<EstimateReport> {
    if m.pilot_power <= 0.0 {
        return Err(Error::Domain("recovery needs positive pilot power".into()));
    }
    let omp = omp_recover(&m.equivalent_dictionary, &m.observations, sparsity, DEFAULT_RESIDUAL_TOLERANCE)?;
    let angular = omp.coefficients / C64::new(m.pilot_power.sqrt(), 0.0);
    let dense = reconstruct_channel(&angular, &dict_rx.matrix, &dict_tx.matrix)?;
    let (nmse_linear, nmse_db) = nmse(&channel.dense, &dense)?;
    let mut support = omp.support;
    support.sort_unstable();
    Ok(EstimateReport {
        recovered_angular: angular,
        recovered_support: support,
        dense_estimate: dense,
        nmse_linear,
        nmse_db,
        singular: omp.singular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_dictionary, sample_channel, GridMode};
    use crate::linalg::random_phase_matrix;
    use crate::sensing::{HybridSensingMatrix, PhaseSet, Side, UnconstrainedSensing};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (AngularDictionary, AngularDictionary, HybridSensingMatrix, HybridSensingMatrix, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dt = build_dictionary(6, 8, 0.5).unwrap();
        let dr = build_dictionary(4, 6, 0.5).unwrap();
        let tx = HybridSensingMatrix::new(
            random_phase_matrix(6, 4, &mut rng),
            (0..2).map(|_| complex_gaussian_matrix(2, 2, 1.0, &mut rng)).collect(),
            PhaseSet::INFINITE,
            Side::Transmitter,
        )
        .unwrap();
        let rx = HybridSensingMatrix::new(
            random_phase_matrix(4, 4, &mut rng),
            (0..2).map(|_| complex_gaussian_matrix(2, 2, 1.0, &mut rng)).collect(),
            PhaseSet::INFINITE,
            Side::Receiver,
        )
        .unwrap();
        (dt, dr, tx, rx, rng)
    }

    #[test]
    fn noiseless_measurements_follow_the_dictionary() {
        let (dt, dr, tx, rx, mut rng) = setup(1);
        let ch = sample_channel(&dt, &dr, 2, GridMode::OnGrid, &mut rng).unwrap();
        let m = synthesize_measurements(&ch, &tx, &rx, &dt, &dr, 4.0, 0.0, &mut rng).unwrap();
        let h = ch.angular_vector.clone().unwrap();
        let expect = &m.equivalent_dictionary * &h * C64::new(2.0, 0.0);
        assert!((&m.observations - &expect).norm() < 1e-10 * expect.norm());
        assert_eq!(m.pnr_db, f64::INFINITY);

        let mut zero = ch.clone();
        zero.dense.fill(C64::new(0.0, 0.0));
        let m = synthesize_measurements(&zero, &tx, &rx, &dt, &dr, 4.0, 0.0, &mut rng).unwrap();
        assert_eq!(m.observations.norm(), 0.0);
    }

    #[test]
    fn block_assembly_matches_kronecker_path() {
        let (dt, dr, tx, rx, mut rng) = setup(2);
        let ch = sample_channel(&dt, &dr, 2, GridMode::OnGrid, &mut rng).unwrap();
        let m = synthesize_measurements(&ch, &tx, &rx, &dt, &dr, 1.0, 0.0, &mut rng).unwrap();
        // Per-slot products W_q^H H F_p placed into the T_r x T_t grid.
        let mut y = CMat::zeros(4, 4);
        for p in 0..2 {
            for q in 0..2 {
                let fp = tx.analog.columns(2 * p, 2) * &tx.digital_blocks[p];
                let wq = rx.analog.columns(2 * q, 2) * &rx.digital_blocks[q];
                y.view_mut((2 * q, 2 * p), (2, 2)).copy_from(&(wq.adjoint() * &ch.dense * fp));
            }
        }
        assert!((vec(&y) - &m.observations).norm() < 1e-10);
    }

    #[test]
    fn noise_is_filtered_by_the_combiner() {
        let (dt, dr, tx, _, mut rng) = setup(3);
        let ch = sample_channel(&dt, &dr, 1, GridMode::OnGrid, &mut rng).unwrap();
        let rx = UnconstrainedSensing { beams: CMat::zeros(4, 4), streams_per_block: 2, side: Side::Receiver };
        let m = synthesize_measurements(&ch, &tx, &rx, &dt, &dr, 1.0, 1.0, &mut rng).unwrap();
        assert_eq!(m.observations.norm(), 0.0);
        assert!(matches!(
            synthesize_measurements(&ch, &tx, &rx, &dt, &dr, -1.0, 1.0, &mut rng),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            synthesize_measurements(&ch, &tx, &rx, &dt, &dr, 1.0, -1.0, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn omp_single_atom_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = complex_gaussian_matrix(10, 20, 1.0, &mut rng);
        let mut h = CVec::zeros(20);
        h[7] = C64::new(0.3, -1.2);
        let out = omp_recover(&q, &(&q * &h), 1, 1e-6).unwrap();
        assert_eq!(out.support, vec![7]);
        assert!((&out.coefficients - &h).norm() < 1e-10);

        let out = omp_recover(&q, &CVec::zeros(10), 3, 1e-6).unwrap();
        assert!(out.support.is_empty());
        assert_eq!(out.coefficients.norm(), 0.0);
        assert!(matches!(omp_recover(&q, &CVec::zeros(10), 0, 1e-6), Err(Error::Config(_))));
    }

    #[test]
    fn omp_residual_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = complex_gaussian_matrix(12, 30, 1.0, &mut rng);
        let y = CVec::from_column_slice(complex_gaussian_matrix(12, 1, 1.0, &mut rng).as_slice());
        let out = omp_recover(&q, &y, 8, 0.0).unwrap();
        assert!(out.residual_norms.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn omp_flags_dependent_columns() {
        let c = CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)]);
        let d = CVec::from_vec(vec![C64::new(0.0, 1.0), C64::new(1.0, 0.0)]);
        let q = CMat::from_columns(&[c.clone(), &c * C64::new(2.0, 0.0)]);
        let out = omp_recover(&q, &(&c + &d), 2, 0.0).unwrap();
        assert!(out.singular);
        assert_eq!(out.support, vec![0]);
        assert!((out.coefficients[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn reconstruction_cases() {
        let dt = build_dictionary(6, 8, 0.5).unwrap();
        let dr = build_dictionary(4, 6, 0.5).unwrap();
        let z = reconstruct_channel(&CVec::zeros(48), &dr.matrix, &dt.matrix).unwrap();
        assert_eq!(z, CMat::zeros(4, 6));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ch = sample_channel(&dt, &dr, 3, GridMode::OnGrid, &mut rng).unwrap();
        let h = reconstruct_channel(ch.angular_vector.as_ref().unwrap(), &dr.matrix, &dt.matrix).unwrap();
        assert!(frob_sq(&(h - &ch.dense)) < 1e-24);
        let h1 = CVec::from_column_slice(complex_gaussian_matrix(48, 1, 1.0, &mut rng).as_slice());
        let h2 = CVec::from_column_slice(complex_gaussian_matrix(48, 1, 1.0, &mut rng).as_slice());
        let (a, b) = (C64::new(0.5, 2.0), C64::new(-1.0, 0.25));
        let lhs = reconstruct_channel(&(&h1 * a + &h2 * b), &dr.matrix, &dt.matrix).unwrap();
        let rhs = reconstruct_channel(&h1, &dr.matrix, &dt.matrix).unwrap() * a
            + reconstruct_channel(&h2, &dr.matrix, &dt.matrix).unwrap() * b;
        assert!(frob_sq(&(lhs - rhs)).sqrt() < 1e-12);
        assert!(matches!(reconstruct_channel(&CVec::zeros(5), &dr.matrix, &dt.matrix), Err(Error::Shape(_))));
    }

    #[test]
    fn nmse_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = complex_gaussian_matrix(4, 6, 1.0, &mut rng);
        assert_eq!(nmse(&h, &h).unwrap(), (0.0, f64::NEG_INFINITY));
        let (l, d) = nmse(&h, &CMat::zeros(4, 6)).unwrap();
        assert!((l - 1.0).abs() < 1e-15 && d.abs() < 1e-12);
        let (l, _) = nmse(&h, &(&h * C64::new(2.0, 0.0))).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        assert!(matches!(nmse(&CMat::zeros(4, 6), &h), Err(Error::Domain(_))));
    }

    #[test]
    fn nmse_is_unitarily_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = complex_gaussian_matrix(4, 4, 1.0, &mut rng);
        let e = &h + complex_gaussian_matrix(4, 4, 0.1, &mut rng);
        let u = complex_gaussian_matrix(4, 4, 1.0, &mut rng).qr().q();
        let (a, _) = nmse(&h, &e).unwrap();
        let (b, _) = nmse(&(&u * &h), &(&u * &e)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn spectral_efficiency_cases() {
        let h0 = CMat::zeros(4, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let est = complex_gaussian_matrix(4, 6, 1.0, &mut rng);
        assert_eq!(spectral_efficiency(&h0, &est, 10.0, 2, 1.0).unwrap().bits_per_hz, 0.0);

        let a = CVec::from_column_slice(complex_gaussian_matrix(4, 1, 1.0, &mut rng).as_slice());
        let b = CVec::from_column_slice(complex_gaussian_matrix(6, 1, 1.0, &mut rng).as_slice());
        let h = &a * b.adjoint();
        let s = a.norm() * b.norm();
        let r = spectral_efficiency(&h, &h, 3.0, 1, 0.5).unwrap();
        assert!((r.bits_per_hz - (1.0 + 3.0 * s * s / 0.5).log2()).abs() < 1e-10);
        assert!(!r.regularized);
    }

    #[test]
    fn perfect_csi_beats_estimates() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut wins = 0;
        for _ in 0..20 {
            let h = complex_gaussian_matrix(4, 6, 1.0, &mut rng);
            let est = &h + complex_gaussian_matrix(4, 6, 0.5, &mut rng);
            let perfect = spectral_efficiency(&h, &h, 10.0, 2, 1.0).unwrap().bits_per_hz;
            let noisy = spectral_efficiency(&h, &est, 10.0, 2, 1.0).unwrap().bits_per_hz;
            if perfect >= noisy {
                wins += 1;
            }
        }
        assert!(wins >= 10);
    }

    #[test]
    fn end_to_end_noiseless_recovery() {
        let (dt, dr, tx, rx, mut rng) = setup(11);
        let ch = sample_channel(&dt, &dr, 1, GridMode::OnGrid, &mut rng).unwrap();
        let rep = estimate_channel(&ch, &tx, &rx, &dt, &dr, 100.0, 0.0, 1, &mut rng).unwrap();
        assert_eq!(rep.recovered_support, ch.support);
        assert!(rep.nmse_linear < 1e-18);
    }
}
