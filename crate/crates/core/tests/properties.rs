use std::f64::consts::PI;

use beamforge::hybrid_inf::project_psd;
use beamforge::hybrid_low::quantize_phases;
use beamforge::linalg::{hermitian_defect, hermitian_eigh, invec, real_inner, vec};
use beamforge::manifold::{modulus_defect, project_tangent, retract, CirclePoint};
use beamforge::metrics::{histogram_of, scaled_identity_objective};
use beamforge::{CMat, CVec, PhaseSet, C64};
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = C64> {
    (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(re, im)| C64::new(re, im))
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec(complex(), rows * cols).prop_map(move |d| CMat::from_column_slice(rows, cols, &d))
}

fn unit_vector(n: usize) -> impl Strategy<Value = CirclePoint> {
    prop::collection::vec(-PI..PI, n)
        .prop_map(|t| CirclePoint::new(CVec::from_iterator(t.len(), t.iter().map(|&a| C64::from_polar(1.0, a)))).unwrap())
}

proptest! {
    #[test]
    fn vec_invec_round_trip(m in (1usize..6, 1usize..6).prop_flat_map(|(r, c)| matrix(r, c))) {
        prop_assert_eq!(invec(&vec(&m), m.nrows(), m.ncols()), m);
    }

    #[test]
    fn quantization_error_is_at_most_half_a_bin(m in matrix(4, 3), bits in 1u32..5) {
        let set = PhaseSet::with_bits(bits).unwrap();
        let q = quantize_phases(&m, set);
        let half_bin = PI / (1u32 << bits) as f64;
        for (z, p) in m.iter().zip(q.iter()) {
            prop_assert!(set.contains(*p, 1e-12));
            if z.norm() > 1e-9 {
                let d = (z.arg() - p.arg()).rem_euclid(2.0 * PI);
                prop_assert!(d.min(2.0 * PI - d) <= half_bin + 1e-12);
            }
        }
    }

    #[test]
    fn retraction_stays_on_the_manifold(x in unit_vector(8), d in prop::collection::vec(complex(), 8), step in 0.0f64..5.0) {
        let d = CVec::from_vec(d);
        let t = project_tangent(&x, &d).unwrap();
        for (xi, ti) in x.values().iter().zip(t.iter()) {
            prop_assert!((ti * xi.conj()).re.abs() < 1e-12);
        }
        if let Ok(next) = retract(&x, &t, step) {
            prop_assert!(modulus_defect(next.values()) < 1e-14);
        }
        prop_assert!(real_inner(&d, &t) >= -1e-12);
    }

    #[test]
    fn psd_projection_is_hermitian_psd_and_idempotent(m in matrix(4, 4)) {
        let p = project_psd(&m);
        prop_assert!(hermitian_defect(&p) < 1e-12);
        let (values, _) = hermitian_eigh(&p);
        let scale = 1.0 + p.norm();
        prop_assert!(values.iter().all(|&v| v >= -1e-12 * scale));
        prop_assert!((project_psd(&p) - &p).norm() < 1e-10 * scale);
    }

    #[test]
    fn scaled_objective_is_invariant_to_scaling(q in matrix(3, 5), s in 0.1f64..10.0) {
        let a = scaled_identity_objective(&q).unwrap();
        let b = scaled_identity_objective(&(q * C64::new(s, 0.0))).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-9 * (1.0 + a.value));
        prop_assert!((a.zeta / (s * s) - b.zeta).abs() < 1e-9 * a.zeta.abs().max(1e-12) / (s * s));
    }

    #[test]
    fn histogram_counts_every_value(values in prop::collection::vec(0.0f64..=1.0, 0..200), bins in 1usize..30) {
        let h = histogram_of(&values, bins).unwrap();
        prop_assert_eq!(h.len(), bins);
        prop_assert_eq!(h.iter().map(|b| b.count).sum::<u64>(), values.len() as u64);
        prop_assert_eq!(h[bins - 1].high, 1.0);
    }
}
