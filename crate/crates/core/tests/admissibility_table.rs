mod common;

use admpriors::admissibility::{check_1d, check_bounded_boundary, Cutoffs, FaceSampling, Model, PriorFamily, Verdict};
use admpriors::covariance::{correlation_v, CovarianceModel};
use admpriors::grid::DomainSpec;
use admpriors::linalg::SymMat;
use common::*;
use proptest::prelude::*;

#[test]
fn correlation_family_matches_the_exact_rule() {
    for row in correlation_rows() {
        assert!(row.as_expected(), "{}: exact {:?}, numeric {:?}", row.label, row.exact, row.numeric);
    }
}

#[test]
fn radial_family_exact_and_numeric_agree() {
    for row in radial_rows() {
        assert!(row.agrees(), "{}: exact {:?}, numeric {:?}", row.label, row.exact, row.numeric);
    }
    // The single admissible exponent is 2 - d.
    for d in 1..=3usize {
        assert_eq!(numeric_radial(2.0 - d as f64, d), Verdict::Admissible);
    }
}

#[test]
fn radial_uniform_condition_holds_up_to_two() {
    for row in uniform_rows() {
        assert!(row.as_expected(), "{}: exact {:?}, numeric {:?}", row.label, row.exact, row.numeric);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn verdicts_depend_only_on_the_product(log_c in -8.0f64..8.0, alpha in 0.0f64..2.0) {
        let c = log_c.exp();
        let pv = move |r: f64| (1.0 - r * r).powf(-alpha) * correlation_v(r);
        let a = check_1d(pv, -1.0, 1.0, &Cutoffs::default()).unwrap();
        let b = check_1d(move |r| c * pv(r), -1.0, 1.0, &Cutoffs::default()).unwrap();
        prop_assert_eq!(a.verdict, b.verdict);

        let domain = DomainSpec::walled(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let d2 = domain.clone();
        let p = PriorFamily::custom(2, move |x| d2.distance_to_walls(x).powf(alpha));
        let d3 = domain.clone();
        let cp = PriorFamily::custom(2, move |x| c * d3.distance_to_walls(x).powf(alpha));
        let v = CovarianceModel::Identity { dim: 2 };
        let v_over_c = CovarianceModel::Constant(SymMat::diag(&[1.0 / c; 2]));
        let cut = Cutoffs::default();
        let x = check_bounded_boundary(&Model { prior: &p, covariance: &v }, &domain, &cut, &FaceSampling { points_per_axis: 3 }).unwrap();
        let y = check_bounded_boundary(&Model { prior: &cp, covariance: &v_over_c }, &domain, &cut, &FaceSampling { points_per_axis: 3 }).unwrap();
        prop_assert_eq!(x.verdict, y.verdict);
    }
}

#[test]
fn attenuation_repairs_a_failing_wall() {
    let (before, after) = attenuation_verdicts();
    assert_eq!(before.verdict, Verdict::Inadmissible);
    assert_eq!(after.verdict, Verdict::Admissible);
}
