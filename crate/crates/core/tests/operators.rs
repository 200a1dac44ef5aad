mod common;

use admpriors::grid::{divergence_form_apply, ScalarField};
use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn divergence_form_is_linear(
        us in proptest::collection::vec(-1.0f64..1.0, 121),
        vs in proptest::collection::vec(-1.0f64..1.0, 121),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let g = grid(&[0.0, 0.0], &[1.0, 1.0], &[11, 11]);
        let a = tensor(&g, smooth_v);
        let u = ScalarField::new(g.clone(), us.clone()).unwrap();
        let v = ScalarField::new(g.clone(), vs.clone()).unwrap();
        let mix = ScalarField::new(g.clone(), us.iter().zip(&vs).map(|(x, y)| alpha * x + beta * y).collect()).unwrap();
        let (lu, lv, lm) = (divergence_form_apply(&a, &u).unwrap(), divergence_form_apply(&a, &v).unwrap(), divergence_form_apply(&a, &mix).unwrap());
        for k in g.interior_nodes() {
            let want = alpha * lu.get(k) + beta * lv.get(k);
            let scale = alpha.abs() * lu.get(k).abs() + beta.abs() * lv.get(k).abs() + 1.0;
            prop_assert!((lm.get(k) - want).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn integration_by_parts_is_second_order() {
    let gaps: Vec<f64> = [21, 41, 81].iter().map(|n| integration_by_parts_gap(*n)).collect();
    assert!(gaps[2] < 1e-3 * 0.5, "{gaps:?}");
    for w in gaps.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.0..=5.0).contains(&ratio), "{gaps:?}");
    }
}

#[test]
fn operator_converges_at_second_order() {
    let errs: Vec<f64> = [21, 41, 81].iter().map(|n| operator_error(*n)).collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}, errors {errs:?}");
    }
}
