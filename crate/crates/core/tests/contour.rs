use proptest::prelude::*;
use zeno_schur::contour::{extract, ScalarField};
use zeno_schur::ensemble::linspace;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn circle_level_set(r in 0.3f64..0.9, n in 15usize..60) {
        let x = linspace(-1.0, 1.0, n);
        let h = x[1] - x[0];
        let f = ScalarField::from_fn(x.clone(), x, |a, b| (a * a + b * b).sqrt());
        let c = extract(&f, r);
        prop_assert!(!c.empty);
        prop_assert_eq!(c.components, 1);
        for (a, b) in c.points() {
            prop_assert!(((a * a + b * b).sqrt() - r).abs() <= h * h);
        }
        let line = &c.polylines[0];
        prop_assert_eq!(line.first(), line.last());
    }

    /// Linear fields are reproduced exactly by linear interpolation.
    #[test]
    fn linear_field_is_exact(a in 0.1f64..3.0, b in -3.0f64..3.0, level in -1.0f64..1.0) {
        let x = linspace(0.0, 1.0, 11);
        let y = linspace(0.0, 1.0, 13);
        let f = ScalarField::from_fn(x, y, |u, v| a * u + b * v);
        let c = extract(&f, level);
        for (u, v) in c.points() {
            prop_assert!((a * u + b * v - level).abs() < 1e-12);
        }
    }
}

#[test]
fn undefined_nodes_are_skipped_not_fatal() {
    let x = linspace(0.0, 1.0, 5);
    let f = ScalarField::from_fn(x.clone(), x, |u, v| if u > 0.7 && v > 0.7 { f64::NAN } else { u - 0.5 });
    let c = extract(&f, 0.0);
    assert!(!c.skipped_cells.is_empty());
    assert!(c.points().all(|(u, _)| (u - 0.5).abs() < 1e-12));
}

#[test]
fn flat_field_has_empty_contour() {
    let x = linspace(0.0, 1.0, 4);
    let c = extract(&ScalarField::from_fn(x.clone(), x, |_, _| 2.0), 0.5);
    assert!(c.empty && c.polylines.is_empty() && c.components == 0);
}
