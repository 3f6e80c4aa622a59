use fetal_biometry::dod::{
    fit_orientation, project, reassign, GmmFitConfig, OrderingKey, ProjectionAxis,
};
use fetal_biometry::{ImageDims, LandmarkPair, MeasurementKind, NormalizedPoint, Point2D};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = ImageDims> {
    (16usize..800, 16usize..800).prop_map(|(w, h)| ImageDims::new(w, h))
}

fn pair_in(d: ImageDims) -> impl Strategy<Value = LandmarkPair> {
    let (w, h) = (d.width as f64, d.height as f64);
    (0.0..w, 0.0..h, 0.0..w, 0.0..h).prop_map(|(x1, y1, x2, y2)| LandmarkPair {
        first: Point2D { x: x1, y: y1 },
        second: Point2D { x: x2, y: y2 },
        measurement: MeasurementKind::Fl,
    })
}

fn axis() -> impl Strategy<Value = ProjectionAxis> {
    (0.0..std::f64::consts::TAU, -0.5..0.5f64, -0.5..0.5f64, any::<bool>()).prop_map(|(t, ox, oy, signed)| {
        let key = if signed {
            OrderingKey::SignedProjection
        } else {
            OrderingKey::AbsoluteProjection
        };
        ProjectionAxis {
            direction: [t.cos(), t.sin()],
            origin: [ox, oy],
            key,
        }
    })
}

fn rotate(v: [f64; 2], t: f64) -> [f64; 2] {
    let (s, c) = t.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn relabeling_ignores_input_label_order((d, pair) in dims().prop_flat_map(|d| (Just(d), pair_in(d))), axis in axis()) {
        let a = reassign(&pair, &axis, d).unwrap();
        let b = reassign(&pair.swapped(), &axis, d).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn relabeling_is_idempotent((d, pair) in dims().prop_flat_map(|d| (Just(d), pair_in(d))), axis in axis()) {
        let once = reassign(&pair, &axis, d).unwrap();
        prop_assert_eq!(reassign(&once, &axis, d).unwrap(), once);
    }

    #[test]
    fn relabeling_only_moves_labels((d, pair) in dims().prop_flat_map(|d| (Just(d), pair_in(d))), axis in axis()) {
        let out = reassign(&pair, &axis, d).unwrap();
        prop_assert!(out == pair || out == pair.swapped());
    }

    /// Rotating points, origin and direction together leaves projections unchanged.
    #[test]
    fn projection_is_rotation_invariant(
        u in -2.0..2.0f64,
        v in -2.0..2.0f64,
        axis in axis(),
        t in 0.0..std::f64::consts::TAU,
        len in 0.01..10.0f64,
    ) {
        let axis = ProjectionAxis { direction: [axis.direction[0] * len, axis.direction[1] * len], ..axis };
        let before = project(&NormalizedPoint { u, v }, &axis).unwrap();
        let p = rotate([u, v], t);
        let rotated = ProjectionAxis {
            direction: rotate(axis.direction, t),
            origin: rotate(axis.origin, t),
            key: axis.key,
        };
        let after = project(&NormalizedPoint { u: p[0], v: p[1] }, &rotated).unwrap();
        prop_assert!((before - after).abs() <= 1e-12 * (1.0 + before.abs()), "{before} vs {after}");
    }
}

#[test]
fn fitted_direction_ignores_annotation_order() {
    // the pooled point set is the same whichever endpoint is annotated first
    let d = ImageDims::new(200, 100);
    let pairs: Vec<(LandmarkPair, ImageDims)> = (0..40)
        .map(|i| {
            let j = i as f64;
            let pair = LandmarkPair {
                first: Point2D { x: 30.0 + (j * 0.7).sin() * 4.0, y: 50.0 + (j * 1.3).cos() * 4.0 },
                second: Point2D { x: 170.0 + (j * 0.9).cos() * 4.0, y: 48.0 + (j * 0.4).sin() * 4.0 },
                measurement: MeasurementKind::Fl,
            };
            (pair, d)
        })
        .collect();
    let swapped: Vec<_> = pairs
        .iter()
        .enumerate()
        .map(|(i, (p, d))| (if i % 3 == 0 { p.swapped() } else { *p }, *d))
        .collect();
    let a = fit_orientation(&pairs, &GmmFitConfig::default()).unwrap();
    let b = fit_orientation(&swapped, &GmmFitConfig::default()).unwrap();
    for k in 0..2 {
        assert!((a.direction[k] - b.direction[k]).abs() < 1e-9);
    }
    assert!(a.angle_degrees().abs() < 2.0);
}
