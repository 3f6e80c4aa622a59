use fetal_biometry::measure::{recover_scale, Rect, RulerTemplate};
use fetal_biometry::GrayImage;

/// Horizontal tick ruler: 2x5 ticks every `gap` px along row 8, on noise-free gray.
fn ruler(gap: usize, count: usize, width: usize) -> GrayImage {
    let mut img = GrayImage::from_fn(width, 40, |_, _| 0.2);
    for k in 0..count {
        let x0 = 6 + k * gap;
        for x in x0..x0 + 2 {
            for y in 6..11 {
                img.set(x, y, 0.9);
            }
        }
    }
    img
}

fn template(width: usize) -> RulerTemplate {
    let patch = GrayImage::from_fn(6, 9, |x, y| if (2..4).contains(&x) && (2..7).contains(&y) { 0.9 } else { 0.2 });
    RulerTemplate::new(patch, 1.0, Rect::new(0, 0, width, 20))
}

#[test]
fn ten_pixel_ruler_gives_a_tenth_of_a_millimeter() {
    let img = ruler(10, 15, 170);
    let r = recover_scale(&img, &template(170)).unwrap();
    assert_eq!(r.mm_per_pixel, 0.1);
    assert_eq!(r.peaks.len(), 15);
    assert!(r.peaks.windows(2).all(|w| w[0].x < w[1].x));
}

#[test]
fn one_spurious_marker_is_tolerated() {
    for offset in [3, 5, 7] {
        let mut img = ruler(10, 15, 170);
        let x0 = 6 + 7 * 10 + offset;
        for x in x0..x0 + 2 {
            for y in 6..11 {
                img.set(x, y, 0.9);
            }
        }
        let r = recover_scale(&img, &template(170)).unwrap();
        assert_eq!(r.mm_per_pixel, 0.1, "spurious tick at +{offset}");
    }
}

#[test]
fn content_outside_the_band_is_ignored() {
    let mut img = ruler(10, 12, 150);
    // a second "ruler" below the band with another spacing
    for k in 0..10 {
        for x in 6 + k * 7..8 + k * 7 {
            for y in 28..33 {
                img.set(x, y, 0.9);
            }
        }
    }
    let r = recover_scale(&img, &template(150)).unwrap();
    assert_eq!(r.mm_per_pixel, 0.1);
}

#[test]
fn too_few_markers_is_an_error() {
    let img = ruler(10, 2, 60);
    assert!(recover_scale(&img, &template(60)).is_err());
}
