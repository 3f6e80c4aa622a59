//! Gaussian heatmap targets, argmax decoding and the MSE training loss.
//!
//! Heatmap cell `(i, j)` covers input pixels `[stride*j, stride*(j+1))` and
//! maps back to the input position `stride * (j + 1/2)`.

use ndarray::{Array3, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ImageDims, LandmarkPair, MeasurementKind, Point2D};

/// Where the target Gaussian is centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetCenter {
    /// The grid cell nearest to the landmark (peak value exactly 1).
    #[default]
    NearestCell,
    /// The continuous landmark position on the grid.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapConfig {
    /// Gaussian standard deviation in heatmap cells.
    pub sigma: f64,
    /// Input pixels per heatmap cell.
    pub stride: usize,
    /// Half-width of the square support window, in heatmap cells.
    pub truncation_radius: f64,
    #[serde(default)]
    pub target_center: TargetCenter,
    /// Quadratic sub-cell refinement of the decoded argmax.
    #[serde(default)]
    pub subpixel_refinement: bool,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            stride: 4,
            truncation_radius: 6.0,
            target_center: TargetCenter::NearestCell,
            subpixel_refinement: false,
        }
    }
}

impl HeatmapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::domain("heatmap sigma must be positive"));
        }
        if self.stride == 0 {
            return Err(Error::domain("heatmap stride must be at least 1"));
        }
        if self.truncation_radius < 3.0 * self.sigma {
            return Err(Error::domain(format!(
                "truncation radius {} is below 3 sigma ({})",
                self.truncation_radius,
                3.0 * self.sigma
            )));
        }
        Ok(())
    }

    /// Heatmap grid size `(rows, cols)` for an input image.
    pub fn grid(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        if height % self.stride != 0 || width % self.stride != 0 {
            return Err(Error::domain(format!(
                "input {width}x{height} is not divisible by stride {}",
                self.stride
            )));
        }
        Ok((height / self.stride, width / self.stride))
    }

    /// Continuous grid coordinate of an input-space position.
    pub fn to_grid(&self, p: &Point2D) -> (f64, f64) {
        let s = self.stride as f64;
        (p.y / s - 0.5, p.x / s - 0.5)
    }

    /// Input-space position of a (possibly fractional) grid coordinate.
    pub fn to_input(&self, row: f64, col: f64) -> Point2D {
        let s = self.stride as f64;
        Point2D::new(s * (col + 0.5), s * (row + 0.5))
    }
}

/// Per-landmark response maps: channel 0 is class 1, channel 1 is class 2.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    /// Shape `(2, rows, cols)`.
    pub maps: Array3<f64>,
    pub stride: usize,
}

impl HeatmapStack {
    pub fn new(maps: Array3<f64>, stride: usize) -> Result<Self> {
        if maps.shape()[0] != 2 {
            return Err(Error::domain(format!(
                "heatmap stack needs 2 channels, got {}",
                maps.shape()[0]
            )));
        }
        if maps.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("heatmap contains non-finite values"));
        }
        Ok(Self { maps, stride })
    }

    pub fn zeros(rows: usize, cols: usize, stride: usize) -> Self {
        Self {
            maps: Array3::zeros((2, rows, cols)),
            stride,
        }
    }

    pub fn rows(&self) -> usize {
        self.maps.shape()[1]
    }

    pub fn cols(&self) -> usize {
        self.maps.shape()[2]
    }
}

/// Renders one Gaussian channel centered at the grid coordinate `(cy, cx)`.
fn render_channel(
    out: &mut ndarray::ArrayViewMut2<f64>,
    cy: f64,
    cx: f64,
    config: &HeatmapConfig,
) {
    let (rows, cols) = out.dim();
    let r = config.truncation_radius;
    let denom = 2.0 * config.sigma * config.sigma;
    let i0 = (cy - r).ceil().max(0.0) as usize;
    let j0 = (cx - r).ceil().max(0.0) as usize;
    let i1 = ((cy + r).floor() as isize).min(rows as isize - 1);
    let j1 = ((cx + r).floor() as isize).min(cols as isize - 1);
    if i1 < 0 || j1 < 0 {
        return;
    }
    for i in i0..=i1 as usize {
        let dy = i as f64 - cy;
        for j in j0..=j1 as usize {
            let dx = j as f64 - cx;
            out[(i, j)] = (-(dx * dx + dy * dy) / denom).exp();
        }
    }
}

/// Encodes a landmark pair of an `width x height` input as Gaussian targets.
pub fn encode(pair: &LandmarkPair, height: usize, width: usize, config: &HeatmapConfig) -> Result<HeatmapStack> {
    config.validate()?;
    let (rows, cols) = config.grid(height, width)?;
    let dims = ImageDims::new(width, height);
    let mut stack = HeatmapStack::zeros(rows, cols, config.stride);
    for (k, p) in pair.points().iter().enumerate() {
        if !dims.contains(p) {
            return Err(Error::domain(format!(
                "landmark ({}, {}) outside {width}x{height} input",
                p.x, p.y
            )));
        }
        let (gy, gx) = config.to_grid(p);
        let (cy, cx) = match config.target_center {
            TargetCenter::NearestCell => (
                gy.round().clamp(0.0, (rows - 1) as f64),
                gx.round().clamp(0.0, (cols - 1) as f64),
            ),
            TargetCenter::Continuous => (gy, gx),
        };
        let mut channel = stack.maps.index_axis_mut(ndarray::Axis(0), k);
        render_channel(&mut channel, cy, cx, config);
    }
    Ok(stack)
}

/// Decoded landmark pair with per-channel peak values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedPair {
    /// May hold coincident points when both channels peak in the same cell.
    pub pair: LandmarkPair,
    pub confidence: [f64; 2],
    /// Set for channels without a unique maximum (constant maps).
    pub low_confidence: [bool; 2],
}

impl DecodedPair {
    pub fn is_low_confidence(&self) -> bool {
        self.low_confidence.iter().any(|f| *f)
    }
}

fn parabola_offset(left: f64, center: f64, right: f64) -> f64 {
    let denom = left - 2.0 * center + right;
    if denom >= 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Decodes each channel's argmax (first in row-major order on ties) back to
/// input pixels.
pub fn decode(stack: &HeatmapStack, measurement: MeasurementKind, subpixel: bool) -> Result<DecodedPair> {
    if stack.maps.shape()[0] != 2 {
        return Err(Error::domain("heatmap stack needs 2 channels"));
    }
    if stack.maps.is_empty() {
        return Err(Error::domain("heatmap stack is empty"));
    }
    let config = HeatmapConfig {
        stride: stack.stride,
        ..HeatmapConfig::default()
    };
    let (rows, cols) = (stack.rows(), stack.cols());
    let mut points = [Point2D::default(); 2];
    let mut confidence = [0.0; 2];
    let mut low = [false; 2];
    for k in 0..2 {
        let channel = stack.maps.index_axis(ndarray::Axis(0), k);
        let mut best = (0usize, 0usize);
        let mut best_v = f64::NEG_INFINITY;
        let mut min_v = f64::INFINITY;
        for ((i, j), v) in channel.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::domain("heatmap contains non-finite values"));
            }
            if *v > best_v {
                best_v = *v;
                best = (i, j);
            }
            min_v = min_v.min(*v);
        }
        low[k] = best_v == min_v;
        confidence[k] = best_v;
        let (i, j) = best;
        let (mut fi, mut fj) = (i as f64, j as f64);
        if subpixel && !low[k] {
            if j > 0 && j + 1 < cols {
                fj += parabola_offset(channel[(i, j - 1)], best_v, channel[(i, j + 1)]);
            }
            if i > 0 && i + 1 < rows {
                fi += parabola_offset(channel[(i - 1, j)], best_v, channel[(i + 1, j)]);
            }
        }
        points[k] = config.to_input(fi, fj);
    }
    Ok(DecodedPair {
        pair: LandmarkPair {
            first: points[0],
            second: points[1],
            measurement,
        },
        confidence,
        low_confidence: low,
    })
}

fn check_shapes(predicted: &HeatmapStack, target: &HeatmapStack) -> Result<()> {
    if predicted.maps.shape() != target.maps.shape() {
        return Err(Error::domain(format!(
            "heatmap shape mismatch: {:?} vs {:?}",
            predicted.maps.shape(),
            target.maps.shape()
        )));
    }
    Ok(())
}

/// Mean over channels and cells of the squared difference.
pub fn mse_loss(predicted: &HeatmapStack, target: &HeatmapStack) -> Result<f64> {
    check_shapes(predicted, target)?;
    let n = predicted.maps.len() as f64;
    let mut acc = 0.0;
    Zip::from(&predicted.maps)
        .and(&target.maps)
        .for_each(|p, t| acc += (p - t) * (p - t));
    Ok(acc / n)
}

/// Gradient of [`mse_loss`] with respect to `predicted`.
pub fn mse_loss_grad(predicted: &HeatmapStack, target: &HeatmapStack) -> Result<Array3<f64>> {
    check_shapes(predicted, target)?;
    let scale = 2.0 / predicted.maps.len() as f64;
    Ok(Zip::from(&predicted.maps)
        .and(&target.maps)
        .map_collect(|p, t| scale * (p - t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pair(a: (f64, f64), b: (f64, f64)) -> LandmarkPair {
        LandmarkPair::new(Point2D::new(a.0, a.1), Point2D::new(b.0, b.1), MeasurementKind::Fl).unwrap()
    }

    #[test]
    fn grid_aligned_landmark_peaks_at_one() {
        let cfg = HeatmapConfig::default();
        // cell (5, 3) has input center (14, 22)
        let stack = encode(&pair((14.0, 22.0), (40.0, 40.0)), 64, 64, &cfg).unwrap();
        assert_eq!(stack.maps[(0, 5, 3)], 1.0);
        assert_eq!(stack.maps.shape(), &[2, 16, 16]);
        let at_sigma = stack.maps[(0, 5, 5)];
        assert!((at_sigma - (-0.5f64).exp()).abs() < 1e-12);
        assert!((at_sigma - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn channel_mass_matches_unnormalized_gaussian() {
        let cfg = HeatmapConfig::default();
        let stack = encode(&pair((62.0, 62.0), (130.0, 70.0)), 256, 256, &cfg).unwrap();
        let expected = 2.0 * PI * cfg.sigma * cfg.sigma;
        for k in 0..2 {
            let sum = stack.maps.index_axis(ndarray::Axis(0), k).sum();
            assert!((sum - expected).abs() / expected < 0.01, "channel {k}: {sum} vs {expected}");
        }
    }

    #[test]
    fn truncation_zeroes_far_cells() {
        let cfg = HeatmapConfig::default();
        let stack = encode(&pair((62.0, 62.0), (130.0, 70.0)), 256, 256, &cfg).unwrap();
        // center cell (15, 15); 7 cells away is outside the 6-cell window
        assert_eq!(stack.maps[(0, 15, 22)], 0.0);
        assert!(stack.maps[(0, 15, 21)] > 0.0);
    }

    #[test]
    fn encode_rejects_out_of_bounds() {
        let cfg = HeatmapConfig::default();
        assert!(encode(&pair((64.0, 3.0), (3.0, 3.0)), 64, 64, &cfg).is_err());
        assert!(encode(&pair((6.0, 3.0), (3.0, 3.0)), 62, 64, &cfg).is_err());
    }

    #[test]
    fn single_hot_cell_decodes_to_its_center() {
        let mut stack = HeatmapStack::zeros(8, 8, 4);
        stack.maps[(0, 2, 5)] = 0.7;
        stack.maps[(1, 7, 0)] = 0.2;
        let d = decode(&stack, MeasurementKind::Fl, false).unwrap();
        assert_eq!(d.pair.first, Point2D::new(22.0, 10.0));
        assert_eq!(d.pair.second, Point2D::new(2.0, 30.0));
        assert_eq!(d.confidence, [0.7, 0.2]);
        assert!(!d.is_low_confidence());
    }

    #[test]
    fn uniform_channel_is_low_confidence_at_origin_cell() {
        let mut stack = HeatmapStack::zeros(4, 4, 4);
        stack.maps.index_axis_mut(ndarray::Axis(0), 0).fill(0.3);
        stack.maps[(1, 1, 1)] = 1.0;
        let d = decode(&stack, MeasurementKind::Bpd, false).unwrap();
        assert_eq!(d.pair.first, Point2D::new(2.0, 2.0));
        assert_eq!(d.low_confidence, [true, false]);
    }

    #[test]
    fn ties_pick_first_row_major() {
        let mut stack = HeatmapStack::zeros(4, 4, 2);
        stack.maps[(0, 2, 1)] = 1.0;
        stack.maps[(0, 1, 3)] = 1.0;
        stack.maps[(1, 0, 0)] = 1.0;
        let d = decode(&stack, MeasurementKind::Fl, false).unwrap();
        assert_eq!(d.pair.first, Point2D::new(7.0, 3.0));
    }

    #[test]
    fn continuous_targets_support_subpixel_decoding() {
        let cfg = HeatmapConfig {
            target_center: TargetCenter::Continuous,
            ..HeatmapConfig::default()
        };
        let p = pair((21.3, 37.9), (50.2, 12.6));
        let stack = encode(&p, 64, 64, &cfg).unwrap();
        let coarse = decode(&stack, MeasurementKind::Fl, false).unwrap();
        let fine = decode(&stack, MeasurementKind::Fl, true).unwrap();
        let err = |q: &LandmarkPair| {
            (q.first.x - p.first.x).abs().max((q.first.y - p.first.y).abs())
        };
        assert!(err(&fine.pair) < err(&coarse.pair));
        assert!(err(&fine.pair) < 0.25);
    }

    #[test]
    fn mse_examples() {
        let cfg = HeatmapConfig::default();
        let a = encode(&pair((10.0, 10.0), (2.0, 2.0)), 16, 16, &cfg).unwrap();
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let zero = HeatmapStack::zeros(4, 4, 4);
        let expected = a.maps.iter().map(|v| v * v).sum::<f64>() / 32.0;
        assert!((mse_loss(&a, &zero).unwrap() - expected).abs() < 1e-15);
        assert_eq!(mse_loss(&a, &zero).unwrap(), mse_loss(&zero, &a).unwrap());
        assert!(mse_loss(&a, &HeatmapStack::zeros(4, 5, 4)).is_err());
    }

    #[test]
    fn mse_of_hand_built_4x4_stack() {
        // one channel holds 1 at a single cell, the other holds 0.5 at two cells
        let mut t = HeatmapStack::zeros(4, 4, 1);
        t.maps[(0, 1, 1)] = 1.0;
        t.maps[(1, 0, 0)] = 0.5;
        t.maps[(1, 3, 3)] = 0.5;
        let zero = HeatmapStack::zeros(4, 4, 1);
        // (1 + 0.25 + 0.25) / 32
        assert!((mse_loss(&t, &zero).unwrap() - 1.5 / 32.0).abs() < 1e-15);
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let shape = (2, 3, 4);
        let p = HeatmapStack::new(Array3::from_shape_fn(shape, |_| rng.random::<f64>()), 1).unwrap();
        let t = HeatmapStack::new(Array3::from_shape_fn(shape, |_| rng.random::<f64>()), 1).unwrap();
        let g = mse_loss_grad(&p, &t).unwrap();
        let h = 1e-6;
        for (idx, analytic) in g.indexed_iter() {
            let mut plus = p.clone();
            plus.maps[idx] += h;
            let mut minus = p.clone();
            minus.maps[idx] -= h;
            let fd = (mse_loss(&plus, &t).unwrap() - mse_loss(&minus, &t).unwrap()) / (2.0 * h);
            assert!((fd - analytic).abs() <= 1e-5 * analytic.abs().max(1e-3), "{idx:?}: {fd} vs {analytic}");
        }
    }

    #[test]
    fn shifting_by_stride_shifts_one_cell() {
        let cfg = HeatmapConfig::default();
        let a = encode(&pair((18.0, 22.0), (42.0, 30.0)), 64, 64, &cfg).unwrap();
        let b = encode(&pair((22.0, 22.0), (46.0, 30.0)), 64, 64, &cfg).unwrap();
        for k in 0..2 {
            for i in 0..16 {
                for j in 0..15 {
                    assert_eq!(a.maps[(k, i, j)], b.maps[(k, i, j + 1)]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn roundtrip_within_half_stride(x in 0.0f64..64.0, y in 0.0f64..64.0) {
            let cfg = HeatmapConfig::default();
            let other = if x < 32.0 { (60.0, 60.0) } else { (1.0, 1.0) };
            let p = pair((x, y), other);
            let d = decode(&encode(&p, 64, 64, &cfg).unwrap(), MeasurementKind::Fl, false).unwrap();
            let half = cfg.stride as f64 / 2.0;
            prop_assert!((d.pair.first.x - x).abs() <= half);
            prop_assert!((d.pair.first.y - y).abs() <= half);
        }
    }
}
