//! Direct least-squares ellipse fitting.
//!
//! Uses the scatter-matrix partitioning form of the ellipse-specific conic
//! fit, which stays well conditioned for noiseless data and near-circles.
//! Points are centered and scaled before fitting; the geometric result is
//! mapped back afterwards.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LandmarkPair, MeasurementKind, Point2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: Point2D,
    /// Semi-major axis.
    pub a: f64,
    /// Semi-minor axis.
    pub b: f64,
    /// Major-axis angle from +x in `[0, pi)`.
    pub theta: f64,
}

impl Ellipse {
    pub fn new(center: Point2D, a: f64, b: f64, theta: f64) -> Result<Self> {
        if !(b > 0.0) || !(a >= b) || !a.is_finite() || !center.is_finite() {
            return Err(Error::domain(format!(
                "ellipse axes must satisfy a >= b > 0, got a={a}, b={b}"
            )));
        }
        Ok(Self {
            center,
            a,
            b,
            theta: theta.rem_euclid(PI),
        })
    }

    /// Point at parameter `t` (radians) on the boundary.
    pub fn point_at(&self, t: f64) -> Point2D {
        let (s, c) = self.theta.sin_cos();
        let (x, y) = (self.a * t.cos(), self.b * t.sin());
        Point2D::new(self.center.x + c * x - s * y, self.center.y + s * x + c * y)
    }

    /// `true` when `p` lies inside or on the boundary.
    pub fn contains(&self, p: &Point2D) -> bool {
        let (s, c) = self.theta.sin_cos();
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

/// Fits an ellipse to at least six boundary points.
pub fn fit_ellipse(points: &[Point2D]) -> Result<Ellipse> {
    if points.len() < 6 {
        return Err(Error::EllipseFit(format!(
            "need at least 6 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::EllipseFit("non-finite point".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let spread = (points
        .iter()
        .map(|p| (p.x - mx).powi(2) + (p.y - my).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if !(spread > 0.0) {
        return Err(Error::EllipseFit("all points coincide".into()));
    }
    let norm: Vec<(f64, f64)> = points
        .iter()
        .map(|p| ((p.x - mx) / spread, (p.y - my) / spread))
        .collect();

    // quadratic part [x², xy, y²] and linear part [x, y, 1]
    let mut s1 = Matrix3::<f64>::zeros();
    let mut s2 = Matrix3::<f64>::zeros();
    let mut s3 = Matrix3::<f64>::zeros();
    for &(x, y) in &norm {
        let q = Vector3::new(x * x, x * y, y * y);
        let l = Vector3::new(x, y, 1.0);
        s1 += q * q.transpose();
        s2 += q * l.transpose();
        s3 += l * l.transpose();
    }
    let s3_inv = s3
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::EllipseFit("points are collinear".into()))?;
    // reject near-collinear input: the linear scatter must have full rank
    let s3_eig = s3.symmetric_eigenvalues();
    if s3_eig.min() <= 1e-10 * s3_eig.max() {
        return Err(Error::EllipseFit("points are collinear".into()));
    }
    let t = -(s3_inv * s2.transpose());
    let reduced = s1 + s2 * t;
    // inverse of the ellipse constraint matrix restricted to the quadratic part
    let c1_inv = Matrix3::new(0.0, 0.0, 0.5, 0.0, -1.0, 0.0, 0.5, 0.0, 0.0);
    let m = c1_inv * reduced;

    let eigenvalues = real_eigenvalues(&m)
        .ok_or_else(|| Error::EllipseFit("conic eigenproblem has no real solution".into()))?;
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in eigenvalues {
        let Some(v) = null_vector(&(m - Matrix3::identity() * lambda)) else {
            continue;
        };
        let constraint = 4.0 * v[0] * v[2] - v[1] * v[1];
        if constraint > 0.0 && best.map_or(true, |(l, _)| lambda.abs() < l.abs()) {
            best = Some((lambda, v));
        }
    }
    let (_, a1) = best.ok_or_else(|| Error::EllipseFit("no elliptic solution".into()))?;
    let a2 = t * a1;
    let conic = [a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]];
    let e = conic_to_ellipse(conic)?;
    Ellipse::new(
        Point2D::new(mx + spread * e.center.x, my + spread * e.center.y),
        spread * e.a,
        spread * e.b,
        e.theta,
    )
}

fn real_eigenvalues(m: &Matrix3<f64>) -> Option<Vec<f64>> {
    let complex = m.complex_eigenvalues();
    let scale = m.norm().max(1e-300);
    let real: Vec<f64> = complex
        .iter()
        .filter(|z| z.im.abs() <= 1e-9 * scale)
        .map(|z| z.re)
        .collect();
    (!real.is_empty()).then_some(real)
}

/// Right singular vector of the smallest singular value.
fn null_vector(m: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let svd = m.svd(false, true);
    let v_t = svd.v_t?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    Some(v_t.row(idx).transpose())
}

/// Converts `A x² + B xy + C y² + D x + E y + F = 0` to geometric form.
fn conic_to_ellipse(coeffs: [f64; 6]) -> Result<Ellipse> {
    let sign = if coeffs[0] + coeffs[2] < 0.0 { -1.0 } else { 1.0 };
    let [a, b, c, d, e, f] = coeffs.map(|v| v * sign);
    let det = a * c - 0.25 * b * b;
    if !(det > 0.0) {
        return Err(Error::EllipseFit("conic is not an ellipse".into()));
    }
    // center: gradient of the conic vanishes
    let x0 = (b * e - 2.0 * c * d) / (4.0 * det);
    let y0 = (b * d - 2.0 * a * e) / (4.0 * det);
    let f0 = f + 0.5 * (d * x0 + e * y0);
    let half_trace = 0.5 * (a + c);
    let disc = (0.25 * (a - c).powi(2) + 0.25 * b * b).sqrt();
    let l_small = half_trace - disc;
    let l_large = half_trace + disc;
    if !(f0 < 0.0) || !(l_small > 0.0) {
        return Err(Error::EllipseFit("conic has no real points".into()));
    }
    let major = (-f0 / l_small).sqrt();
    let minor = (-f0 / l_large).sqrt();
    // eigenvector of the smaller eigenvalue gives the major axis
    let (v1, v2) = ((l_small - c, 0.5 * b), (0.5 * b, l_small - a));
    let (vx, vy) = if v1.0.hypot(v1.1) >= v2.0.hypot(v2.1) { v1 } else { v2 };
    let theta = if vx == 0.0 && vy == 0.0 { 0.0 } else { vy.atan2(vx) };
    Ellipse::new(Point2D::new(x0, y0), major, minor, theta)
}

/// Axis endpoints of a head ellipse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisLandmarks {
    /// Major axis.
    pub ofd: LandmarkPair,
    /// Minor axis.
    pub bpd: LandmarkPair,
}

/// OFD endpoints are `center ± a (cos θ, sin θ)`, BPD endpoints are
/// `center ± b (-sin θ, cos θ)`; the minus end is labeled first.
pub fn ellipse_axis_landmarks(e: &Ellipse) -> AxisLandmarks {
    let (s, c) = e.theta.sin_cos();
    let o = e.center;
    let at = |dx: f64, dy: f64| Point2D::new(o.x + dx, o.y + dy);
    AxisLandmarks {
        ofd: LandmarkPair {
            first: at(-e.a * c, -e.a * s),
            second: at(e.a * c, e.a * s),
            measurement: MeasurementKind::Ofd,
        },
        bpd: LandmarkPair {
            first: at(e.b * s, -e.b * c),
            second: at(-e.b * s, e.b * c),
            measurement: MeasurementKind::Bpd,
        },
    }
}
