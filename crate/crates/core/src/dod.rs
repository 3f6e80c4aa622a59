//! Dynamic orientation determination.
//!
//! A two-component Gaussian mixture is fitted to the pooled, normalized
//! landmark positions of one measurement type. The vector between the two
//! fitted centroids is the measurement's orientation. During training every
//! (augmented) landmark pair is relabeled by projecting both points onto that
//! vector and sorting, so the class-1/class-2 labels stay tied to image
//! geometry no matter how the sample was rotated.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize, ImageDims, LandmarkPair, MeasurementKind, NormalizedPoint};

/// Minimum centroid separation (normalized units) for a usable orientation.
pub const MIN_CENTROID_SEPARATION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmFitConfig {
    pub max_iterations: usize,
    /// Absolute change in total log-likelihood that ends the EM loop.
    pub log_likelihood_tolerance: f64,
    /// Smallest eigenvalue allowed in a component covariance.
    pub covariance_floor: f64,
    pub seed: u64,
}

impl Default for GmmFitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            log_likelihood_tolerance: 1e-9,
            covariance_floor: 1e-6,
            seed: 0,
        }
    }
}

impl GmmFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::domain("max_iterations must be at least 1"));
        }
        if !(self.log_likelihood_tolerance > 0.0) || !(self.covariance_floor > 0.0) {
            return Err(Error::domain("GMM tolerances must be positive"));
        }
        Ok(())
    }
}

/// One bivariate Gaussian of the mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: [f64; 2],
    /// Symmetric positive-definite covariance, row-major.
    pub covariance: [[f64; 2]; 2],
    pub weight: f64,
}

impl GaussianComponent {
    fn log_density(&self, p: [f64; 2]) -> f64 {
        let [[a, b], [_, c]] = self.covariance;
        let det = a * c - b * b;
        let dx = p[0] - self.mean[0];
        let dy = p[1] - self.mean[1];
        // inverse of [[a, b], [b, c]] is [[c, -b], [-b, a]] / det
        let maha = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * maha
    }
}

/// Result of fitting the two-component mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub components: [GaussianComponent; 2],
    /// Total log-likelihood of the data under the parameters at each EM step,
    /// starting with the seeded initialization.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl GmmFit {
    pub fn final_log_likelihood(&self) -> f64 {
        self.log_likelihood.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Index of the component with the higher posterior for `p`.
    pub fn classify(&self, p: [f64; 2]) -> usize {
        let l0 = self.components[0].weight.ln() + self.components[0].log_density(p);
        let l1 = self.components[1].weight.ln() + self.components[1].log_density(p);
        usize::from(l1 > l0)
    }
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Clamps the eigenvalues of a symmetric 2x2 matrix from below.
fn floor_covariance(cov: [[f64; 2]; 2], floor: f64) -> [[f64; 2]; 2] {
    let [[a, b], [_, c]] = cov;
    let half_trace = 0.5 * (a + c);
    let disc = (0.25 * (a - c).powi(2) + b * b).sqrt();
    let l_max = half_trace + disc;
    let l_min = half_trace - disc;
    if l_min >= floor {
        return [[a, b], [b, c]];
    }
    // eigenvector of the larger eigenvalue
    let (vx, vy) = if b.abs() > 1e-300 {
        let (x, y) = (l_max - c, b);
        let n = x.hypot(y);
        (x / n, y / n)
    } else if a >= c {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let l_max = l_max.max(floor);
    let l_min = floor;
    // V diag(l_max, l_min) V^T with V = [[vx, -vy], [vy, vx]]
    let a2 = l_max * vx * vx + l_min * vy * vy;
    let c2 = l_max * vy * vy + l_min * vx * vx;
    let b2 = (l_max - l_min) * vx * vy;
    [[a2, b2], [b2, c2]]
}

fn weighted_stats(points: &[[f64; 2]], weights: &[f64], floor: f64) -> GaussianComponent {
    let total: f64 = weights.iter().sum();
    let mut mean = [0.0; 2];
    for (p, w) in points.iter().zip(weights) {
        mean[0] += w * p[0];
        mean[1] += w * p[1];
    }
    mean[0] /= total;
    mean[1] /= total;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (p, w) in points.iter().zip(weights) {
        let dx = p[0] - mean[0];
        let dy = p[1] - mean[1];
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    let cov = [[sxx / total, sxy / total], [sxy / total, syy / total]];
    GaussianComponent {
        mean,
        covariance: floor_covariance(cov, floor),
        weight: total / points.len() as f64,
    }
}

/// 2-means++ seeding followed by a hard assignment to build the starting mixture.
fn seed_mixture(points: &[[f64; 2]], config: &GmmFitConfig) -> Result<[GaussianComponent; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let first = points[rng.random_range(0..points.len())];
    let d2: Vec<f64> = points.iter().map(|p| sq_dist(*p, first)).collect();
    let total: f64 = d2.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateOrientation {
            separation: 0.0,
            threshold: MIN_CENTROID_SEPARATION,
        });
    }
    let mut target = rng.random::<f64>() * total;
    let mut second = points[points.len() - 1];
    for (p, w) in points.iter().zip(&d2) {
        if *w > 0.0 && target < *w {
            second = *p;
            break;
        }
        target -= w;
    }
    if sq_dist(first, second) == 0.0 {
        // rounding pushed the draw past the last positive mass
        second = points[d2
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)];
    }

    let mut w0 = vec![0.0; points.len()];
    let mut w1 = vec![0.0; points.len()];
    for (i, p) in points.iter().enumerate() {
        if sq_dist(*p, first) <= sq_dist(*p, second) {
            w0[i] = 1.0;
        } else {
            w1[i] = 1.0;
        }
    }
    let global = weighted_stats(points, &vec![1.0; points.len()], config.covariance_floor);
    let mut comps = [
        weighted_stats(points, &w0, config.covariance_floor),
        weighted_stats(points, &w1, config.covariance_floor),
    ];
    for (comp, w) in comps.iter_mut().zip([&w0, &w1]) {
        if w.iter().sum::<f64>() < 2.0 {
            comp.covariance = global.covariance;
        }
    }
    Ok(comps)
}

/// E-step: responsibilities of component 1 and the total log-likelihood.
fn expectation(points: &[[f64; 2]], comps: &[GaussianComponent; 2], resp1: &mut [f64]) -> f64 {
    let lw0 = comps[0].weight.ln();
    let lw1 = comps[1].weight.ln();
    let mut ll = 0.0;
    for (p, r) in points.iter().zip(resp1.iter_mut()) {
        let l0 = lw0 + comps[0].log_density(*p);
        let l1 = lw1 + comps[1].log_density(*p);
        let m = l0.max(l1);
        let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
        *r = (l1 - lse).exp();
        ll += lse;
    }
    ll
}

/// Fits a two-component full-covariance Gaussian mixture with EM.
pub fn fit_gmm2(points: &[[f64; 2]], config: &GmmFitConfig) -> Result<GmmFit> {
    config.validate()?;
    if points.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: points.len(),
        });
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::domain("GMM input contains non-finite points"));
    }

    let mut comps = seed_mixture(points, config)?;
    let mut resp1 = vec![0.0; points.len()];
    let mut trace = Vec::with_capacity(config.max_iterations + 1);
    let mut resp0 = vec![0.0; points.len()];

    for iteration in 0..=config.max_iterations {
        let ll = expectation(points, &comps, &mut resp1);
        let change = trace.last().map(|prev: &f64| (ll - prev).abs());
        trace.push(ll);
        if let Some(change) = change {
            if change < config.log_likelihood_tolerance {
                return Ok(GmmFit {
                    components: comps,
                    log_likelihood: trace,
                    iterations: iteration,
                    converged: true,
                });
            }
        }
        if iteration == config.max_iterations {
            let last_change = change.unwrap_or(f64::INFINITY);
            return Err(Error::NonConvergence {
                iterations: iteration,
                last_change,
                last: Box::new(GmmFit {
                    components: comps,
                    log_likelihood: trace,
                    iterations: iteration,
                    converged: false,
                }),
            });
        }
        for (r0, r1) in resp0.iter_mut().zip(&resp1) {
            *r0 = 1.0 - r1;
        }
        // a component that lost all support keeps its previous parameters
        let mass1: f64 = resp1.iter().sum();
        let mass0 = points.len() as f64 - mass1;
        if mass0 > 1e-9 && mass1 > 1e-9 {
            comps = [
                weighted_stats(points, &resp0, config.covariance_floor),
                weighted_stats(points, &resp1, config.covariance_floor),
            ];
        }
    }
    unreachable!("EM loop always returns")
}

/// How the scalar projection of a landmark is turned into a sort key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingKey {
    /// Sort by `|r|`.
    #[default]
    AbsoluteProjection,
    /// Sort by the signed projection `r`.
    SignedProjection,
}

/// Origin of the position vectors that are projected onto the direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionOrigin {
    /// Normalized image corner `(0, 0)`.
    #[default]
    ImageCorner,
    /// Midpoint of the two fitted centroids.
    CentroidMidpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OrderingRule {
    pub key: OrderingKey,
    pub origin: ProjectionOrigin,
}

/// Everything [`reassign`] needs: a direction, an origin and a sort key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionAxis {
    pub direction: [f64; 2],
    /// Origin of the projected position vectors, in normalized units.
    pub origin: [f64; 2],
    pub key: OrderingKey,
}

impl ProjectionAxis {
    pub fn new(direction: [f64; 2]) -> Self {
        Self {
            direction,
            origin: [0.0, 0.0],
            key: OrderingKey::AbsoluteProjection,
        }
    }

    /// Left-to-right ordering.
    pub fn horizontal() -> Self {
        Self::new([1.0, 0.0])
    }

    /// Top-to-bottom ordering.
    pub fn vertical() -> Self {
        Self::new([0.0, 1.0])
    }

    pub fn with_key(mut self, key: OrderingKey) -> Self {
        self.key = key;
        self
    }

    fn sort_key(&self, p: [f64; 2]) -> Result<f64> {
        let r = scalar_projection(
            [p[0] - self.origin[0], p[1] - self.origin[1]],
            self.direction,
        )?;
        Ok(match self.key {
            OrderingKey::AbsoluteProjection => r.abs(),
            OrderingKey::SignedProjection => r,
        })
    }
}

/// Provenance of a fitted orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub seed: u64,
    pub n_pairs: usize,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub config: GmmFitConfig,
}

/// Learned orientation of one measurement type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationModel {
    pub measurement: MeasurementKind,
    pub centroid_1: NormalizedPoint,
    pub centroid_2: NormalizedPoint,
    /// `centroid_2 - centroid_1`, sign-normalized so the first nonzero
    /// component is positive.
    pub direction: [f64; 2],
    pub covariances: [[[f64; 2]; 2]; 2],
    pub weights: [f64; 2],
    pub ordering: OrderingRule,
    pub fit: FitMetadata,
}

impl OrientationModel {
    pub fn with_ordering(mut self, ordering: OrderingRule) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn axis(&self) -> ProjectionAxis {
        let origin = match self.ordering.origin {
            ProjectionOrigin::ImageCorner => [0.0, 0.0],
            ProjectionOrigin::CentroidMidpoint => [
                0.5 * (self.centroid_1.u + self.centroid_2.u),
                0.5 * (self.centroid_1.v + self.centroid_2.v),
            ],
        };
        ProjectionAxis {
            direction: self.direction,
            origin,
            key: self.ordering.key,
        }
    }

    /// Angle of the direction from +x in degrees, in image coordinates.
    pub fn angle_degrees(&self) -> f64 {
        self.direction[1].atan2(self.direction[0]).to_degrees()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        if model.direction[0].hypot(model.direction[1]) <= MIN_CENTROID_SEPARATION {
            return Err(Error::DegenerateOrientation {
                separation: model.direction[0].hypot(model.direction[1]),
                threshold: MIN_CENTROID_SEPARATION,
            });
        }
        Ok(model)
    }
}

/// Fits the orientation of one measurement type from annotated pairs.
///
/// Every pair is normalized by its own image size and both endpoints are
/// pooled as unlabeled points before fitting.
pub fn fit_orientation(
    pairs: &[(LandmarkPair, ImageDims)],
    config: &GmmFitConfig,
) -> Result<OrientationModel> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: pairs.len(),
        });
    }
    let measurement = pairs[0].0.measurement;
    if let Some((p, _)) = pairs.iter().find(|(p, _)| p.measurement != measurement) {
        return Err(Error::domain(format!(
            "orientation fit mixes {measurement} and {} pairs",
            p.measurement
        )));
    }
    let mut points = Vec::with_capacity(pairs.len() * 2);
    for (pair, dims) in pairs {
        for p in pair.points() {
            points.push(normalize(&p, dims.width, dims.height)?.as_array());
        }
    }

    let fit = fit_gmm2(&points, config)?;
    let [mut c1, mut c2] = fit.components;
    let mut direction = [c2.mean[0] - c1.mean[0], c2.mean[1] - c1.mean[1]];
    let separation = direction[0].hypot(direction[1]);
    if !(separation > MIN_CENTROID_SEPARATION) {
        return Err(Error::DegenerateOrientation {
            separation,
            threshold: MIN_CENTROID_SEPARATION,
        });
    }
    if direction[0] < 0.0 || (direction[0] == 0.0 && direction[1] < 0.0) {
        std::mem::swap(&mut c1, &mut c2);
        direction = [-direction[0], -direction[1]];
    }
    let point = |m: [f64; 2]| NormalizedPoint { u: m[0], v: m[1] };
    Ok(OrientationModel {
        measurement,
        centroid_1: point(c1.mean),
        centroid_2: point(c2.mean),
        direction,
        covariances: [c1.covariance, c2.covariance],
        weights: [c1.weight, c2.weight],
        ordering: OrderingRule::default(),
        fit: FitMetadata {
            seed: config.seed,
            n_pairs: pairs.len(),
            iterations: fit.iterations,
            log_likelihood: fit.final_log_likelihood(),
            config: *config,
        },
    })
}

fn scalar_projection(p: [f64; 2], d: [f64; 2]) -> Result<f64> {
    let norm = d[0].hypot(d[1]);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::domain("projection direction has zero length"));
    }
    Ok((p[0] * d[0] + p[1] * d[1]) / norm)
}

/// Scalar projection `r = (p . d) / |d|` of a normalized position onto the
/// axis direction, measured from the axis origin.
pub fn project(p: &NormalizedPoint, axis: &ProjectionAxis) -> Result<f64> {
    scalar_projection(
        [p.u - axis.origin[0], p.v - axis.origin[1]],
        axis.direction,
    )
}

/// `true` when `a` must carry class 1 under `axis` (smaller key first, then
/// lexicographic `(x, y)` on ties).
pub fn comes_first(a: &NormalizedPoint, b: &NormalizedPoint, axis: &ProjectionAxis) -> Result<bool> {
    let ka = axis.sort_key(a.as_array())?;
    let kb = axis.sort_key(b.as_array())?;
    Ok(match ka.total_cmp(&kb) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a
            .u
            .total_cmp(&b.u)
            .then_with(|| a.v.total_cmp(&b.v))
            .is_le(),
    })
}

/// Relabels a pixel-space pair so class 1 is the point that sorts first on
/// `axis`. Only labels move; the point set is unchanged.
pub fn reassign(pair: &LandmarkPair, axis: &ProjectionAxis, dims: ImageDims) -> Result<LandmarkPair> {
    let (w, h) = (dims.width as f64, dims.height as f64);
    let a = NormalizedPoint {
        u: pair.first.x / w,
        v: pair.first.y / h,
    };
    let b = NormalizedPoint {
        u: pair.second.x / w,
        v: pair.second.y / h,
    };
    if comes_first(&a, &b, axis)? {
        Ok(*pair)
    } else {
        Ok(pair.swapped())
    }
}
