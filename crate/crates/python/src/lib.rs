//! Python bindings: landmark pairs, orientation models, ellipse fitting,
//! ruler scale recovery, agreement metrics, synthetic data and inference.
//!
//! Images cross the boundary as row-major nested sequences of floats
//! (`list[list[float]]` or a 2-D numpy array), points as `(x, y)` tuples.

use std::path::PathBuf;

use fetal_biometry as core;
use fetal_biometry::dod::{self, GmmFitConfig, OrderingKey, ProjectionAxis};
use fetal_biometry::measure::{self, PixelScale, Rect, RulerTemplate};
use fetal_biometry::metrics::{self, Ci95Form, MeasurementSet};
use fetal_biometry::{GrayImage, ImageDims, MeasurementKind, Point2D};
use ndarray::Array2;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

type XY = (f64, f64);

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::Io { .. } | core::Error::Image { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn point(p: XY) -> Point2D {
    Point2D::new(p.0, p.1)
}

fn xy(p: Point2D) -> XY {
    (p.x, p.y)
}

fn kind(label: &str) -> PyResult<MeasurementKind> {
    label.parse().map_err(|e| PyValueError::new_err(format!("{e}")))
}

fn image(rows: Vec<Vec<f64>>) -> PyResult<GrayImage> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if height == 0 || width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("image must be a non-empty rectangular 2-D array"));
    }
    let data = Array2::from_shape_vec((height, width), rows.concat()).expect("shape checked");
    Ok(GrayImage::new(data))
}

fn rows(img: &GrayImage) -> Vec<Vec<f64>> {
    img.data().rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Two landmarks of one measurement (`"OFD"`, `"BPD"` or `"FL"`), in pixels.
#[pyclass(name = "LandmarkPair", module = "fetal_biometry_py", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
pub struct PyLandmarkPair(core::LandmarkPair);

#[pymethods]
impl PyLandmarkPair {
    #[new]
    fn new(first: XY, second: XY, measurement: &str) -> PyResult<Self> {
        core::LandmarkPair::new(point(first), point(second), kind(measurement)?)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn first(&self) -> XY {
        xy(self.0.first)
    }

    #[getter]
    fn second(&self) -> XY {
        xy(self.0.second)
    }

    #[getter]
    fn measurement(&self) -> &'static str {
        self.0.measurement.as_str()
    }

    /// Euclidean length in pixels.
    fn length(&self) -> f64 {
        self.0.length()
    }

    fn swapped(&self) -> Self {
        Self(self.0.swapped())
    }

    fn __repr__(&self) -> String {
        let (a, b) = (self.0.first, self.0.second);
        format!(
            "LandmarkPair(({}, {}), ({}, {}), '{}')",
            a.x,
            a.y,
            b.x,
            b.y,
            self.0.measurement
        )
    }
}

/// Learned landmark orientation of one measurement type.
#[pyclass(name = "OrientationModel", module = "fetal_biometry_py", frozen)]
pub struct PyOrientationModel(dod::OrientationModel);

#[pymethods]
impl PyOrientationModel {
    /// Fits the orientation from training pairs and their `(width, height)`.
    #[staticmethod]
    #[pyo3(signature = (pairs, dims, seed = 0))]
    fn fit(pairs: Vec<PyLandmarkPair>, dims: Vec<(usize, usize)>, seed: u64) -> PyResult<Self> {
        if pairs.len() != dims.len() {
            return Err(PyValueError::new_err("pairs and dims differ in length"));
        }
        let data: Vec<_> = pairs
            .into_iter()
            .zip(dims)
            .map(|(p, (w, h))| (p.0, ImageDims::new(w, h)))
            .collect();
        let config = GmmFitConfig { seed, ..GmmFitConfig::default() };
        dod::fit_orientation(&data, &config).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        dod::OrientationModel::load(path).map(Self).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    #[getter]
    fn measurement(&self) -> &'static str {
        self.0.measurement.as_str()
    }

    #[getter]
    fn direction(&self) -> XY {
        (self.0.direction[0], self.0.direction[1])
    }

    fn angle_degrees(&self) -> f64 {
        self.0.angle_degrees()
    }

    /// Orders the pair's landmarks along the learned direction.
    fn reassign(&self, pair: &PyLandmarkPair, width: usize, height: usize) -> PyResult<PyLandmarkPair> {
        dod::reassign(&pair.0, &self.0.axis(), ImageDims::new(width, height))
            .map(PyLandmarkPair)
            .map_err(to_py)
    }
}

/// Orders a pair along an arbitrary direction given in normalized units.
#[pyfunction]
#[pyo3(signature = (pair, direction, width, height, origin = (0.0, 0.0), absolute = true))]
fn reassign(pair: &PyLandmarkPair, direction: XY, width: usize, height: usize, origin: XY, absolute: bool) -> PyResult<PyLandmarkPair> {
    let axis = ProjectionAxis {
        direction: [direction.0, direction.1],
        origin: [origin.0, origin.1],
        key: if absolute {
            OrderingKey::AbsoluteProjection
        } else {
            OrderingKey::SignedProjection
        },
    };
    dod::reassign(&pair.0, &axis, ImageDims::new(width, height))
        .map(PyLandmarkPair)
        .map_err(to_py)
}

/// Ellipse with semi-axes `a >= b` and major-axis angle `theta` (radians).
#[pyclass(name = "Ellipse", module = "fetal_biometry_py", frozen)]
pub struct PyEllipse(measure::Ellipse);

#[pymethods]
impl PyEllipse {
    #[new]
    fn new(center: XY, a: f64, b: f64, theta: f64) -> PyResult<Self> {
        measure::Ellipse::new(point(center), a, b, theta).map(Self).map_err(to_py)
    }

    #[getter]
    fn center(&self) -> XY {
        xy(self.0.center)
    }

    #[getter]
    fn a(&self) -> f64 {
        self.0.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.0.b
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta
    }

    fn point_at(&self, t: f64) -> XY {
        xy(self.0.point_at(t))
    }

    /// Endpoints of the major (OFD) and minor (BPD) axes.
    fn axis_landmarks(&self) -> (PyLandmarkPair, PyLandmarkPair) {
        let l = measure::ellipse_axis_landmarks(&self.0);
        (PyLandmarkPair(l.ofd), PyLandmarkPair(l.bpd))
    }

    fn __repr__(&self) -> String {
        let e = &self.0;
        format!("Ellipse(({}, {}), a={}, b={}, theta={})", e.center.x, e.center.y, e.a, e.b, e.theta)
    }
}

/// Direct least-squares ellipse through at least six boundary points.
#[pyfunction]
fn fit_ellipse(points: Vec<XY>) -> PyResult<PyEllipse> {
    let pts: Vec<Point2D> = points.into_iter().map(point).collect();
    measure::fit_ellipse(&pts).map(PyEllipse).map_err(to_py)
}

/// OFD and BPD landmarks of the largest region in a binary head mask.
#[pyfunction]
fn landmarks_from_mask(mask: Vec<Vec<f64>>) -> PyResult<(PyLandmarkPair, PyLandmarkPair)> {
    let l = core::data::derive_landmarks_from_mask(&image(mask)?).map_err(to_py)?;
    Ok((PyLandmarkPair(l.ofd), PyLandmarkPair(l.bpd)))
}

/// Tick-mark patch, physical tick spacing and the image band to search.
#[pyclass(name = "RulerTemplate", module = "fetal_biometry_py", frozen)]
pub struct PyRulerTemplate(RulerTemplate);

#[pymethods]
impl PyRulerTemplate {
    /// `band` is `(x, y, width, height)` in image pixels.
    #[new]
    fn new(patch: Vec<Vec<f64>>, spacing_mm: f64, band: (usize, usize, usize, usize)) -> PyResult<Self> {
        let t = RulerTemplate::new(image(patch)?, spacing_mm, Rect::new(band.0, band.1, band.2, band.3));
        t.validate().map_err(to_py)?;
        Ok(Self(t))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        RulerTemplate::load(path).map(Self).map_err(to_py)
    }

    /// Writes the JSON and a PNG of the patch next to it.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).map_err(to_py)
    }
}

/// Millimeters per pixel from the ruler markers of an image.
#[pyfunction]
fn recover_scale(image_rows: Vec<Vec<f64>>, template: &PyRulerTemplate) -> PyResult<f64> {
    measure::recover_scale(&image(image_rows)?, &template.0)
        .map(|s| s.mm_per_pixel)
        .map_err(to_py)
}

/// Length of a pair in millimeters at the given calibration.
#[pyfunction]
fn length_mm(pair: &PyLandmarkPair, mm_per_pixel: f64) -> PyResult<f64> {
    measure::compute_measurement(&pair.0, PixelScale::metadata(mm_per_pixel))
        .map(|r| r.length_mm)
        .map_err(to_py)
}

/// Agreement between paired measurements as a dict with `n`, `bias`,
/// `ci95`, `mean_abs`, `median_abs` and `differences`.
#[pyfunction]
#[pyo3(signature = (reference, other, ci95_form = "mean_abs_centered"))]
fn agreement<'py>(py: Python<'py>, reference: Vec<f64>, other: Vec<f64>, ci95_form: &str) -> PyResult<Bound<'py, PyDict>> {
    let form = match ci95_form {
        "mean_abs_centered" => Ci95Form::MeanAbsCentered,
        "classical" => Ci95Form::Classical,
        f => return Err(PyValueError::new_err(format!("unknown ci95_form {f:?}"))),
    };
    let a = MeasurementSet::from_values(reference).map_err(to_py)?;
    let b = MeasurementSet::from_values(other).map_err(to_py)?;
    let r = metrics::agreement_report(&a, &b, form).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("n", r.n)?;
    d.set_item("bias", r.bias)?;
    d.set_item("ci95", r.ci95)?;
    d.set_item("mean_abs", r.mean_abs)?;
    d.set_item("median_abs", r.median_abs)?;
    d.set_item("ci95_form", r.ci95_form.label())?;
    d.set_item("differences", r.differences)?;
    Ok(d)
}

/// Two-sided paired t-test on absolute errors; returns `(t, p_value)`.
#[pyfunction]
fn paired_t_test(errors_a: Vec<f64>, errors_b: Vec<f64>) -> PyResult<(f64, f64)> {
    metrics::paired_t_test(&errors_a, &errors_b)
        .map(|t| (t.t, t.p_value))
        .map_err(to_py)
}

/// Synthetic femur-like frames as `(image_rows, LandmarkPair)` tuples.
#[pyfunction]
#[pyo3(signature = (n_images, seed = 0, width = 128, height = 128))]
fn synthetic(n_images: usize, seed: u64, width: usize, height: usize) -> PyResult<Vec<(Vec<Vec<f64>>, PyLandmarkPair)>> {
    let config = core::data::SyntheticConfig {
        n_images,
        seed,
        width,
        height,
        ..Default::default()
    };
    let data = core::data::generate_synthetic(&config).map_err(to_py)?;
    Ok(data
        .images
        .iter()
        .map(|img| (rows(&img.pixels), PyLandmarkPair(img.landmarks[0])))
        .collect())
}

/// Trained landmark regressor loaded from a checkpoint.
#[pyclass(name = "Predictor", module = "fetal_biometry_py", frozen)]
pub struct PyPredictor(core::model::Predictor);

#[pymethods]
impl PyPredictor {
    #[staticmethod]
    fn load(checkpoint: PathBuf) -> PyResult<Self> {
        let ckpt = core::model::Checkpoint::load(checkpoint).map_err(to_py)?;
        core::model::Predictor::from_checkpoint(&ckpt).map(Self).map_err(to_py)
    }

    #[getter]
    fn measurement(&self) -> &'static str {
        self.0.measurement.as_str()
    }

    /// Landmarks in image pixels and the per-landmark heatmap peak.
    fn predict(&self, py: Python<'_>, image_rows: Vec<Vec<f64>>) -> PyResult<(PyLandmarkPair, XY)> {
        let img = image(image_rows)?;
        let p = py.detach(|| self.0.predict(&img)).map_err(to_py)?;
        Ok((PyLandmarkPair(p.pair), (p.confidence[0], p.confidence[1])))
    }
}

#[pymodule]
fn fetal_biometry_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLandmarkPair>()?;
    m.add_class::<PyOrientationModel>()?;
    m.add_class::<PyEllipse>()?;
    m.add_class::<PyPredictor>()?;
    m.add_class::<PyRulerTemplate>()?;
    m.add_function(wrap_pyfunction!(reassign, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ellipse, m)?)?;
    m.add_function(wrap_pyfunction!(landmarks_from_mask, m)?)?;
    m.add_function(wrap_pyfunction!(recover_scale, m)?)?;
    m.add_function(wrap_pyfunction!(length_mm, m)?)?;
    m.add_function(wrap_pyfunction!(agreement, m)?)?;
    m.add_function(wrap_pyfunction!(paired_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic, m)?)?;
    Ok(())
}
