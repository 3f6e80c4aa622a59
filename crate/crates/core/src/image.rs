//! Grayscale image container and annotated-image records.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::{ImageDims, LandmarkPair, MeasurementKind};

/// Grayscale intensities in row-major `(row, col)` = `(y, x)` layout.
///
/// Intensities loaded from 8-bit files are scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    data: Array2<f64>,
}

impl GrayImage {
    pub fn new(data: Array2<f64>) -> Self {
        Self { data }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(Array2::zeros((height, width)))
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self::new(Array2::from_shape_fn((height, width), |(y, x)| f(x, y)))
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn height(&self) -> usize {
        self.data.nrows()
    }

    pub fn dims(&self) -> ImageDims {
        ImageDims::new(self.width(), self.height())
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<f64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[(y, x)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[(y, x)] = value;
    }

    /// Pixel value, or zero outside the image.
    #[inline]
    pub fn get_or_zero(&self, x: isize, y: isize) -> f64 {
        if x < 0 || y < 0 || x as usize >= self.width() || y as usize >= self.height() {
            0.0
        } else {
            self.data[(y as usize, x as usize)]
        }
    }

    /// Bilinear interpolation at a continuous position; zero outside the support.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        if !x.is_finite() || !y.is_finite() {
            return 0.0;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let mut acc = 0.0;
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            if wy == 0.0 {
                continue;
            }
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                if wx == 0.0 {
                    continue;
                }
                acc += wx * wy * self.get_or_zero(xi + dx, yi + dy);
            }
        }
        acc
    }

    /// Reads an 8-bit (or 16-bit) image file as grayscale in `[0, 1]`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let luma = img.to_luma16();
        let (w, h) = luma.dimensions();
        let mut out = Self::zeros(w as usize, h as usize);
        for (x, y, px) in luma.enumerate_pixels() {
            out.set(x as usize, y as usize, px.0[0] as f64 / u16::MAX as f64);
        }
        Ok(out)
    }

    /// Width and height from the file header, without decoding pixels.
    pub fn read_dims(path: impl AsRef<Path>) -> Result<ImageDims> {
        let path = path.as_ref();
        let (w, h) = image::image_dimensions(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(ImageDims::new(w as usize, h as usize))
    }

    /// Writes the image as 8-bit grayscale PNG, clamping to `[0, 1]`.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let buf = image::GrayImage::from_fn(self.width() as u32, self.height() as u32, |x, y| {
            let v = self.get(x as usize, y as usize).clamp(0.0, 1.0);
            image::Luma([(v * 255.0).round() as u8])
        });
        buf.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Zero-mean, unit-std copy. A constant image maps to all zeros.
    pub fn standardized(&self) -> Self {
        let n = self.data.len().max(1) as f64;
        let mean = self.data.sum() / n;
        let var = self.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std < 1e-12 {
            return Self::new(Array2::zeros(self.data.raw_dim()));
        }
        Self::new(self.data.mapv(|v| (v - mean) / std))
    }

    /// Bilinear resize to `width x height`, mapping pixel `x` to `x * ratio`.
    pub fn resize(&self, width: usize, height: usize) -> Self {
        let rx = self.width() as f64 / width as f64;
        let ry = self.height() as f64 / height as f64;
        Self::from_fn(width, height, |x, y| {
            self.bilinear_clamped(x as f64 * rx, y as f64 * ry)
        })
    }

    /// Bilinear rescale into a `width x height` frame: output pixel `x`
    /// samples source position `x / ratio`, zero outside the source.
    pub fn rescale(&self, ratio: f64, width: usize, height: usize) -> Self {
        if ratio == 1.0 && width == self.width() && height == self.height() {
            return self.clone();
        }
        let (w, h) = (self.width() as f64, self.height() as f64);
        Self::from_fn(width, height, |x, y| {
            let (sx, sy) = (x as f64 / ratio, y as f64 / ratio);
            if sx > w - 0.5 || sy > h - 0.5 {
                0.0
            } else {
                self.bilinear_clamped(sx, sy)
            }
        })
    }

    fn bilinear_clamped(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width() - 1) as f64);
        let y = y.clamp(0.0, (self.height() - 1) as f64);
        self.bilinear(x, y)
    }
}

/// One image with its landmark annotations and optional physical scale.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub pixels: GrayImage,
    pub landmarks: Vec<LandmarkPair>,
    pub mm_per_pixel: Option<f64>,
    /// Record identifier, usually the image path relative to the manifest.
    pub image_id: String,
    pub subject_id: String,
    pub source_id: String,
}

impl AnnotatedImage {
    pub fn width(&self) -> usize {
        self.pixels.width()
    }

    pub fn height(&self) -> usize {
        self.pixels.height()
    }

    pub fn dims(&self) -> ImageDims {
        self.pixels.dims()
    }

    /// The annotated pair for `kind`, if present.
    pub fn pair(&self, kind: MeasurementKind) -> Option<&LandmarkPair> {
        self.landmarks.iter().find(|p| p.measurement == kind)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.mm_per_pixel {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::domain(format!(
                    "{}: mm_per_pixel must be positive, got {s}",
                    self.image_id
                )));
            }
        }
        let dims = self.dims();
        for pair in &self.landmarks {
            pair.validate()?;
            for p in pair.points() {
                if !dims.contains(&p) {
                    return Err(Error::domain(format!(
                        "{}: {} landmark ({}, {}) outside {}x{} image",
                        self.image_id, pair.measurement, p.x, p.y, dims.width, dims.height
                    )));
                }
            }
        }
        Ok(())
    }
}
