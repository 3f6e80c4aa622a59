//! Landmark-based fetal biometry.
//!
//! The crate covers the full path from annotated ultrasound frames to
//! millimeter measurements:
//!
//! - [`dod`] learns a per-measurement orientation from training landmarks and
//!   relabels landmark pairs consistently after augmentation.
//! - [`augment`], [`heatmap`], [`nn`] and [`model`] train and run the heatmap
//!   landmark regressor.
//! - [`measure`] recovers the pixel scale from on-screen ruler markers and
//!   derives head-axis landmarks from fitted ellipses.
//! - [`metrics`] scores agreement between two measurement sets.
//! - [`data`] loads point/mask annotations and generates synthetic datasets.

pub mod augment;
pub mod data;
pub mod dod;
pub mod error;
pub mod geometry;
pub mod heatmap;
pub mod image;
pub mod measure;
pub mod metrics;
pub mod model;
pub mod nn;

pub use error::{Error, Result};
pub use geometry::{
    denormalize, euclidean_distance, normalize, ImageDims, LandmarkPair, MeasurementKind,
    NormalizedPoint, Point2D,
};
pub use image::{AnnotatedImage, GrayImage};
