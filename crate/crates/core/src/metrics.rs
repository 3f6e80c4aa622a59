//! Agreement statistics between two measurement sets.
//!
//! For ground-truth values `m1` and computed values `m2` with per-case
//! differences `d_i = m1_i - m2_i`:
//!
//! - bias = mean(d_i)
//! - mean L1 = mean(|d_i|), median L1 = median(|d_i|)
//! - CI95 = 1.96 * sqrt(mean((mean L1 - d_i)^2))
//!
//! The CI95 centering on the mean absolute difference is the default
//! ([`Ci95Form::MeanAbsCentered`]); the classical Bland-Altman half-width,
//! 1.96 times the sample standard deviation of `d_i`, is available as
//! [`Ci95Form::Classical`].

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

const Z_95: f64 = 1.96;

/// Values in millimeters keyed by case identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub ids: Vec<String>,
    pub values: Vec<f64>,
}

impl MeasurementSet {
    pub fn new(ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let set = Self { ids, values };
        set.validate()?;
        Ok(set)
    }

    /// Ids `"0"`, `"1"`, ... for positional data.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        Self::new((0..values.len()).map(|i| i.to_string()).collect(), values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != self.values.len() {
            return Err(Error::domain(format!(
                "{} ids for {} values",
                self.ids.len(),
                self.values.len()
            )));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("measurement value {v} is not finite")));
        }
        let mut seen = HashSet::with_capacity(self.ids.len());
        for id in &self.ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::domain(format!("duplicate case id {id:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ci95Form {
    /// `1.96 * sqrt(mean((mean|d| - d_i)^2))`.
    #[default]
    MeanAbsCentered,
    /// `1.96 * sample_std(d_i)`.
    Classical,
}

impl Ci95Form {
    pub fn label(&self) -> &'static str {
        match self {
            Ci95Form::MeanAbsCentered => "mean_abs_centered",
            Ci95Form::Classical => "classical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n: usize,
    pub bias: f64,
    pub ci95: f64,
    pub mean_abs: f64,
    pub median_abs: f64,
    pub ci95_form: Ci95Form,
    /// `d_i` in the order of the first set's ids.
    pub differences: Vec<f64>,
}

/// Signed differences `m1_i - m2_i`, matched by id and ordered like `m1`.
pub fn differences(m1: &MeasurementSet, m2: &MeasurementSet) -> Result<Vec<f64>> {
    m1.validate()?;
    m2.validate()?;
    if m1.len() != m2.len() {
        return Err(Error::domain(format!(
            "measurement sets differ in size: {} vs {}",
            m1.len(),
            m2.len()
        )));
    }
    if m1.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let lookup: HashMap<&str, f64> = m2
        .ids
        .iter()
        .map(String::as_str)
        .zip(m2.values.iter().copied())
        .collect();
    m1.ids
        .iter()
        .zip(&m1.values)
        .map(|(id, v)| {
            lookup
                .get(id.as_str())
                .map(|w| v - w)
                .ok_or_else(|| Error::domain(format!("case {id:?} missing from second set")))
        })
        .collect()
}

/// Median of an ascending slice; mean of the central pair for even lengths.
pub fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

fn summarize(d: Vec<f64>, form: Ci95Form) -> AgreementReport {
    let n = d.len();
    let nf = n as f64;
    let bias = d.iter().sum::<f64>() / nf;
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let mean_abs = abs.iter().sum::<f64>() / nf;
    let median_abs = median(&abs);
    let ci95 = match form {
        Ci95Form::MeanAbsCentered => {
            Z_95 * (d.iter().map(|v| (mean_abs - v).powi(2)).sum::<f64>() / nf).sqrt()
        }
        Ci95Form::Classical if n > 1 => {
            Z_95 * (d.iter().map(|v| (v - bias).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
        }
        Ci95Form::Classical => 0.0,
    };
    AgreementReport {
        n,
        bias,
        ci95,
        mean_abs,
        median_abs,
        ci95_form: form,
        differences: d,
    }
}

/// Bias, CI95 and L1 summaries of `m1` (ground truth) against `m2`.
pub fn agreement_report(m1: &MeasurementSet, m2: &MeasurementSet, form: Ci95Form) -> Result<AgreementReport> {
    let d = differences(m1, m2)?;
    if d.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: d.len(),
        });
    }
    Ok(summarize(d, form))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub t: f64,
    pub p_value: f64,
    pub dof: usize,
}

/// Two-sided paired t-test on `|dA_i| - |dB_i|`.
///
/// Negative `t` means method A has the smaller absolute errors.
pub fn paired_t_test(d_a: &[f64], d_b: &[f64]) -> Result<PairedTTest> {
    if d_a.len() != d_b.len() {
        return Err(Error::domain(format!(
            "paired samples differ in length: {} vs {}",
            d_a.len(),
            d_b.len()
        )));
    }
    let n = d_a.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let deltas: Vec<f64> = d_a.iter().zip(d_b).map(|(a, b)| a.abs() - b.abs()).collect();
    let nf = n as f64;
    let mean = deltas.iter().sum::<f64>() / nf;
    let var = deltas.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if !(var > 0.0) {
        return Err(Error::DegenerateTest(
            "paired differences have zero variance".into(),
        ));
    }
    let t = mean / (var / nf).sqrt();
    let dof = n - 1;
    let dist = StudentsT::new(0.0, 1.0, dof as f64)
        .map_err(|e| Error::DegenerateTest(e.to_string()))?;
    let p_value = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(PairedTTest { t, p_value, dof })
}

/// Points and reference lines for a Bland-Altman plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    /// `((m1_i + m2_i) / 2, d_i)` per case, ordered like `m1`.
    pub points: Vec<(f64, f64)>,
    pub bias: f64,
    pub upper: f64,
    pub lower: f64,
}

pub fn bland_altman_points(m1: &MeasurementSet, m2: &MeasurementSet, form: Ci95Form) -> Result<BlandAltman> {
    let d = differences(m1, m2)?;
    let lookup: HashMap<&str, f64> = m2
        .ids
        .iter()
        .map(String::as_str)
        .zip(m2.values.iter().copied())
        .collect();
    let points = m1
        .ids
        .iter()
        .zip(&m1.values)
        .zip(&d)
        .map(|((id, v), di)| (0.5 * (v + lookup[id.as_str()]), *di))
        .collect();
    let summary = summarize(d, form);
    Ok(BlandAltman {
        points,
        bias: summary.bias,
        upper: summary.bias + summary.ci95,
        lower: summary.bias - summary.ci95,
    })
}
