use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPolicy {
    /// Fraction of subjects (or images) assigned to the test side.
    pub test_fraction: f64,
    pub subject_disjoint: bool,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            subject_disjoint: true,
        }
    }
}

/// Train/test partition of image ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub subject_disjoint: bool,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitManifest {
    pub fn is_train(&self, id: &str) -> bool {
        self.train.binary_search_by(|t| t.as_str().cmp(id)).is_ok()
    }

    pub fn is_test(&self, id: &str) -> bool {
        self.test.binary_search_by(|t| t.as_str().cmp(id)).is_ok()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Self = serde_json::from_str(&text)?;
        m.train.sort();
        m.test.sort();
        Ok(m)
    }
}

/// Random split of `(image_id, subject_id)` items, deterministic in `seed`.
///
/// With `subject_disjoint` the shuffle runs over unique subjects, so every
/// image of a subject lands on the same side regardless of which measurement
/// it carries. Splitting all records once and filtering per measurement
/// afterwards keeps that guarantee for each per-measurement subset.
pub fn make_split(items: &[(&str, &str)], policy: SplitPolicy, seed: u64) -> Result<SplitManifest> {
    if !(policy.test_fraction > 0.0 && policy.test_fraction < 1.0) {
        return Err(Error::domain(format!(
            "test fraction must lie in (0, 1), got {}",
            policy.test_fraction
        )));
    }
    let mut groups: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    for &(image, subject) in items {
        let key = if policy.subject_disjoint { subject } else { image };
        if let Some(prev) = owner.insert(image, subject) {
            if prev != subject {
                return Err(Error::domain(format!(
                    "image {image:?} listed under subjects {prev:?} and {subject:?}"
                )));
            }
        }
        groups.entry(key).or_default().insert(image);
    }
    let mut keys: Vec<&str> = groups.keys().copied().collect();
    let n_test = (keys.len() as f64 * policy.test_fraction).round() as usize;
    if n_test == 0 || n_test == keys.len() {
        return Err(Error::InsufficientData {
            needed: (1.0 / policy.test_fraction.min(1.0 - policy.test_fraction)).ceil() as usize,
            got: keys.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    keys.shuffle(&mut rng);
    let collect = |ks: &[&str]| {
        let mut ids: Vec<String> = ks
            .iter()
            .flat_map(|k| groups[k].iter().map(|s| s.to_string()))
            .collect();
        ids.sort();
        ids
    };
    Ok(SplitManifest {
        test: collect(&keys[..n_test]),
        train: collect(&keys[n_test..]),
        subject_disjoint: policy.subject_disjoint,
        test_fraction: policy.test_fraction,
        seed,
    })
}
