//! Dataset manifest: which frame files belong to which domain and split.
//!
//! The manifest is one human-readable JSON document persisted alongside the
//! data. Building it is deterministic: directory listings are sorted, and
//! the train/test assignment is a seeded shuffle, so the same inputs and
//! seed always serialize to identical bytes.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::degrade::DegradationConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// The three sampling domains: degraded sources (X), clean references (Y),
/// and synthesized low-resolution pairs (Z, derived from Y).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    X,
    Y,
    Z,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestItem {
    pub path: PathBuf,
    pub split: Split,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub train_frac: f64,
    pub degradation: DegradationConfig,
    pub domain_x: Vec<ManifestItem>,
    pub domain_y: Vec<ManifestItem>,
    pub warnings: Vec<String>,
}

pub(crate) fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    Ok(files)
}

fn assign_split(files: Vec<PathBuf>, train_frac: f64, rng: &mut ChaCha8Rng) -> Vec<ManifestItem> {
    let n = files.len();
    let n_train = ((train_frac * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    files
        .into_iter()
        .zip(is_train)
        .map(|(path, train)| ManifestItem {
            path,
            split: if train { Split::Train } else { Split::Test },
        })
        .collect()
}

impl DatasetManifest {
    /// Scan both domain directories and assign a deterministic split.
    pub fn build(
        x_dir: &Path,
        y_dir: &Path,
        train_frac: f64,
        seed: u64,
        degradation: DegradationConfig,
    ) -> Result<DatasetManifest> {
        if !(train_frac > 0.0 && train_frac <= 1.0) {
            return Err(Error::Config(format!(
                "train_frac must be in (0, 1], got {}",
                train_frac
            )));
        }
        degradation.validate()?;
        let x_files = list_pngs(x_dir)?;
        if x_files.is_empty() {
            return Err(Error::EmptyDomain(format!("X ({})", x_dir.display())));
        }
        let y_files = list_pngs(y_dir)?;
        if y_files.is_empty() {
            return Err(Error::EmptyDomain(format!("Y ({})", y_dir.display())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let domain_x = assign_split(x_files, train_frac, &mut rng);
        let domain_y = assign_split(y_files, train_frac, &mut rng);

        let mut warnings = Vec::new();
        for (name, items) in [("X", &domain_x), ("Y", &domain_y)] {
            if items.iter().all(|i| i.split == Split::Train) {
                warnings.push(format!(
                    "domain {}: train_frac {} leaves the test split empty",
                    name, train_frac
                ));
            }
            if items.iter().all(|i| i.split == Split::Test) {
                warnings.push(format!(
                    "domain {}: train_frac {} leaves the train split empty",
                    name, train_frac
                ));
            }
        }
        Ok(DatasetManifest {
            seed,
            train_frac,
            degradation,
            domain_x,
            domain_y,
            warnings,
        })
    }

    /// Item paths for a domain and split. Z draws from the clean domain: its
    /// frames are synthesized from Y on demand.
    pub fn items(&self, domain: Domain, split: Split) -> Vec<&ManifestItem> {
        let source = match domain {
            Domain::X => &self.domain_x,
            Domain::Y | Domain::Z => &self.domain_y,
        };
        source.iter().filter(|i| i.split == split).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
