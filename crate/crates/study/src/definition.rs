use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use histoprompt_core::seeding::rng;
use histoprompt_core::stats::Truth;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::service::StudyError;

pub const DEFAULT_N_REAL: usize = 20;
pub const DEFAULT_N_SYNTH: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyItem {
    /// Opaque identifier shown to readers; must not reveal the truth.
    pub item_id: String,
    pub image_path: PathBuf,
    pub truth: Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyDefinition {
    pub study_id: String,
    pub seed: u64,
    pub items: Vec<StudyItem>,
}

impl StudyDefinition {
    pub fn n_real(&self) -> usize {
        self.items.iter().filter(|i| i.truth == Truth::Real).count()
    }

    pub fn n_synth(&self) -> usize {
        self.items.iter().filter(|i| i.truth == Truth::Synthetic).count()
    }

    pub fn item(&self, item_id: &str) -> Option<&StudyItem> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        if self.items.is_empty() {
            return Err(StudyError::InvalidDefinition("study has no items".into()));
        }
        if self.study_id.is_empty() || !self.study_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_".contains(c)) {
            return Err(StudyError::InvalidDefinition(format!(
                "study id {:?} must be non-empty ASCII letters, digits, '-' or '_'",
                self.study_id
            )));
        }
        let mut seen = HashSet::new();
        for item in &self.items {
            if !seen.insert(item.item_id.as_str()) {
                return Err(StudyError::InvalidDefinition(format!("duplicate item id {}", item.item_id)));
            }
        }
        Ok(())
    }

    /// Reads a definition file. Relative image paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, StudyError> {
        let text = fs::read_to_string(path).map_err(|e| StudyError::io(path, e))?;
        let mut def: Self =
            serde_json::from_str(&text).map_err(|e| StudyError::InvalidDefinition(format!("{}: {e}", path.display())))?;
        def.validate()?;
        let base = path.parent().unwrap_or(Path::new(""));
        for item in &mut def.items {
            if item.image_path.is_relative() {
                item.image_path = base.join(&item.image_path);
            }
        }
        Ok(def)
    }

    pub fn save(&self, path: &Path) -> Result<(), StudyError> {
        let text = serde_json::to_string_pretty(self).expect("definition serializes");
        fs::write(path, text + "\n").map_err(|e| StudyError::io(path, e))
    }
}

/// Builds a study from real and synthetic image paths. Items are shuffled with
/// `seed` before numbering, so ids `item-01`, `item-02`, ... carry no
/// information about the truth.
pub fn build_study(study_id: &str, real: &[PathBuf], synthetic: &[PathBuf], seed: u64) -> StudyDefinition {
    let mut pool: Vec<(PathBuf, Truth)> = real
        .iter()
        .map(|p| (p.clone(), Truth::Real))
        .chain(synthetic.iter().map(|p| (p.clone(), Truth::Synthetic)))
        .collect();
    pool.shuffle(&mut rng(seed));
    let width = pool.len().to_string().len().max(2);
    StudyDefinition {
        study_id: study_id.to_string(),
        seed,
        items: pool
            .into_iter()
            .enumerate()
            .map(|(i, (image_path, truth))| StudyItem {
                item_id: format!("item-{:0width$}", i + 1),
                image_path,
                truth,
            })
            .collect(),
    }
}
