//! Dataset manifest: names the videos of a dataset and where their bundle
//! directories live (relative to the manifest file).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::stream::Stream;

use super::DataError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    /// Bundle directory, relative to the manifest's parent directory.
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub dims: BTreeMap<Stream, usize>,
    pub videos: Vec<VideoEntry>,
}

impl DatasetManifest {
    pub fn video_ids(&self) -> Vec<String> {
        self.videos.iter().map(|v| v.id.clone()).collect()
    }

    /// Absolute bundle directory for a video id.
    pub fn bundle_dir(&self, manifest_path: &Path, id: &str) -> Option<PathBuf> {
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        self.videos
            .iter()
            .find(|v| v.id == id)
            .map(|v| base.join(&v.dir))
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen = BTreeSet::new();
        for v in &self.videos {
            if !seen.insert(&v.id) {
                return Err(DataError::Config(format!("duplicate video id {:?}", v.id)));
            }
        }
        if self.videos.is_empty() {
            return Err(DataError::Config("manifest lists no videos".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        self.validate()?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| DataError::Io {
                path: parent.display().to_string(),
                source: e,
            })?;
        }
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, json + "\n").map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let raw = fs::read_to_string(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let manifest: DatasetManifest =
            serde_json::from_str(&raw).map_err(|e| DataError::Format {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        manifest.validate()?;
        Ok(manifest)
    }
}
