//! Dataset handling: the portable feature-bundle container, dataset
//! manifests, non-overlapping k-fold splits, and a synthetic generator for
//! offline testing.

mod bundle_io;
mod manifest;
mod splits;
mod synth;

pub use bundle_io::{load_bundle, write_bundle};
pub use manifest::{DatasetManifest, VideoEntry};
pub use splits::{make_splits, Fold, FoldSplit};
pub use synth::{synth_dataset, SynthSpec};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::stream::Stream;
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("validation failed for {video_id}: {violations:?}")]
    Validation {
        video_id: String,
        violations: Vec<String>,
    },
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// One video's pre-extracted data: per-stream feature matrices over the
/// sub-sampled frames, ground-truth importance, segment boundaries, and the
/// per-annotator frame selections.
///
/// `T` (the number of sub-sampled frames) equals `picks.len()`; features and
/// `gtscore` live at pick granularity, `change_points` and `user_summaries`
/// at original-frame granularity.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub video_id: String,
    /// Original frame count of the video.
    pub n_frames: usize,
    /// Original-frame indices of the sub-sampled frames, strictly increasing.
    pub picks: Vec<usize>,
    /// One `T x d` matrix per stream (all three canonical streams present).
    pub streams: BTreeMap<Stream, Tensor>,
    /// Average annotator importance per picked frame, in [0, 1].
    pub gtscore: Tensor,
    /// Inclusive `[start, end]` segments partitioning `0..n_frames`.
    pub change_points: Vec<(usize, usize)>,
    /// One binary row of length `n_frames` per annotator.
    pub user_summaries: Vec<Vec<u8>>,
}

impl FeatureBundle {
    /// Number of sub-sampled frames.
    pub fn t(&self) -> usize {
        self.picks.len()
    }

    pub fn n_users(&self) -> usize {
        self.user_summaries.len()
    }

    /// Clones the requested streams (e.g. the subset a model is configured
    /// for) into a map suitable for the forward pass.
    pub fn stream_subset(&self, streams: &[Stream]) -> BTreeMap<Stream, Tensor> {
        streams
            .iter()
            .filter_map(|s| self.streams.get(s).map(|t| (*s, t.clone())))
            .collect()
    }

    /// Checks every container invariant; returns the violations (empty when
    /// the bundle is valid). Pure: the bundle is never modified.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let t = self.picks.len();
        if t == 0 {
            out.push("picks are empty".to_string());
        }
        if self.gtscore.shape() != [t] {
            out.push("gtscore/T mismatch".to_string());
        }
        for s in Stream::ALL {
            match self.streams.get(&s) {
                None => out.push(format!("missing stream {s}")),
                Some(x) => match x.dims2("validate") {
                    Err(_) => out.push(format!("stream {s} is not a matrix")),
                    Ok((rows, _)) if rows != t => out.push(format!("stream {s}/T mismatch")),
                    Ok(_) => {}
                },
            }
        }
        if self.streams.len() != Stream::ALL.len() {
            out.push("unexpected extra stream".to_string());
        }
        if self.picks.windows(2).any(|w| w[0] >= w[1]) {
            out.push("picks not strictly increasing".to_string());
        }
        if self.picks.iter().any(|p| *p >= self.n_frames) {
            out.push("pick index out of frame range".to_string());
        }
        if self.gtscore.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            out.push("gtscore outside [0, 1]".to_string());
        }
        if self.change_points.is_empty() {
            out.push("segments do not cover the frame range".to_string());
        } else {
            let mut covered = true;
            if self.change_points[0].0 != 0 {
                covered = false;
            }
            for w in self.change_points.windows(2) {
                if w[1].0 != w[0].1 + 1 {
                    covered = false;
                }
            }
            if self.change_points.last().unwrap().1 != self.n_frames.saturating_sub(1) {
                covered = false;
            }
            if self.change_points.iter().any(|(s, e)| s > e) {
                covered = false;
            }
            if !covered {
                out.push("segments do not cover the frame range".to_string());
            }
        }
        for (u, row) in self.user_summaries.iter().enumerate() {
            if row.len() != self.n_frames {
                out.push(format!("user summary {u} length mismatch"));
            }
            if row.iter().any(|v| *v > 1) {
                out.push("non-binary summary".to_string());
                break;
            }
        }
        out
    }
}

/// Checks every [`FeatureBundle`] invariant; `Ok(())` or the violation list.
pub fn validate_bundle(bundle: &FeatureBundle) -> Result<(), Vec<String>> {
    let violations = bundle.validate();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_bundle() -> FeatureBundle {
        let t = 4;
        let n_frames = 8;
        let streams = Stream::ALL
            .iter()
            .map(|s| (*s, Tensor::zeros(vec![t, 3])))
            .collect();
        FeatureBundle {
            video_id: "vid".into(),
            n_frames,
            picks: vec![0, 2, 4, 6],
            streams,
            gtscore: Tensor::vector(vec![0.1, 0.9, 0.4, 0.6]),
            change_points: vec![(0, 3), (4, 7)],
            user_summaries: vec![vec![1, 1, 0, 0, 0, 0, 1, 1]],
        }
    }

    #[test]
    fn valid_bundle_passes() {
        assert!(validate_bundle(&small_bundle()).is_ok());
    }

    #[test]
    fn gtscore_length_mismatch_is_reported() {
        let mut b = small_bundle();
        b.gtscore = Tensor::vector(vec![0.1, 0.9, 0.4]);
        let violations = validate_bundle(&b).unwrap_err();
        assert!(violations.iter().any(|v| v.contains("gtscore/T mismatch")));
    }

    #[test]
    fn unsorted_picks_are_reported() {
        let mut b = small_bundle();
        b.picks = vec![0, 4, 2, 6];
        let violations = validate_bundle(&b).unwrap_err();
        assert!(violations
            .iter()
            .any(|v| v.contains("picks not strictly increasing")));
    }

    #[test]
    fn segment_gap_is_reported() {
        let mut b = small_bundle();
        b.change_points = vec![(0, 2), (4, 7)];
        let violations = validate_bundle(&b).unwrap_err();
        assert!(violations
            .iter()
            .any(|v| v.contains("segments do not cover")));
    }

    #[test]
    fn non_binary_summary_is_reported() {
        let mut b = small_bundle();
        b.user_summaries[0][3] = 2;
        let violations = validate_bundle(&b).unwrap_err();
        assert!(violations.iter().any(|v| v.contains("non-binary summary")));
    }

    #[test]
    fn validation_is_pure_and_idempotent() {
        let b = small_bundle();
        let before = b.clone();
        let first = b.validate();
        let second = b.validate();
        assert_eq!(first, second);
        assert_eq!(b, before);
    }
}
