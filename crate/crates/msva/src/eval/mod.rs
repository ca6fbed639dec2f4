//! The benchmark evaluation protocol.
//!
//! Pick-level predictions are upsampled to original frames, averaged over the
//! change-point segments, and a 0/1 knapsack under a frame budget selects the
//! machine summary. The summary is scored with F1 against each annotator's
//! frame selection; predicted scores are additionally compared to each
//! annotator via Kendall tau-b and Spearman rho at pick granularity.

mod correlation;
mod knapsack;

pub use correlation::{kendall_tau, midranks, spearman_rho};
pub use knapsack::{knapsack_select, selection_value};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{FeatureBundle, FoldSplit};
use crate::model::{ModelError, MsvaModel};
use crate::train::Checkpoint;

/// Fraction of original frames a machine summary may cover.
pub const DEFAULT_BUDGET_FRACTION: f64 = 0.15;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How per-annotator F1 values are aggregated for a video: maximum over
/// annotators (the SumMe convention) or their mean (the TVSum convention).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Mode {
    Max,
    Avg,
}

impl fmt::Display for F1Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            F1Mode::Max => "max",
            F1Mode::Avg => "avg",
        })
    }
}

impl FromStr for F1Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "max" => Ok(F1Mode::Max),
            "avg" => Ok(F1Mode::Avg),
            other => Err(format!("unknown f1 mode {other:?} (expected max or avg)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub budget_fraction: f64,
    pub f1_mode: F1Mode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            budget_fraction: DEFAULT_BUDGET_FRACTION,
            f1_mode: F1Mode::Avg,
        }
    }
}

/// Binary frame-level summary produced by knapsack selection over segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineSummary {
    /// Indices into the bundle's change-point list.
    pub selected_segments: Vec<usize>,
    /// One 0/1 entry per original frame; the union of the selected segments.
    pub frame_mask: Vec<u8>,
    pub budget_frames: usize,
}

impl MachineSummary {
    pub fn selected_frames(&self) -> usize {
        self.frame_mask.iter().map(|v| *v as usize).sum()
    }
}

/// Expands pick-level scores to all original frames: each frame takes the
/// score of the most recent pick at or before it (frames before the first
/// pick take the first score).
pub fn upsample_scores(picks: &[usize], scores: &[f64], n_frames: usize) -> Vec<f64> {
    assert_eq!(picks.len(), scores.len());
    assert!(!picks.is_empty());
    let mut out = vec![0.0; n_frames];
    let mut cursor = 0usize;
    for (frame, slot) in out.iter_mut().enumerate() {
        while cursor + 1 < picks.len() && picks[cursor + 1] <= frame {
            cursor += 1;
        }
        *slot = scores[cursor];
    }
    out
}

/// Mean frame score and length of every change-point segment.
pub fn segment_scores(
    full_scores: &[f64],
    change_points: &[(usize, usize)],
) -> (Vec<f64>, Vec<usize>) {
    let mut values = Vec::with_capacity(change_points.len());
    let mut lengths = Vec::with_capacity(change_points.len());
    for (start, end) in change_points {
        let len = end - start + 1;
        let sum: f64 = full_scores[*start..=*end].iter().sum();
        values.push(sum / len as f64);
        lengths.push(len);
    }
    (values, lengths)
}

/// Runs the summary pipeline: upsample, segment means, knapsack under
/// `floor(budget_fraction * n_frames)` frames, frame mask.
pub fn build_summary(
    bundle: &FeatureBundle,
    predicted: &[f64],
    budget_fraction: f64,
) -> Result<MachineSummary, EvalError> {
    if predicted.len() != bundle.t() {
        return Err(EvalError::Dimension(format!(
            "{} predictions for {} picked frames",
            predicted.len(),
            bundle.t()
        )));
    }
    if !(0.0..=1.0).contains(&budget_fraction) {
        return Err(EvalError::Config(format!(
            "budget fraction must be in [0, 1], got {budget_fraction}"
        )));
    }
    let full = upsample_scores(&bundle.picks, predicted, bundle.n_frames);
    let (values, lengths) = segment_scores(&full, &bundle.change_points);
    let budget = (budget_fraction * bundle.n_frames as f64).floor() as usize;
    let selected = knapsack_select(&values, &lengths, budget);
    let mut frame_mask = vec![0u8; bundle.n_frames];
    for seg in &selected {
        let (start, end) = bundle.change_points[*seg];
        frame_mask[start..=end].fill(1);
    }
    Ok(MachineSummary {
        selected_segments: selected,
        frame_mask,
        budget_frames: budget,
    })
}

/// F1 of a machine summary against the annotators' selections.
///
/// Per annotator: precision over the machine frames, recall over the user
/// frames, `f1 = 2pr/(p+r)` (zero when both are empty of overlap). The video
/// score is the max or mean over annotators.
pub fn f1_against_users(
    summary: &MachineSummary,
    user_summaries: &[Vec<u8>],
    mode: F1Mode,
) -> Result<f64, EvalError> {
    if user_summaries.is_empty() {
        return Err(EvalError::Config("no user summaries to score against".into()));
    }
    let machine = &summary.frame_mask;
    let machine_size: usize = machine.iter().map(|v| *v as usize).sum();
    let mut scores = Vec::with_capacity(user_summaries.len());
    for user in user_summaries {
        if user.len() != machine.len() {
            return Err(EvalError::Dimension(format!(
                "user summary of length {} against {} frames",
                user.len(),
                machine.len()
            )));
        }
        let overlap: usize = machine
            .iter()
            .zip(user.iter())
            .filter(|(m, u)| **m == 1 && **u == 1)
            .count();
        let user_size: usize = user.iter().map(|v| *v as usize).sum();
        let precision = if machine_size > 0 {
            overlap as f64 / machine_size as f64
        } else {
            0.0
        };
        let recall = if user_size > 0 {
            overlap as f64 / user_size as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        scores.push(f1);
    }
    Ok(match mode {
        F1Mode::Max => scores.iter().cloned().fold(0.0, f64::max),
        F1Mode::Avg => scores.iter().sum::<f64>() / scores.len() as f64,
    })
}

/// Per-video evaluation outcome. `None` correlations are undefined (constant
/// inputs) and excluded from averages.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoEval {
    pub f1: f64,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
}

/// Scores one video: F1 via the summary pipeline, tau/rho between the
/// prediction and each annotator's selection sampled at the picks, averaged
/// over the annotators for which the coefficient is defined.
pub fn evaluate_video(
    bundle: &FeatureBundle,
    predicted: &[f64],
    opts: &EvalOptions,
) -> Result<VideoEval, EvalError> {
    let summary = build_summary(bundle, predicted, opts.budget_fraction)?;
    let f1 = f1_against_users(&summary, &bundle.user_summaries, opts.f1_mode)?;

    let mut taus = Vec::new();
    let mut rhos = Vec::new();
    for user in &bundle.user_summaries {
        let at_picks: Vec<f64> = bundle.picks.iter().map(|p| user[*p] as f64).collect();
        if let Some(t) = kendall_tau(predicted, &at_picks)? {
            taus.push(t);
        }
        if let Some(r) = spearman_rho(predicted, &at_picks)? {
            rhos.push(r);
        }
    }
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            None
        } else {
            Some(xs.iter().sum::<f64>() / xs.len() as f64)
        }
    };
    Ok(VideoEval {
        f1,
        tau: mean(&taus),
        rho: mean(&rhos),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub fold: usize,
    pub f1: f64,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
}

/// Mean metrics over a group of records. Correlation means run over the
/// defined values only; the defined counts are kept alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n_videos: usize,
    pub f1: f64,
    pub tau: Option<f64>,
    pub rho: Option<f64>,
    pub n_tau_defined: usize,
    pub n_rho_defined: usize,
}

fn group_stats<'a>(records: impl Iterator<Item = &'a VideoRecord>) -> GroupStats {
    let records: Vec<&VideoRecord> = records.collect();
    let n = records.len();
    let f1 = records.iter().map(|r| r.f1).sum::<f64>() / n.max(1) as f64;
    let taus: Vec<f64> = records.iter().filter_map(|r| r.tau).collect();
    let rhos: Vec<f64> = records.iter().filter_map(|r| r.rho).collect();
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            None
        } else {
            Some(xs.iter().sum::<f64>() / xs.len() as f64)
        }
    };
    GroupStats {
        n_videos: n,
        f1,
        tau: mean(&taus),
        rho: mean(&rhos),
        n_tau_defined: taus.len(),
        n_rho_defined: rhos.len(),
    }
}

/// Full cross-validated report: one record per video, per-fold means and the
/// overall mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<VideoRecord>,
    pub fold_means: Vec<GroupStats>,
    pub overall: GroupStats,
}

impl EvalReport {
    pub fn from_records(records: Vec<VideoRecord>, n_folds: usize) -> Self {
        let fold_means = (0..n_folds)
            .map(|f| group_stats(records.iter().filter(|r| r.fold == f)))
            .collect();
        let overall = group_stats(records.iter());
        EvalReport {
            records,
            fold_means,
            overall,
        }
    }

    /// Verifies that the stored averages match a recomputation from the
    /// records within `tol`.
    pub fn is_consistent(&self, tol: f64) -> bool {
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (None, None) => true,
            (Some(x), Some(y)) => (x - y).abs() <= tol,
            _ => false,
        };
        let check = |stored: &GroupStats, fresh: &GroupStats| {
            (stored.f1 - fresh.f1).abs() <= tol
                && close(stored.tau, fresh.tau)
                && close(stored.rho, fresh.rho)
                && stored.n_videos == fresh.n_videos
        };
        let fresh = EvalReport::from_records(self.records.clone(), self.fold_means.len());
        self.fold_means
            .iter()
            .zip(fresh.fold_means.iter())
            .all(|(a, b)| check(a, b))
            && check(&self.overall, &fresh.overall)
    }

    /// CSV table `(video_id, fold, f1, tau, rho)` plus an OVERALL summary
    /// row. Undefined correlations are empty cells.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("video_id,fold,f1,tau,rho\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.video_id,
                r.fold,
                r.f1,
                opt(r.tau),
                opt(r.rho)
            ));
        }
        out.push_str(&format!(
            "OVERALL,,{},{},{}\n",
            self.overall.f1,
            opt(self.overall.tau),
            opt(self.overall.rho)
        ));
        out
    }
}

/// Predicts pick-level scores for one bundle with the model's configured
/// stream subset.
pub fn predict_scores(model: &MsvaModel, bundle: &FeatureBundle) -> Result<Vec<f64>, EvalError> {
    let streams = bundle.stream_subset(&model.config().streams);
    Ok(model.predict(&streams)?)
}

/// Evaluates the whole dataset under a fold split: each video is scored
/// exactly once, by the checkpoint of the fold holding it in its test set.
pub fn evaluate_split(
    checkpoints: &[Checkpoint],
    split: &FoldSplit,
    bundles: &BTreeMap<String, FeatureBundle>,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    if checkpoints.len() != split.folds.len() {
        return Err(EvalError::Config(format!(
            "{} checkpoints for {} folds",
            checkpoints.len(),
            split.folds.len()
        )));
    }
    let mut records = Vec::new();
    for (fold, (ckpt, fold_spec)) in checkpoints.iter().zip(split.folds.iter()).enumerate() {
        for id in &fold_spec.test_ids {
            let bundle = bundles
                .get(id)
                .ok_or_else(|| EvalError::Config(format!("split references unknown video {id:?}")))?;
            let predicted = predict_scores(&ckpt.model, bundle)?;
            let eval = evaluate_video(bundle, &predicted, opts)?;
            records.push(VideoRecord {
                video_id: id.clone(),
                fold,
                f1: eval.f1,
                tau: eval.tau,
                rho: eval.rho,
            });
        }
    }
    Ok(EvalReport::from_records(records, split.folds.len()))
}
