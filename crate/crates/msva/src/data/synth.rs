//! Synthetic dataset generator.
//!
//! Produces bundles with a smooth ground-truth signal, feature streams that
//! carry that signal under noise (so a model can actually learn the mapping),
//! user summaries derived from per-annotator perturbations of the ground
//! truth, and a random contiguous segment partition. Everything that the
//! bundle format stores as float32 is rounded through f32 here, so writing
//! and re-loading a generated bundle is bit-exact.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;
use crate::stream::Stream;
use crate::tensor::Tensor;

use super::{DataError, FeatureBundle};

/// Original frames per sub-sampled frame (stand-in for ~2 fps sampling).
const PICK_STRIDE: usize = 15;

/// Fraction of frames each synthetic annotator marks as summary-worthy.
const USER_SELECT_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_videos: usize,
    /// Inclusive range of sub-sampled sequence lengths.
    pub t_min: usize,
    pub t_max: usize,
    /// Width of every stream.
    pub dims: usize,
    pub n_users: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_videos: 10,
            t_min: 32,
            t_max: 64,
            dims: 16,
            n_users: 5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), DataError> {
        if self.n_videos == 0 {
            return Err(DataError::Config("n_videos must be >= 1".into()));
        }
        if self.dims < 2 {
            return Err(DataError::Config("dims must be >= 2".into()));
        }
        if self.n_users == 0 {
            return Err(DataError::Config("n_users must be >= 1".into()));
        }
        if self.t_min < 4 || self.t_min > self.t_max {
            return Err(DataError::Config(format!(
                "need 4 <= t_min <= t_max, got {}..{}",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }
}

fn f32_round(v: f64) -> f64 {
    v as f32 as f64
}

/// Step-function expansion of pick-level scores to all original frames.
fn expand_to_frames(picks: &[usize], scores: &[f64], n_frames: usize) -> Vec<f64> {
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

/// Generates a deterministic dataset of valid feature bundles.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Vec<FeatureBundle>, DataError> {
    spec.validate()?;
    let mut rng = SeededRng::from_u64(spec.seed);
    let mut bundles = Vec::with_capacity(spec.n_videos);
    for v in 0..spec.n_videos {
        let t = rng.range_inclusive(spec.t_min, spec.t_max);
        let n_frames = t * PICK_STRIDE;
        let picks: Vec<usize> = (0..t).map(|i| i * PICK_STRIDE).collect();

        // Smooth two-tone importance signal.
        let f1 = rng.uniform_in(1.0, 3.0);
        let f2 = rng.uniform_in(3.0, 7.0);
        let p1 = rng.uniform_in(0.0, TAU);
        let p2 = rng.uniform_in(0.0, TAU);
        let gtscore: Vec<f64> = (0..t)
            .map(|i| {
                let phase = i as f64 / t as f64;
                let raw = 0.5
                    + 0.3 * (TAU * f1 * phase + p1).sin()
                    + 0.15 * (TAU * f2 * phase + p2).sin();
                f32_round(raw.clamp(0.02, 0.98))
            })
            .collect();

        // Streams carry the signal through per-dimension loadings plus noise.
        let mut streams = BTreeMap::new();
        for s in Stream::ALL {
            let loadings: Vec<f64> = (0..spec.dims).map(|_| rng.uniform_in(0.8, 1.6)).collect();
            let offsets: Vec<f64> = (0..spec.dims).map(|_| rng.uniform_in(-0.2, 0.2)).collect();
            let mut data = Vec::with_capacity(t * spec.dims);
            for g in &gtscore {
                for j in 0..spec.dims {
                    let noise = rng.uniform_in(-0.3, 0.3);
                    data.push(f32_round(loadings[j] * (g - 0.5) * 2.0 + offsets[j] + noise));
                }
            }
            streams.insert(s, Tensor::new(vec![t, spec.dims], data).expect("shape"));
        }

        // Annotators: perturb the signal, expand to frames, keep the top
        // fraction.
        let mut user_summaries = Vec::with_capacity(spec.n_users);
        for _ in 0..spec.n_users {
            let perturbed: Vec<f64> = gtscore
                .iter()
                .map(|g| g + rng.uniform_in(-0.08, 0.08))
                .collect();
            let full = expand_to_frames(&picks, &perturbed, n_frames);
            let mut sorted = full.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let idx = ((1.0 - USER_SELECT_FRACTION) * (n_frames - 1) as f64).floor() as usize;
            let threshold = sorted[idx];
            let row: Vec<u8> = full.iter().map(|v| u8::from(*v > threshold)).collect();
            user_summaries.push(row);
        }

        // Random contiguous partition of the frame range, cut at pick
        // boundaries so segments are unions of whole sub-sampled blocks.
        let lo = (t / 3).clamp(4, t);
        let hi = (t / 2).clamp(lo, t);
        let n_segments = rng.range_inclusive(lo, hi);
        let mut candidates: Vec<usize> = (1..t).map(|i| i * PICK_STRIDE).collect();
        rng.shuffle(&mut candidates);
        let cuts: BTreeSet<usize> = candidates.into_iter().take(n_segments - 1).collect();
        let mut change_points = Vec::with_capacity(n_segments);
        let mut start = 0usize;
        for cut in &cuts {
            change_points.push((start, cut - 1));
            start = *cut;
        }
        change_points.push((start, n_frames - 1));

        let bundle = FeatureBundle {
            video_id: format!("video_{v:03}"),
            n_frames,
            picks,
            streams,
            gtscore: Tensor::vector(gtscore),
            change_points,
            user_summaries,
        };
        super::validate_bundle(&bundle).map_err(|violations| DataError::Validation {
            video_id: bundle.video_id.clone(),
            violations,
        })?;
        bundles.push(bundle);
    }
    Ok(bundles)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in a.iter().zip(b.iter()) {
            num += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        num / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec {
            n_videos: 4,
            seed: 7,
            ..SynthSpec::default()
        };
        let a = synth_dataset(&spec).unwrap();
        let b = synth_dataset(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn every_bundle_validates() {
        let spec = SynthSpec {
            n_videos: 6,
            t_min: 8,
            t_max: 40,
            dims: 5,
            n_users: 3,
            seed: 11,
        };
        for bundle in synth_dataset(&spec).unwrap() {
            assert!(bundle.validate().is_empty(), "{}", bundle.video_id);
        }
    }

    #[test]
    fn stream_mean_tracks_the_signal() {
        // The generator's learnability knob, measured on the data it emits.
        let spec = SynthSpec {
            n_videos: 8,
            seed: 13,
            ..SynthSpec::default()
        };
        let bundles = synth_dataset(&spec).unwrap();
        let mut total = 0.0;
        let mut count = 0;
        for bundle in &bundles {
            for x in bundle.streams.values() {
                let t = bundle.t();
                let d = x.shape()[1];
                let means: Vec<f64> = (0..t)
                    .map(|row| x.row(row).iter().sum::<f64>() / d as f64)
                    .collect();
                total += pearson(bundle.gtscore.data(), &means);
                count += 1;
            }
        }
        let avg = total / count as f64;
        assert!(avg > 0.3, "average signal correlation {avg}");
    }

    #[test]
    fn user_summaries_select_roughly_the_budget_fraction() {
        let spec = SynthSpec {
            n_videos: 3,
            seed: 17,
            ..SynthSpec::default()
        };
        for bundle in synth_dataset(&spec).unwrap() {
            for row in &bundle.user_summaries {
                let frac = row.iter().map(|v| *v as usize).sum::<usize>() as f64
                    / bundle.n_frames as f64;
                assert!(
                    (0.05..=0.3).contains(&frac),
                    "selected fraction {frac} in {}",
                    bundle.video_id
                );
            }
        }
    }

    #[test]
    fn bad_specs_are_rejected() {
        let bad = [
            SynthSpec {
                dims: 1,
                ..SynthSpec::default()
            },
            SynthSpec {
                n_users: 0,
                ..SynthSpec::default()
            },
            SynthSpec {
                t_min: 64,
                t_max: 32,
                ..SynthSpec::default()
            },
            SynthSpec {
                n_videos: 0,
                ..SynthSpec::default()
            },
        ];
        for spec in bad {
            assert!(matches!(synth_dataset(&spec), Err(DataError::Config(_))));
        }
    }
}
