//! Compares early, intermediate and late fusion on one synthetic fold.
//!
//! Run with: `cargo run --example fusion_strategies`

use std::collections::BTreeMap;

use msva::data::{make_splits, synth_dataset, FeatureBundle, SynthSpec};
use msva::eval::{evaluate_split, EvalOptions, F1Mode};
use msva::model::{Aperture, FusionSpec, FusionStrategy, ModelConfig};
use msva::stream::Stream;
use msva::train::{train_fold, TrainConfig};

fn main() {
    let spec = SynthSpec {
        n_videos: 6,
        t_min: 24,
        t_max: 40,
        dims: 8,
        n_users: 4,
        seed: 11,
    };
    let bundles = synth_dataset(&spec).expect("synthesis");
    let ids: Vec<String> = bundles.iter().map(|b| b.video_id.clone()).collect();
    let split = make_splits(&ids, 3, 11).expect("splits");
    let by_id: BTreeMap<String, FeatureBundle> = bundles
        .iter()
        .map(|b| (b.video_id.clone(), b.clone()))
        .collect();

    println!("fusion        branches  params  cross-validated F1");
    for fusion in [
        FusionStrategy::Early,
        FusionStrategy::Intermediate,
        FusionStrategy::Late,
    ] {
        let model_cfg = ModelConfig::uniform_dims(
            Stream::ALL.to_vec(),
            spec.dims,
            FusionSpec {
                strategy: fusion,
                dropout_rate: 0.0,
            },
            Aperture::Unbounded,
        );
        let mut checkpoints = Vec::new();
        for (i, fold) in split.folds.iter().enumerate() {
            let train_bundles: Vec<FeatureBundle> = fold
                .train_ids
                .iter()
                .map(|id| by_id[id].clone())
                .collect();
            let train_cfg = TrainConfig {
                learning_rate: 2e-3,
                max_epochs: 120,
                seed: 50 + i as u64,
                ..TrainConfig::default()
            };
            let run = train_fold(&train_bundles, &model_cfg, &train_cfg).expect("training");
            checkpoints.push(run.best);
        }
        let report = evaluate_split(
            &checkpoints,
            &split,
            &by_id,
            &EvalOptions {
                f1_mode: F1Mode::Avg,
                ..EvalOptions::default()
            },
        )
        .expect("evaluation");
        let model = &checkpoints[0].model;
        let n_params: usize = model
            .named_params()
            .iter()
            .map(|(_, p)| p.numel())
            .sum();
        println!(
            "{:<13} {:>8}  {:>6}  {:.3}",
            fusion.to_string(),
            model.branch_ids().len(),
            n_params,
            report.overall.f1
        );
    }
}
