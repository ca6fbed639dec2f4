//! End-to-end training walkthrough on synthetic data.
//!
//! Generates a small dataset, builds non-overlapping folds, trains one model
//! per fold, and reports cross-validated F1 / tau / rho against a
//! uniform-random-score baseline.
//!
//! Run with: `cargo run --example train_on_synthetic`

use std::collections::BTreeMap;
use std::time::Instant;

use msva::data::{make_splits, synth_dataset, FeatureBundle, SynthSpec};
use msva::eval::{evaluate_split, evaluate_video, EvalOptions, EvalReport, F1Mode, VideoRecord};
use msva::model::{Aperture, FusionSpec, FusionStrategy, ModelConfig};
use msva::rng::SeededRng;
use msva::stream::Stream;
use msva::train::{mean_eval_loss, train_fold, Checkpoint, TrainConfig};

fn main() {
    let start = Instant::now();
    let spec = SynthSpec {
        n_videos: 10,
        t_min: 32,
        t_max: 64,
        dims: 16,
        n_users: 5,
        seed: 42,
    };
    let bundles = synth_dataset(&spec).expect("synthesis");
    let ids: Vec<String> = bundles.iter().map(|b| b.video_id.clone()).collect();
    let split = make_splits(&ids, 5, 42).expect("splits");
    let by_id: BTreeMap<String, FeatureBundle> = bundles
        .iter()
        .map(|b| (b.video_id.clone(), b.clone()))
        .collect();

    let model_cfg = ModelConfig::uniform_dims(
        Stream::ALL.to_vec(),
        spec.dims,
        FusionSpec {
            strategy: FusionStrategy::Intermediate,
            dropout_rate: 0.0,
        },
        Aperture::Unbounded,
    );

    let mut checkpoints: Vec<Checkpoint> = Vec::new();
    for (i, fold) in split.folds.iter().enumerate() {
        let train_bundles: Vec<FeatureBundle> = fold
            .train_ids
            .iter()
            .map(|id| by_id[id].clone())
            .collect();
        let train_cfg = TrainConfig {
            learning_rate: 2e-3,
            max_epochs: 300,
            seed: 100 + i as u64,
            ..TrainConfig::default()
        };
        let fold_start = Instant::now();
        let run = train_fold(&train_bundles, &model_cfg, &train_cfg).expect("training");
        let log = &run.best.epoch_log;
        let final_loss = mean_eval_loss(&run.best.model, &train_bundles).expect("eval");
        let mut worst_video = 0.0f64;
        for b in &train_bundles {
            let loss = mean_eval_loss(&run.best.model, std::slice::from_ref(b)).expect("eval");
            worst_video = worst_video.max(loss);
        }
        println!(
            "fold {i}: {} epochs, best epoch {}, train MSE {:.2e} (worst video {:.2e}), {:.1}s",
            run.last.epoch_log.losses.len(),
            log.best_epoch,
            final_loss,
            worst_video,
            fold_start.elapsed().as_secs_f64()
        );
        checkpoints.push(run.best);
    }

    let opts = EvalOptions {
        f1_mode: F1Mode::Avg,
        ..EvalOptions::default()
    };
    let report = evaluate_split(&checkpoints, &split, &by_id, &opts).expect("evaluation");
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    println!(
        "\ntrained:  F1 {:.3}  tau {}  rho {}",
        report.overall.f1,
        fmt(report.overall.tau),
        fmt(report.overall.rho)
    );

    // Oracle reference: feed the ground truth through the protocol.
    let oracle: Vec<VideoRecord> = bundles
        .iter()
        .map(|b| {
            let eval = evaluate_video(b, b.gtscore.data(), &opts).expect("oracle eval");
            VideoRecord {
                video_id: b.video_id.clone(),
                fold: 0,
                f1: eval.f1,
                tau: eval.tau,
                rho: eval.rho,
            }
        })
        .collect();
    let oracle = EvalReport::from_records(oracle, 1);
    println!("oracle:   F1 {:.3} (ground truth as prediction)", oracle.overall.f1);

    // Uniform-random baseline over 5 seeds.
    let mut baseline_sum = 0.0;
    for seed in 0..5u64 {
        let mut rng = SeededRng::from_u64(900 + seed);
        let records: Vec<VideoRecord> = bundles
            .iter()
            .map(|b| {
                let scores: Vec<f64> = (0..b.t()).map(|_| rng.uniform()).collect();
                let eval = evaluate_video(b, &scores, &opts).expect("baseline eval");
                VideoRecord {
                    video_id: b.video_id.clone(),
                    fold: 0,
                    f1: eval.f1,
                    tau: eval.tau,
                    rho: eval.rho,
                }
            })
            .collect();
        baseline_sum += EvalReport::from_records(records, 1).overall.f1;
    }
    let baseline = baseline_sum / 5.0;
    println!("baseline: F1 {baseline:.3} (uniform random scores, 5 seeds)");
    println!(
        "margin:   {:.1} F1 points over random",
        100.0 * (report.overall.f1 - baseline)
    );
    println!("total {:.1}s", start.elapsed().as_secs_f64());
}
