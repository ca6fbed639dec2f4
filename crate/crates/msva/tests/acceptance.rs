//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Reference implementations used as oracles here are written from scratch in
//! this file and stay independent of the library's implementation paths.

#![allow(clippy::needless_range_loop)] // index loops keep the oracles explicit

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use msva::cli::{cmd_eval, cmd_splits, cmd_synth, cmd_train, RunConfig, RunOverrides};
use msva::data::{
    load_bundle, make_splits, synth_dataset, write_bundle, FeatureBundle, SynthSpec,
};
use msva::eval::{
    build_summary, evaluate_split, evaluate_video, f1_against_users, kendall_tau, knapsack_select,
    selection_value, spearman_rho, EvalOptions, EvalReport, F1Mode, MachineSummary, VideoRecord,
};
use msva::model::{
    aperture_mask, attention_weights, Aperture, AttentionConfig, AttentionHead, FusionSpec,
    FusionStrategy, ModelConfig, MsvaModel,
};
use msva::rng::SeededRng;
use msva::stream::Stream;
use msva::tensor::{grad_check, Tape, Tensor, TensorError};
use msva::train::{
    load_checkpoint, mean_eval_loss, save_checkpoint, train_fold, Checkpoint, EpochLog,
    TrainConfig,
};

fn pass(line: &str) {
    println!("[acceptance] {line}: PASS");
}

// ---------------------------------------------------------------------------
// C1: gradient fidelity on the full network, every fusion strategy.
// ---------------------------------------------------------------------------

#[test]
fn c1_gradient_fidelity() {
    let start = Instant::now();
    let t = 8;
    let d = 6;
    let mut worst = 0.0f64;
    for fusion in [
        FusionStrategy::Early,
        FusionStrategy::Intermediate,
        FusionStrategy::Late,
    ] {
        let cfg = ModelConfig::uniform_dims(
            vec![Stream::Object, Stream::Rgb],
            d,
            FusionSpec {
                strategy: fusion,
                dropout_rate: 0.0,
            },
            Aperture::Bounded(3),
        );
        let model = MsvaModel::init(&cfg, 2024).unwrap();
        let mut rng = SeededRng::from_u64(7);
        let streams: BTreeMap<Stream, Tensor> = [Stream::Object, Stream::Rgb]
            .iter()
            .map(|s| (*s, Tensor::uniform(vec![t, d], -1.0, 1.0, &mut rng)))
            .collect();
        let target = Tensor::uniform(vec![t], 0.0, 1.0, &mut rng);
        let params: Vec<Tensor> = model
            .named_params()
            .into_iter()
            .map(|(_, p)| p.clone())
            .collect();
        let err = grad_check(
            |tape, ids| {
                let mut dummy = SeededRng::from_u64(0);
                let out = model
                    .forward_with_params(tape, ids, &streams, false, &mut dummy)
                    .map_err(|e| TensorError::Contract(e.to_string()))?;
                let target_node = tape.leaf(&target);
                tape.mse_loss(out, target_node)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "{fusion}: max relative error {err}");
        worst = worst.max(err);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    pass(&format!(
        "C1 gradient fidelity (worst rel err {worst:.2e}, {elapsed:.2?})"
    ));
}

// ---------------------------------------------------------------------------
// C2: attention invariants over 200 random instances.
// ---------------------------------------------------------------------------

#[test]
fn c2_attention_invariants() {
    let mut rng = SeededRng::from_u64(22);
    let mut zero_aperture_cases = 0;
    for trial in 0..200 {
        let t = rng.range_inclusive(2, 32);
        let d = rng.range_inclusive(3, 8);
        let p = match rng.below(4) {
            0 => Aperture::Bounded(0),
            1 => Aperture::Bounded(1),
            2 => Aperture::Bounded(2),
            _ => Aperture::Unbounded,
        };
        let head = AttentionHead {
            u: Tensor::uniform(vec![d, d], -1.0, 1.0, &mut rng),
            v: Tensor::uniform(vec![d, d], -1.0, 1.0, &mut rng),
            config: AttentionConfig {
                d,
                aperture: p,
                scale: 1.0 / (d as f64).sqrt(),
            },
        };
        let x = Tensor::uniform(vec![t, d], -1.0, 1.0, &mut rng);
        let scores = head.scores(&x).unwrap();
        let mask = aperture_mask(t, p);
        let weights = attention_weights(&scores, &mask).unwrap();

        for row in 0..t {
            let mut sum = 0.0;
            for col in 0..t {
                let w = weights.get(row, col);
                if !mask.get(row, col) {
                    assert_eq!(w, 0.0, "trial {trial}: nonzero outside the band");
                }
                sum += w;
            }
            assert!(
                (sum - 1.0).abs() <= 1e-12,
                "trial {trial} row {row}: sum {sum}"
            );
        }

        if p == Aperture::Bounded(0) {
            zero_aperture_cases += 1;
            let mut tape = Tape::new();
            let a = tape.leaf(&weights);
            let xn = tape.leaf(&x);
            let context = tape.matmul(a, xn).unwrap();
            assert!(
                tape.value(context).bits_eq(&x),
                "trial {trial}: p=0 context differs from input"
            );
        }
    }
    assert!(zero_aperture_cases > 20);
    pass(&format!(
        "C2 attention invariants (200 instances, {zero_aperture_cases} with p=0)"
    ));
}

// ---------------------------------------------------------------------------
// C3: knapsack equals the exhaustive-subset optimum on 500 instances.
// ---------------------------------------------------------------------------

/// Right-fold sum over ascending indices, matching the DP's association so
/// equal optima compare exactly in f64.
fn fold_value(values: &[f64], selected: &[usize]) -> f64 {
    let mut acc = 0.0;
    for i in selected.iter().rev() {
        acc += values[*i];
    }
    acc
}

#[test]
fn c3_knapsack_matches_exhaustive_search() {
    let start = Instant::now();
    let mut rng = SeededRng::from_u64(33);
    for trial in 0..500 {
        let n = rng.range_inclusive(1, 15);
        let values: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let lengths: Vec<usize> = (0..n).map(|_| rng.range_inclusive(1, 25)).collect();
        let budget = rng.below(lengths.iter().sum::<usize>() + 5);

        let selected = knapsack_select(&values, &lengths, budget);
        let used: usize = selected.iter().map(|i| lengths[*i]).sum();
        assert!(used <= budget, "trial {trial}: budget violated");
        let got = selection_value(&values, &selected);

        let mut best = 0.0f64;
        for mask in 0u32..(1 << n) {
            let subset: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let len: usize = subset.iter().map(|i| lengths[*i]).sum();
            if len <= budget {
                let v = fold_value(&values, &subset);
                if v > best {
                    best = v;
                }
            }
        }
        assert_eq!(got, best, "trial {trial}: DP {got} vs exhaustive {best}");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    pass(&format!("C3 knapsack oracle equivalence (500 instances, {elapsed:.2?})"));
}

// ---------------------------------------------------------------------------
// C4: correlation and F1 oracles.
// ---------------------------------------------------------------------------

fn tau_reference(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    let (mut con, mut dis, mut tx, mut ty) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = a[i].partial_cmp(&a[j]).unwrap();
            let dy = b[i].partial_cmp(&b[j]).unwrap();
            use std::cmp::Ordering::*;
            match (dx, dy) {
                (Equal, Equal) => {
                    tx += 1;
                    ty += 1;
                }
                (Equal, _) => tx += 1,
                (_, Equal) => ty += 1,
                (x, y) if x == y => con += 1,
                _ => dis += 1,
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as u64;
    if n0 == tx || n0 == ty {
        return None;
    }
    Some((con as f64 - dis as f64) / (((n0 - tx) as f64) * ((n0 - ty) as f64)).sqrt())
}

fn rho_reference(a: &[f64], b: &[f64]) -> Option<f64> {
    let rank = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .map(|v| {
                let less = x.iter().filter(|o| *o < v).count() as f64;
                let equal = x.iter().filter(|o| *o == v).count() as f64;
                1.0 + less + (equal - 1.0) / 2.0
            })
            .collect()
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = ra.len() as f64;
    let (ma, mb) = (
        ra.iter().sum::<f64>() / n,
        rb.iter().sum::<f64>() / n,
    );
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(rb.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

fn mask_summary(mask: Vec<u8>) -> MachineSummary {
    MachineSummary {
        selected_segments: vec![],
        budget_frames: mask.len(),
        frame_mask: mask,
    }
}

#[test]
fn c4_metric_oracles() {
    let mut rng = SeededRng::from_u64(44);
    for trial in 0..200 {
        let n = rng.range_inclusive(2, 80);
        let ties = trial % 2 == 0;
        let draw = |rng: &mut SeededRng| -> f64 {
            if ties {
                rng.below(6) as f64 / 2.0
            } else {
                rng.uniform()
            }
        };
        let a: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let b: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();

        let got_tau = kendall_tau(&a, &b).unwrap();
        let want_tau = tau_reference(&a, &b);
        match (got_tau, want_tau) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                assert!((g - w).abs() <= 1e-12, "trial {trial} tau: {g} vs {w}")
            }
            other => panic!("trial {trial}: tau definedness mismatch {other:?}"),
        }

        let got_rho = spearman_rho(&a, &b).unwrap();
        let want_rho = rho_reference(&a, &b);
        match (got_rho, want_rho) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                assert!((g - w).abs() <= 1e-12, "trial {trial} rho: {g} vs {w}")
            }
            other => panic!("trial {trial}: rho definedness mismatch {other:?}"),
        }
    }

    // Hand-counted F1 cases.
    let machine = mask_summary(vec![1, 1, 0, 0]);
    let f1 = f1_against_users(&machine, &[vec![0, 1, 1, 0]], F1Mode::Avg).unwrap();
    assert!((f1 - 0.5).abs() <= 1e-15, "overlap-1 case: {f1}");
    assert_eq!(
        f1_against_users(&machine, &[vec![1, 1, 0, 0]], F1Mode::Max).unwrap(),
        1.0
    );
    assert_eq!(
        f1_against_users(&machine, &[vec![0, 0, 1, 1]], F1Mode::Avg).unwrap(),
        0.0
    );
    // overlap 2 against a 3-frame user summary: p = 1, r = 2/3, f1 = 0.8.
    let f1 = f1_against_users(&machine, &[vec![1, 1, 1, 0]], F1Mode::Avg).unwrap();
    assert!((f1 - 0.8).abs() <= 1e-15, "p1-r23 case: {f1}");

    pass("C4 metric oracles (200 vectors + hand-counted F1 cases)");
}

// ---------------------------------------------------------------------------
// C5: positive rescaling of predictions changes nothing.
// ---------------------------------------------------------------------------

#[test]
fn c5_protocol_scale_invariance() {
    let mut rng = SeededRng::from_u64(55);
    let opts = EvalOptions::default();
    for trial in 0..50 {
        let bundle = synth_dataset(&SynthSpec {
            n_videos: 1,
            t_min: 16,
            t_max: 40,
            dims: 4,
            n_users: 4,
            seed: 5000 + trial,
        })
        .unwrap()
        .remove(0);
        let predicted: Vec<f64> = (0..bundle.t()).map(|_| 0.05 + 0.9 * rng.uniform()).collect();
        let factor = [1e-3, 0.5, 3.7, 1e4][rng.below(4)];
        let scaled: Vec<f64> = predicted.iter().map(|v| v * factor).collect();

        let sa = build_summary(&bundle, &predicted, opts.budget_fraction).unwrap();
        let sb = build_summary(&bundle, &scaled, opts.budget_fraction).unwrap();
        assert_eq!(
            sa.selected_segments, sb.selected_segments,
            "trial {trial}: selection changed under factor {factor}"
        );

        let ea = evaluate_video(&bundle, &predicted, &opts).unwrap();
        let eb = evaluate_video(&bundle, &scaled, &opts).unwrap();
        assert_eq!(ea, eb, "trial {trial}: metrics changed under factor {factor}");
    }
    pass("C5 protocol invariance under positive score scaling (50 trials)");
}

// ---------------------------------------------------------------------------
// C6: split correctness, structurally.
// ---------------------------------------------------------------------------

fn untrained_checkpoint(cfg: &ModelConfig, seed: u64) -> Checkpoint {
    Checkpoint {
        model: MsvaModel::init(cfg, seed).unwrap(),
        train_config: TrainConfig::default(),
        epoch_log: EpochLog {
            losses: vec![],
            best_epoch: 0,
        },
        rng: SeededRng::from_u64(seed).state(),
    }
}

#[test]
fn c6_split_correctness() {
    for n in [7usize, 25, 50] {
        let ids: Vec<String> = (0..n).map(|i| format!("video_{i:03}")).collect();
        let split = make_splits(&ids, 5, 123).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for fold in &split.folds {
            for id in &fold.test_ids {
                assert!(seen.insert(id.clone()), "{id} in two test folds (n={n})");
            }
        }
        assert_eq!(seen.len(), n, "coverage for n={n}");
        let sizes: Vec<usize> = split.folds.iter().map(|f| f.test_ids.len()).collect();
        let max = *sizes.iter().max().unwrap();
        let min = *sizes.iter().min().unwrap();
        assert!(max - min <= 1, "uneven folds {sizes:?} for n={n}");
    }

    // evaluate_split emits exactly one record per video.
    let bundles = synth_dataset(&SynthSpec {
        n_videos: 7,
        t_min: 10,
        t_max: 16,
        dims: 4,
        n_users: 3,
        seed: 66,
    })
    .unwrap();
    let ids: Vec<String> = bundles.iter().map(|b| b.video_id.clone()).collect();
    let split = make_splits(&ids, 5, 9).unwrap();
    let by_id: BTreeMap<String, FeatureBundle> = bundles
        .into_iter()
        .map(|b| (b.video_id.clone(), b))
        .collect();
    let cfg = ModelConfig::uniform_dims(
        Stream::ALL.to_vec(),
        4,
        FusionSpec {
            strategy: FusionStrategy::Intermediate,
            dropout_rate: 0.0,
        },
        Aperture::Unbounded,
    );
    let checkpoints: Vec<Checkpoint> = (0..5)
        .map(|i| untrained_checkpoint(&cfg, i as u64))
        .collect();
    let report = evaluate_split(&checkpoints, &split, &by_id, &EvalOptions::default()).unwrap();
    assert_eq!(report.records.len(), 7);
    let mut recorded: Vec<&str> = report.records.iter().map(|r| r.video_id.as_str()).collect();
    recorded.sort_unstable();
    let mut expected: Vec<&str> = ids.iter().map(|s| s.as_str()).collect();
    expected.sort_unstable();
    assert_eq!(recorded, expected);
    assert!(report.is_consistent(1e-12));

    pass("C6 split correctness (n in {7, 25, 50}; one record per video)");
}

// ---------------------------------------------------------------------------
// C7: learnability on the seeded synthetic dataset.
// ---------------------------------------------------------------------------

#[test]
fn c7_learnability() {
    let start = Instant::now();
    let spec = SynthSpec {
        n_videos: 10,
        t_min: 32,
        t_max: 64,
        dims: 16,
        n_users: 5,
        seed: 42,
    };
    let bundles = synth_dataset(&spec).unwrap();
    let ids: Vec<String> = bundles.iter().map(|b| b.video_id.clone()).collect();
    let split = make_splits(&ids, 5, 42).unwrap();
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

    let mut checkpoints = Vec::new();
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
        let run = train_fold(&train_bundles, &model_cfg, &train_cfg).unwrap();
        assert!(
            run.last.epoch_log.losses.len() <= 300,
            "fold {i} exceeded the epoch budget"
        );
        for bundle in &train_bundles {
            let mse = mean_eval_loss(&run.best.model, std::slice::from_ref(bundle)).unwrap();
            assert!(
                mse < 1e-3,
                "fold {i}, {}: train MSE {mse}",
                bundle.video_id
            );
        }
        checkpoints.push(run.best);
    }

    let opts = EvalOptions {
        f1_mode: F1Mode::Avg,
        ..EvalOptions::default()
    };
    let report = evaluate_split(&checkpoints, &split, &by_id, &opts).unwrap();
    let trained_f1 = report.overall.f1;

    // Uniform-random-score baseline, 5 seeds.
    let mut baseline_sum = 0.0;
    for seed in 0..5u64 {
        let mut rng = SeededRng::from_u64(900 + seed);
        let records: Vec<VideoRecord> = bundles
            .iter()
            .map(|b| {
                let scores: Vec<f64> = (0..b.t()).map(|_| rng.uniform()).collect();
                let eval = evaluate_video(b, &scores, &opts).unwrap();
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
    let baseline_f1 = baseline_sum / 5.0;
    let margin_points = 100.0 * (trained_f1 - baseline_f1);
    assert!(
        margin_points >= 10.0,
        "trained F1 {trained_f1:.3} vs baseline {baseline_f1:.3}: margin {margin_points:.1} points"
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "took {elapsed:?}");
    pass(&format!(
        "C7 learnability (train MSE < 1e-3 on all folds; F1 {trained_f1:.3} vs baseline {baseline_f1:.3}, +{margin_points:.1} points, {elapsed:.1?})"
    ));
}

// ---------------------------------------------------------------------------
// C8: byte-identical artifacts across two full pipeline runs.
// ---------------------------------------------------------------------------

fn collect_files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn c8_pipeline_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |root: &Path| {
        let spec = SynthSpec {
            n_videos: 6,
            t_min: 10,
            t_max: 16,
            dims: 6,
            n_users: 3,
            seed: 88,
        };
        cmd_synth(&spec, "deterministic", &root.join("data")).unwrap();
        let flags = RunOverrides {
            epochs: Some(15),
            lr: Some(1e-3),
            dropout: Some(0.3),
            aperture: Some(Aperture::Unbounded),
            seed: Some(808),
            ..RunOverrides::default()
        };
        let cfg = RunConfig::resolve(
            root.join("data/manifest.json"),
            root.join("out"),
            None,
            flags,
        );
        let splits_path = root.join("splits.json");
        cmd_splits(&cfg.manifest, 3, 88, &splits_path).unwrap();
        cmd_train(&cfg, &splits_path).unwrap();
        cmd_eval(&cfg, &splits_path, &cfg.out_dir).unwrap();
    };
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&a);
    run(&b);

    let files_a = collect_files(&a);
    let files_b = collect_files(&b);
    assert_eq!(
        files_a.len(),
        files_b.len(),
        "runs produced different file sets"
    );
    for ((path_a, bytes_a), (path_b, bytes_b)) in files_a.iter().zip(files_b.iter()) {
        assert_eq!(path_a, path_b);
        assert_eq!(
            bytes_a, bytes_b,
            "{} differs between identical runs",
            path_a.display()
        );
    }
    assert!(a.join("out/report.csv").exists());
    assert!(a.join("out/curves").is_dir());
    assert!(a.join("out/fold_0/best/manifest.json").exists());
    pass(&format!(
        "C8 determinism ({} artifacts byte-identical across two runs)",
        files_a.len()
    ));
}

// ---------------------------------------------------------------------------
// C9: persistence round trips.
// ---------------------------------------------------------------------------

#[test]
fn c9_round_trips() {
    let tmp = tempfile::tempdir().unwrap();

    // 10 random bundles.
    for i in 0..10u64 {
        let spec = SynthSpec {
            n_videos: 1,
            t_min: 6 + (i as usize % 5) * 4,
            t_max: 10 + (i as usize % 5) * 6,
            dims: 2 + (i as usize % 4),
            n_users: 1 + (i as usize % 4),
            seed: 7000 + i,
        };
        let bundle = synth_dataset(&spec).unwrap().remove(0);
        let dir_a = tmp.path().join(format!("bundle_{i}_a"));
        let dir_b = tmp.path().join(format!("bundle_{i}_b"));
        write_bundle(&bundle, &dir_a).unwrap();
        let loaded = load_bundle(&dir_a).unwrap();
        assert_eq!(loaded, bundle, "bundle {i} in-memory round trip");
        write_bundle(&loaded, &dir_b).unwrap();
        assert_eq!(
            collect_files(&dir_a),
            collect_files(&dir_b),
            "bundle {i} byte round trip"
        );
    }

    // 10 random checkpoints over varying architectures.
    for i in 0..10u64 {
        let fusion = [
            FusionStrategy::Early,
            FusionStrategy::Intermediate,
            FusionStrategy::Late,
        ][i as usize % 3];
        let streams: Vec<Stream> = Stream::ALL[..1 + (i as usize % 3)].to_vec();
        let cfg = ModelConfig::uniform_dims(
            streams,
            3 + (i as usize % 5),
            FusionSpec {
                strategy: fusion,
                dropout_rate: 0.1 * (i % 5) as f64,
            },
            if i % 2 == 0 {
                Aperture::Bounded(2 + i as usize)
            } else {
                Aperture::Unbounded
            },
        );
        let mut rng = SeededRng::from_u64(8000 + i);
        for _ in 0..i {
            rng.uniform();
        }
        let ckpt = Checkpoint {
            model: MsvaModel::init(&cfg, 8000 + i).unwrap(),
            train_config: TrainConfig {
                seed: i,
                learning_rate: 1e-4 * (i + 1) as f64,
                ..TrainConfig::default()
            },
            epoch_log: EpochLog {
                losses: (0..i).map(|e| 1.0 / (e + 1) as f64).collect(),
                best_epoch: (i as usize).saturating_sub(1),
            },
            rng: rng.state(),
        };
        let dir_a = tmp.path().join(format!("ckpt_{i}_a"));
        let dir_b = tmp.path().join(format!("ckpt_{i}_b"));
        save_checkpoint(&ckpt, &dir_a).unwrap();
        let loaded = load_checkpoint(&dir_a).unwrap();
        assert_eq!(loaded, ckpt, "checkpoint {i} in-memory round trip");
        for ((name, a), (_, b)) in ckpt
            .model
            .named_params()
            .iter()
            .zip(loaded.model.named_params().iter())
        {
            assert!(a.bits_eq(b), "checkpoint {i}: parameter {name} bits differ");
        }
        save_checkpoint(&loaded, &dir_b).unwrap();
        assert_eq!(
            collect_files(&dir_a),
            collect_files(&dir_b),
            "checkpoint {i} byte round trip"
        );
    }

    pass("C9 round trips (10 bundles + 10 checkpoints, bit-exact)");
}

// ---------------------------------------------------------------------------
// C10 (optional): reproduction on converted real benchmark bundles.
// ---------------------------------------------------------------------------

/// Runs only when MSVA_REAL_DATA points at a directory with converted
/// `summe/manifest.json` and/or `tvsum/manifest.json` datasets (see the
/// README for the conversion mapping). Checks the 5-fold intermediate-fusion
/// F1 against the reference levels within +/- 3 points.
#[test]
fn c10_real_benchmarks_optional() {
    let Some(root) = std::env::var_os("MSVA_REAL_DATA") else {
        println!("[acceptance] C10 real benchmarks: SKIPPED (MSVA_REAL_DATA not set)");
        return;
    };
    let root = PathBuf::from(root);
    let cases = [
        ("summe", F1Mode::Max, 53.4),
        ("tvsum", F1Mode::Avg, 61.5),
    ];
    let mut ran_any = false;
    for (name, f1_mode, expected) in cases {
        let manifest_path = root.join(name).join("manifest.json");
        if !manifest_path.exists() {
            println!("[acceptance] C10 {name}: SKIPPED (no {})", manifest_path.display());
            continue;
        }
        ran_any = true;
        let out = tempfile::tempdir().unwrap();
        let flags = RunOverrides {
            aperture: Some(Aperture::Bounded(250)),
            fusion: Some(FusionStrategy::Intermediate),
            epochs: Some(300),
            f1_mode: Some(f1_mode),
            seed: Some(12345),
            ..RunOverrides::default()
        };
        let cfg = RunConfig::resolve(
            manifest_path.clone(),
            out.path().to_path_buf(),
            None,
            flags,
        );
        let splits_path = out.path().join("splits.json");
        cmd_splits(&manifest_path, 5, 12345, &splits_path).unwrap();
        cmd_train(&cfg, &splits_path).unwrap();
        let report = cmd_eval(&cfg, &splits_path, &cfg.out_dir).unwrap();
        let f1_points = 100.0 * report.overall.f1;
        assert!(
            (f1_points - expected).abs() <= 3.0,
            "{name}: F1 {f1_points:.1} vs expected {expected} +/- 3.0"
        );
        pass(&format!("C10 {name} reproduction (F1 {f1_points:.1})"));
    }
    if !ran_any {
        println!("[acceptance] C10 real benchmarks: SKIPPED (no datasets found)");
    }
}
