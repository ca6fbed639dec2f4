//! Pipeline commands behind the `msva` binary: split generation, synthetic
//! data, per-fold training, evaluation/report emission, and the ablation
//! grid. Everything here is a plain function so the same pipelines are
//! drivable from tests and examples.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    load_bundle, make_splits, synth_dataset, write_bundle, DataError, DatasetManifest,
    FeatureBundle, FoldSplit, SynthSpec, VideoEntry,
};
use crate::eval::{
    evaluate_split, evaluate_video, predict_scores, upsample_scores, EvalError, EvalOptions,
    EvalReport, F1Mode, VideoRecord,
};
use crate::model::{Aperture, FusionSpec, FusionStrategy, ModelConfig, ModelError};
use crate::stream::Stream;
use crate::train::{
    load_checkpoint, save_checkpoint, train_fold, Checkpoint, TrainConfig, TrainError,
};

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid input data (bad bundles, missing files, malformed formats).
    #[error("{0}")]
    Validation(String),
    /// Invalid configuration (flags, config files, parameter combinations).
    #[error("{0}")]
    Config(String),
}

impl CliError {
    /// Stable exit-code contract: 0 success, 1 validation failure,
    /// 2 configuration error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Config(_) => 2,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(msg) => CliError::Config(msg),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(msg) => CliError::Config(msg),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(msg) => CliError::Config(msg),
            TrainError::Model(m) => m.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(msg) => CliError::Config(msg),
            EvalError::Model(m) => m.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

/// Fully resolved settings of a train/eval run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub streams: Vec<Stream>,
    pub fusion: FusionStrategy,
    pub dropout: f64,
    pub aperture: Aperture,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub stall_patience: usize,
    pub stall_tolerance: f64,
    pub f1_mode: F1Mode,
    pub budget_fraction: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

/// Partial settings, as read from a config file or from command-line flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOverrides {
    pub streams: Option<Vec<Stream>>,
    pub fusion: Option<FusionStrategy>,
    pub dropout: Option<f64>,
    pub aperture: Option<Aperture>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub stall_patience: Option<usize>,
    pub stall_tolerance: Option<f64>,
    pub f1_mode: Option<F1Mode>,
    pub budget_fraction: Option<f64>,
    pub seed: Option<u64>,
}

impl RunOverrides {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&raw)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }
}

impl RunConfig {
    /// Precedence: command-line flags over config-file values over defaults.
    pub fn resolve(
        manifest: PathBuf,
        out_dir: PathBuf,
        file: Option<RunOverrides>,
        flags: RunOverrides,
    ) -> RunConfig {
        let file = file.unwrap_or_default();
        let mut streams = flags
            .streams
            .or(file.streams)
            .unwrap_or_else(|| Stream::ALL.to_vec());
        streams.sort();
        streams.dedup();
        RunConfig {
            manifest,
            streams,
            fusion: flags
                .fusion
                .or(file.fusion)
                .unwrap_or(FusionStrategy::Intermediate),
            dropout: flags.dropout.or(file.dropout).unwrap_or(0.5),
            aperture: flags
                .aperture
                .or(file.aperture)
                .unwrap_or(Aperture::Bounded(250)),
            epochs: flags.epochs.or(file.epochs).unwrap_or(300),
            lr: flags.lr.or(file.lr).unwrap_or(5e-5),
            weight_decay: flags.weight_decay.or(file.weight_decay).unwrap_or(1e-5),
            stall_patience: flags.stall_patience.or(file.stall_patience).unwrap_or(50),
            stall_tolerance: flags
                .stall_tolerance
                .or(file.stall_tolerance)
                .unwrap_or(1e-6),
            f1_mode: flags.f1_mode.or(file.f1_mode).unwrap_or(F1Mode::Avg),
            budget_fraction: flags
                .budget_fraction
                .or(file.budget_fraction)
                .unwrap_or(0.15),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            out_dir,
        }
    }

    pub fn model_config(&self, manifest: &DatasetManifest) -> Result<ModelConfig, CliError> {
        let mut dims = BTreeMap::new();
        for s in &self.streams {
            let d = manifest.dims.get(s).ok_or_else(|| {
                CliError::Config(format!("manifest has no feature dimension for stream {s}"))
            })?;
            dims.insert(*s, *d);
        }
        let cfg = ModelConfig {
            streams: self.streams.clone(),
            dims,
            fusion: FusionSpec {
                strategy: self.fusion,
                dropout_rate: self.dropout,
            },
            aperture: self.aperture,
            scale: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self, fold: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            max_epochs: self.epochs,
            stall_patience: self.stall_patience,
            stall_tolerance: self.stall_tolerance,
            l2_weight_decay: self.weight_decay,
            seed: fold_seed(self.seed, fold),
            ..TrainConfig::default()
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            budget_fraction: self.budget_fraction,
            f1_mode: self.f1_mode,
        }
    }
}

/// Per-fold training seed derived from the run seed.
pub fn fold_seed(base: u64, fold: usize) -> u64 {
    base ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, content)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

/// Loads and validates every bundle named by a manifest.
pub fn load_all_bundles(
    manifest: &DatasetManifest,
    manifest_path: &Path,
) -> Result<BTreeMap<String, FeatureBundle>, CliError> {
    let mut out = BTreeMap::new();
    for entry in &manifest.videos {
        let dir = manifest
            .bundle_dir(manifest_path, &entry.id)
            .expect("entry comes from the manifest");
        let bundle = load_bundle(&dir)?;
        if bundle.video_id != entry.id {
            return Err(CliError::Validation(format!(
                "bundle at {} calls itself {:?} but the manifest says {:?}",
                dir.display(),
                bundle.video_id,
                entry.id
            )));
        }
        out.insert(entry.id.clone(), bundle);
    }
    Ok(out)
}

/// Generates non-overlapping splits for a dataset manifest.
pub fn cmd_splits(
    manifest_path: &Path,
    k: usize,
    seed: u64,
    out: &Path,
) -> Result<FoldSplit, CliError> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let split = make_splits(&manifest.video_ids(), k, seed)?;
    split.save(out)?;
    Ok(split)
}

/// Writes a synthetic dataset (bundle directories plus manifest) and
/// re-validates everything from disk.
pub fn cmd_synth(spec: &SynthSpec, name: &str, out: &Path) -> Result<DatasetManifest, CliError> {
    let bundles = synth_dataset(spec)?;
    let mut videos = Vec::with_capacity(bundles.len());
    for bundle in &bundles {
        let dir = out.join(&bundle.video_id);
        write_bundle(bundle, &dir)?;
        load_bundle(&dir)?;
        videos.push(VideoEntry {
            id: bundle.video_id.clone(),
            dir: bundle.video_id.clone(),
        });
    }
    let manifest = DatasetManifest {
        name: name.to_string(),
        dims: Stream::ALL.iter().map(|s| (*s, spec.dims)).collect(),
        videos,
    };
    manifest.save(&out.join("manifest.json"))?;
    Ok(manifest)
}

fn epoch_log_csv(log: &crate::train::EpochLog) -> String {
    let mut out = String::from("epoch,mean_train_mse\n");
    for (epoch, loss) in log.losses.iter().enumerate() {
        out.push_str(&format!("{epoch},{loss}\n"));
    }
    out
}

/// Trains one model per fold; writes `fold_<i>/best`, `fold_<i>/last`
/// checkpoints and `fold_<i>/epochs.csv` under the run's output directory.
pub fn cmd_train(cfg: &RunConfig, splits_path: &Path) -> Result<(), CliError> {
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    let split = FoldSplit::load(splits_path)?;
    let model_cfg = cfg.model_config(&manifest)?;
    cfg.train_config(0).validate_strict()?;
    let bundles = load_all_bundles(&manifest, &cfg.manifest)?;

    for (i, fold) in split.folds.iter().enumerate() {
        let train_bundles: Vec<FeatureBundle> = fold
            .train_ids
            .iter()
            .map(|id| {
                bundles
                    .get(id)
                    .cloned()
                    .ok_or_else(|| CliError::Config(format!("split references unknown video {id:?}")))
            })
            .collect::<Result<_, _>>()?;
        let run = train_fold(&train_bundles, &model_cfg, &cfg.train_config(i))?;
        let fold_dir = cfg.out_dir.join(format!("fold_{i}"));
        save_checkpoint(&run.best, &fold_dir.join("best"))?;
        save_checkpoint(&run.last, &fold_dir.join("last"))?;
        write_text(
            &fold_dir.join("epochs.csv"),
            &epoch_log_csv(&run.last.epoch_log),
        )?;
    }
    Ok(())
}

fn load_fold_checkpoints(dir: &Path, k: usize) -> Result<Vec<Checkpoint>, CliError> {
    (0..k)
        .map(|i| Ok(load_checkpoint(&dir.join(format!("fold_{i}")).join("best"))?))
        .collect()
}

/// Evaluates trained checkpoints over the split: emits `report.csv`, one
/// `curves/<id>.csv` per video (frame, predicted, gtscore) and
/// `f1_per_video.csv` bar data.
pub fn cmd_eval(
    cfg: &RunConfig,
    splits_path: &Path,
    checkpoints_dir: &Path,
) -> Result<EvalReport, CliError> {
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    let split = FoldSplit::load(splits_path)?;
    let bundles = load_all_bundles(&manifest, &cfg.manifest)?;
    let checkpoints = load_fold_checkpoints(checkpoints_dir, split.k())?;
    let opts = cfg.eval_options();

    let mut records = Vec::new();
    for (fold, (ckpt, fold_spec)) in checkpoints.iter().zip(split.folds.iter()).enumerate() {
        for id in &fold_spec.test_ids {
            let bundle = bundles
                .get(id)
                .ok_or_else(|| CliError::Config(format!("split references unknown video {id:?}")))?;
            let predicted = predict_scores(&ckpt.model, bundle)?;
            let eval = evaluate_video(bundle, &predicted, &opts)?;

            let full_pred = upsample_scores(&bundle.picks, &predicted, bundle.n_frames);
            let full_gt =
                upsample_scores(&bundle.picks, bundle.gtscore.data(), bundle.n_frames);
            let mut curve = String::from("frame,predicted,gtscore\n");
            for frame in 0..bundle.n_frames {
                curve.push_str(&format!("{frame},{},{}\n", full_pred[frame], full_gt[frame]));
            }
            write_text(&cfg.out_dir.join("curves").join(format!("{id}.csv")), &curve)?;

            records.push(VideoRecord {
                video_id: id.clone(),
                fold,
                f1: eval.f1,
                tau: eval.tau,
                rho: eval.rho,
            });
        }
    }
    let report = EvalReport::from_records(records, split.k());
    write_text(&cfg.out_dir.join("report.csv"), &report.to_csv())?;

    let mut bars = String::from("video_id,f1\n");
    for r in &report.records {
        bars.push_str(&format!("{},{}\n", r.video_id, r.f1));
    }
    write_text(&cfg.out_dir.join("f1_per_video.csv"), &bars)?;
    Ok(report)
}

/// One ablation axis combination.
#[derive(Debug, Clone)]
pub struct AblationGrid {
    pub fusions: Vec<FusionStrategy>,
    pub stream_sets: Vec<Vec<Stream>>,
    pub apertures: Vec<Aperture>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub fusion: FusionStrategy,
    pub streams: Vec<Stream>,
    pub aperture: Aperture,
    pub f1: f64,
}

fn cell_label(fusion: FusionStrategy, streams: &[Stream], aperture: Aperture) -> String {
    let names: Vec<&str> = streams.iter().map(|s| s.name()).collect();
    format!("{fusion}_{}_{aperture}", names.join("+"))
}

fn worker_count(cells: usize) -> Result<usize, CliError> {
    match std::env::var("MSVA_THREADS") {
        Err(_) => Ok(std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
            .min(cells.max(1))),
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .map_err(|_| CliError::Config(format!("MSVA_THREADS must be a positive integer, got {raw:?}")))?;
            if n == 0 {
                return Err(CliError::Config("MSVA_THREADS must be >= 1".into()));
            }
            Ok(n.min(cells.max(1)))
        }
    }
}

/// Trains and evaluates every grid cell; emits one Table-style CSV row per
/// cell (F1 scaled to 0-100) plus a per-cell report under `cells/<label>/`.
///
/// Cells run on a worker pool bounded by the `MSVA_THREADS` environment
/// variable; outputs are written in grid order regardless of scheduling.
pub fn cmd_ablate(
    cfg: &RunConfig,
    grid: &AblationGrid,
    splits_path: &Path,
) -> Result<Vec<AblationRow>, CliError> {
    if grid.fusions.is_empty() || grid.stream_sets.is_empty() || grid.apertures.is_empty() {
        return Err(CliError::Config("ablation grid axes must be non-empty".into()));
    }
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    let split = FoldSplit::load(splits_path)?;
    let bundles = load_all_bundles(&manifest, &cfg.manifest)?;

    let mut cells = Vec::new();
    for fusion in &grid.fusions {
        for streams in &grid.stream_sets {
            for aperture in &grid.apertures {
                cells.push((*fusion, streams.clone(), *aperture));
            }
        }
    }

    let results: Mutex<Vec<Option<Result<AblationRow, CliError>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = worker_count(cells.len())?;

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let (fusion, ref streams, aperture) = cells[i];
                let outcome = run_cell(cfg, &manifest, &split, &bundles, fusion, streams, aperture);
                results.lock().unwrap()[i] = Some(outcome);
            });
        }
    });

    let mut rows = Vec::with_capacity(cells.len());
    for slot in results.into_inner().unwrap() {
        rows.push(slot.expect("every cell ran")?);
    }

    let mut csv = String::from("dataset,fusion,features,f1\n");
    for row in &rows {
        let names: Vec<&str> = row.streams.iter().map(|s| s.name()).collect();
        csv.push_str(&format!(
            "{},{},{},{:.2}\n",
            manifest.name,
            row.fusion,
            names.join("+"),
            100.0 * row.f1
        ));
    }
    write_text(&cfg.out_dir.join("ablation.csv"), &csv)?;
    Ok(rows)
}

fn run_cell(
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    split: &FoldSplit,
    bundles: &BTreeMap<String, FeatureBundle>,
    fusion: FusionStrategy,
    streams: &[Stream],
    aperture: Aperture,
) -> Result<AblationRow, CliError> {
    let mut cell_cfg = cfg.clone();
    cell_cfg.fusion = fusion;
    cell_cfg.streams = streams.to_vec();
    cell_cfg.aperture = aperture;
    let model_cfg = cell_cfg.model_config(manifest)?;
    cell_cfg.train_config(0).validate_strict()?;

    let mut checkpoints = Vec::with_capacity(split.k());
    for (i, fold) in split.folds.iter().enumerate() {
        let train_bundles: Vec<FeatureBundle> = fold
            .train_ids
            .iter()
            .map(|id| {
                bundles
                    .get(id)
                    .cloned()
                    .ok_or_else(|| CliError::Config(format!("split references unknown video {id:?}")))
            })
            .collect::<Result<_, _>>()?;
        let run = train_fold(&train_bundles, &model_cfg, &cell_cfg.train_config(i))?;
        checkpoints.push(run.best);
    }
    let report = evaluate_split(&checkpoints, split, bundles, &cell_cfg.eval_options())?;
    let label = cell_label(fusion, streams, aperture);
    write_text(
        &cfg.out_dir.join("cells").join(&label).join("report.csv"),
        &report.to_csv(),
    )?;
    Ok(AblationRow {
        fusion,
        streams: streams.to_vec(),
        aperture,
        f1: report.overall.f1,
    })
}
