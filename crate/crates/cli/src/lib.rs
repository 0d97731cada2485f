//! Command implementations behind the `specfocus` binary.
//!
//! Every command takes a serde run configuration (loadable from JSON, with
//! command-line overrides applied on top), writes its artifacts under the
//! configured output directory and snapshots the resolved configuration as
//! `resolved_config.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use specfocus::dataset::{
    generate_dataset, open_dataset, DatasetHeader, DatasetManifest, DatasetSummary, Split, SynthConfig,
};
use specfocus::eval::{
    buckets_to_csv, evaluate_model, EvalOptions, EvalRecord, FocusEstimator, GroundTruthOracle, MetricsReport,
};
use specfocus::nn::{load_weights, FocusModel, ModelConfig, Variant, DEFAULT_BASE_CHANNELS};
use specfocus::optics::{generate_slide_with, PhantomParams, VirtualSlide};
use specfocus::scope::{scan_slide, write_scan_outputs, ScanConfig, ScanReport};
use specfocus::train::{resolve_best_weights, EpochRecord, TrainConfig, Trainer, BEST_WEIGHTS};

pub const RESOLVED_CONFIG: &str = "resolved_config.json";
pub const METRICS_JSON: &str = "metrics.json";
pub const BUCKETS_CSV: &str = "error_vs_distance.csv";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const ABLATION_CSV: &str = "ablation.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 for usage and configuration errors, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<specfocus::Error> for CliError {
    fn from(e: specfocus::Error) -> Self {
        match e {
            specfocus::Error::Config(_) | specfocus::Error::Parameter(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Reads a base configuration from JSON; `None` gives the defaults.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

fn write_resolved<T: Serialize>(out_dir: &Path, config: &T) -> CliResult<()> {
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    fs::write(out_dir.join(RESOLVED_CONFIG), serde_json::to_string_pretty(config)?)?;
    Ok(())
}

fn require_out_dir(p: &Path) -> CliResult<()> {
    if p.as_os_str().is_empty() {
        return Err(CliError::Usage("an output directory is required".into()));
    }
    Ok(())
}

fn open(root: &Path) -> CliResult<(DatasetHeader, Vec<DatasetManifest>)> {
    open_dataset(root).map_err(|e| CliError::Runtime(format!("cannot open dataset {}: {e}", root.display())))
}

fn manifest(manifests: &[DatasetManifest], split: Split) -> &DatasetManifest {
    manifests.iter().find(|m| m.split == split).expect("open_dataset returns every split")
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthRun {
    pub out_dir: PathBuf,
    /// Drives slide generation, sensor noise and the slide split.
    pub seed: u64,
    pub synth: SynthConfig,
}

impl SynthRun {
    fn resolved(&self) -> SynthConfig {
        let mut cfg = self.synth.clone();
        cfg.seed = self.seed;
        cfg.split_seed = self.seed;
        cfg.optics.seed = self.seed;
        cfg
    }
}

pub fn cmd_synth(run: &SynthRun) -> CliResult<DatasetSummary> {
    require_out_dir(&run.out_dir)?;
    let cfg = run.resolved();
    cfg.validate()?;
    write_resolved(&run.out_dir, &SynthRun { synth: cfg.clone(), ..run.clone() })?;
    Ok(generate_dataset(&cfg, &run.out_dir)?)
}

pub fn synth_summary_line(s: &DatasetSummary) -> String {
    format!(
        "slides={} (train={} val={} test={}) stacks={} patches: train={} val={} test={}",
        s.slides.train.len() + s.slides.val.len() + s.slides.test.len(),
        s.slides.train.len(),
        s.slides.val.len(),
        s.slides.test.len(),
        s.n_stacks,
        s.patch_counts.train,
        s.patch_counts.val,
        s.patch_counts.test
    )
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRun {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    /// Seeds the weight initialization, shuffling and augmentation.
    pub seed: u64,
    pub variant: Variant,
    pub base_channels: usize,
    pub train: TrainConfig,
    /// Depth of field of the training data; filled in from the dataset.
    pub dataset_dof_um: Option<f64>,
}

impl Default for TrainRun {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            out_dir: PathBuf::new(),
            seed: 0,
            variant: Variant::Spatiospectral,
            base_channels: DEFAULT_BASE_CHANNELS,
            train: TrainConfig::default(),
            dataset_dof_um: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub best_weights: PathBuf,
    pub best_epoch: usize,
    pub best_val_fe_um: f64,
    pub history: Vec<EpochRecord>,
    pub param_count: usize,
}

pub fn cmd_train(run: &TrainRun, on_epoch: impl FnMut(&EpochRecord)) -> CliResult<TrainSummary> {
    require_out_dir(&run.out_dir)?;
    let mut train_cfg = run.train.clone();
    train_cfg.seed = run.seed;
    train_cfg.validate()?;
    let model_cfg = ModelConfig::new(run.variant, run.base_channels);
    model_cfg.validate()?;

    let (header, manifests) = open(&run.dataset)?;
    let resolved = TrainRun {
        train: train_cfg.clone(),
        dataset_dof_um: Some(header.dof_um),
        ..run.clone()
    };
    write_resolved(&run.out_dir, &resolved)?;

    let train = specfocus::dataset::load_samples(&run.dataset, manifest(&manifests, Split::Train))?;
    let val = specfocus::dataset::load_samples(&run.dataset, manifest(&manifests, Split::Val))?;
    if train.is_empty() || val.is_empty() {
        return Err(CliError::Runtime("the dataset has an empty train or val split".into()));
    }
    let model = FocusModel::new(model_cfg, run.seed)?;
    let param_count = model.param_count();
    let outcome = Trainer::new(train_cfg)
        .out_dir(&run.out_dir)
        .on_epoch(on_epoch)
        .run(model, &train, &val)?;
    let best_weights = run.out_dir.join(BEST_WEIGHTS);
    if !best_weights.is_file() {
        return Err(CliError::Runtime("training finished without a best checkpoint".into()));
    }
    Ok(TrainSummary {
        best_weights,
        best_epoch: outcome.best.epoch,
        best_val_fe_um: outcome.best.val_fe_um,
        history: outcome.history,
        param_count,
    })
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalRun {
    pub dataset: PathBuf,
    /// Weight file, or a training output directory (its best checkpoint is used).
    pub weights: Option<PathBuf>,
    /// Score the ground-truth oracle instead of a model.
    pub oracle: bool,
    pub split: Split,
    pub out_dir: PathBuf,
    /// Overrides the dataset's depth of field when set.
    pub dof_um: Option<f64>,
    pub options: EvalOptions,
}

impl Default for EvalRun {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            weights: None,
            oracle: false,
            split: Split::Test,
            out_dir: PathBuf::new(),
            dof_um: None,
            options: EvalOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub report: MetricsReport,
    pub records: Vec<EvalRecord>,
    pub warnings: Vec<String>,
}

/// Either a trained model or the oracle, chosen by the run configuration.
enum Estimator {
    Model(Box<FocusModel>),
    Oracle,
}

impl Estimator {
    fn as_dyn(&self) -> &dyn FocusEstimator {
        match self {
            Estimator::Model(m) => m.as_ref(),
            Estimator::Oracle => &GroundTruthOracle,
        }
    }
}

fn load_estimator(weights: Option<&Path>, oracle: bool) -> CliResult<(Estimator, Option<PathBuf>)> {
    if oracle {
        return Ok((Estimator::Oracle, None));
    }
    let Some(w) = weights else {
        return Err(CliError::Usage("either weights or the oracle flag is required".into()));
    };
    let path = resolve_best_weights(w).map_err(|e| CliError::Runtime(e.to_string()))?;
    let model = load_weights(&path).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok((Estimator::Model(Box::new(model)), Some(path)))
}

/// Depth of field recorded by the training run that produced `weights`, if any.
fn training_dof(weights: &Path) -> Option<f64> {
    let cfg = weights.parent()?.join(RESOLVED_CONFIG);
    let run: TrainRun = serde_json::from_str(&fs::read_to_string(cfg).ok()?).ok()?;
    run.dataset_dof_um
}

pub fn records_to_csv(records: &[EvalRecord]) -> String {
    let mut s = String::from("slide_id,fov_id,slice_idx,tile_x,tile_y,aggregated,true_z_um,pred_z_um\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{:.6}\n",
            r.source.slide_id,
            r.source.fov_id,
            r.source.slice_idx,
            r.source.tile_xy.0,
            r.source.tile_xy.1,
            r.aggregated,
            r.true_z_um,
            r.pred_z_um
        ));
    }
    s
}

pub fn cmd_eval(run: &EvalRun) -> CliResult<EvalSummary> {
    require_out_dir(&run.out_dir)?;
    let (estimator, weights_path) = load_estimator(run.weights.as_deref(), run.oracle)?;
    let (header, manifests) = open(&run.dataset)?;
    let mut warnings = Vec::new();
    if let Some(trained) = weights_path.as_deref().and_then(training_dof) {
        if (trained - header.dof_um).abs() > 1e-9 {
            warnings.push(format!(
                "model was trained with dof {trained} um but the dataset uses {} um; scoring with the dataset value",
                header.dof_um
            ));
        }
    }
    let mut options = run.options.clone();
    options.dof_um = run.dof_um.unwrap_or(header.dof_um);
    let resolved = EvalRun {
        options: options.clone(),
        weights: weights_path.or(run.weights.clone()),
        ..run.clone()
    };
    write_resolved(&run.out_dir, &resolved)?;

    let (report, records) = evaluate_model(estimator.as_dyn(), &run.dataset, manifest(&manifests, run.split), &options)?;
    fs::write(run.out_dir.join(METRICS_JSON), serde_json::to_string_pretty(&report)?)?;
    fs::write(run.out_dir.join(BUCKETS_CSV), buckets_to_csv(&report.buckets))?;
    fs::write(run.out_dir.join(PREDICTIONS_CSV), records_to_csv(&records))?;
    Ok(EvalSummary {
        report,
        records,
        warnings,
    })
}

// ---------------------------------------------------------------- ablate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateRun {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub base_channels: usize,
    pub train: TrainConfig,
    pub split: Split,
    pub options: EvalOptions,
}

impl Default for AblateRun {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            out_dir: PathBuf::new(),
            seeds: vec![0],
            variants: Variant::ALL.to_vec(),
            base_channels: DEFAULT_BASE_CHANNELS,
            train: TrainConfig::default(),
            split: Split::Test,
            options: EvalOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub param_count: usize,
    pub best_epoch: usize,
    pub report: MetricsReport,
}

pub const ABLATION_CSV_HEADER: &str = "variant,seed,param_count,best_epoch,fe_mean_um,fe_std_um,fd_pct,dof_pct";

pub fn ablation_to_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from(ABLATION_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{:.4},{:.4},{:.2},{:.2}\n",
            r.variant,
            r.seed,
            r.param_count,
            r.best_epoch,
            r.report.fe_mean_um,
            r.report.fe_std_um,
            100.0 * r.report.fd_rate,
            100.0 * r.report.dof_rate
        ));
    }
    s
}

/// Trains and evaluates every variant for every seed, one output directory
/// per run, and writes the comparison table.
pub fn cmd_ablate(run: &AblateRun, mut on_epoch: impl FnMut(Variant, u64, &EpochRecord)) -> CliResult<Vec<AblationRow>> {
    require_out_dir(&run.out_dir)?;
    if run.seeds.is_empty() || run.variants.is_empty() {
        return Err(CliError::Usage("ablation needs at least one seed and one variant".into()));
    }
    write_resolved(&run.out_dir, run)?;
    let mut rows = Vec::new();
    for &seed in &run.seeds {
        for &variant in &run.variants {
            let dir = run.out_dir.join(format!("{variant}_s{seed}"));
            let t = cmd_train(
                &TrainRun {
                    dataset: run.dataset.clone(),
                    out_dir: dir.clone(),
                    seed,
                    variant,
                    base_channels: run.base_channels,
                    train: run.train.clone(),
                    dataset_dof_um: None,
                },
                |r| on_epoch(variant, seed, r),
            )?;
            let e = cmd_eval(&EvalRun {
                dataset: run.dataset.clone(),
                weights: Some(t.best_weights.clone()),
                split: run.split,
                out_dir: dir.join("eval"),
                options: run.options.clone(),
                ..EvalRun::default()
            })?;
            rows.push(AblationRow {
                variant,
                seed,
                param_count: t.param_count,
                best_epoch: t.best_epoch,
                report: e.report,
            });
            fs::write(run.out_dir.join(ABLATION_CSV), ablation_to_csv(&rows))?;
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------- scan

/// Procedural slide to scan, sized to a whole number of fields of view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlideSpec {
    pub slide_id: String,
    /// Fields of view along x and y.
    pub grid: (usize, usize),
    pub tissue_fraction: f64,
    pub focal_amplitude_um: f64,
}

impl Default for SlideSpec {
    fn default() -> Self {
        Self {
            slide_id: "scan_slide".into(),
            grid: (4, 4),
            tissue_fraction: 0.55,
            focal_amplitude_um: 5.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanRun {
    pub out_dir: PathBuf,
    /// Seeds the slide phantom and the sensor noise.
    pub seed: u64,
    pub weights: Option<PathBuf>,
    pub oracle: bool,
    /// When set, the optics are taken from this dataset so the scanner
    /// images the slide the way the model saw its training data.
    pub dataset: Option<PathBuf>,
    pub slide: SlideSpec,
    pub scan: ScanConfig,
}

/// Builds the phantom described by `spec` for `scan`'s field of view.
pub fn build_scan_slide(spec: &SlideSpec, scan: &ScanConfig, seed: u64) -> CliResult<VirtualSlide> {
    let (fw, fh) = scan.low_res_px();
    let (nx, ny) = spec.grid;
    if nx == 0 || ny == 0 {
        return Err(CliError::Usage("slide grid must be non-empty".into()));
    }
    let mut p = PhantomParams::new(seed, (nx * fw, ny * fh), spec.tissue_fraction);
    p.focal_amplitude_um = spec.focal_amplitude_um;
    Ok(generate_slide_with(&p)?)
}

pub fn cmd_scan(run: &ScanRun) -> CliResult<ScanReport> {
    require_out_dir(&run.out_dir)?;
    let (estimator, weights_path) = load_estimator(run.weights.as_deref(), run.oracle)?;
    let mut scan = run.scan.clone();
    if let Some(ds) = &run.dataset {
        scan.optics = open(ds)?.0.optics;
    }
    scan.optics.seed = run.seed;
    scan.validate()?;
    write_resolved(
        &run.out_dir,
        &ScanRun {
            weights: weights_path.or(run.weights.clone()),
            scan: scan.clone(),
            ..run.clone()
        },
    )?;
    let slide = build_scan_slide(&run.slide, &scan, run.seed)?;
    let report = scan_slide(&slide, &run.slide.slide_id, estimator.as_dyn(), &scan, Some(&run.out_dir))?;
    write_scan_outputs(&report, &run.out_dir)?;
    if !report.complete {
        return Err(CliError::Runtime(format!(
            "scan aborted: {}",
            report.error.as_deref().unwrap_or("unknown error")
        )));
    }
    Ok(report)
}
