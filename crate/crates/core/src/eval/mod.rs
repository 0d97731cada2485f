//! Focus metrics: focus error (FE), false-direction rate (FD), depth-of-field
//! rate, per-image aggregation and the error-versus-distance report.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{aggregate_prediction, load_samples, DatasetManifest, PatchSample, SourceId};
use crate::nn::FocusModel;
use crate::{Error, Image, Result};

/// Anything that maps a tile to a signed defocus estimate in µm.
///
/// `truth` carries the simulator's ground-truth defocus when it is known.
/// Learned models ignore it; it exists so oracle baselines can be plugged
/// into the same evaluation and scanning code.
pub trait FocusEstimator {
    fn estimate(&self, tile: &Image, truth: Option<f64>) -> Result<f64>;
}

impl FocusEstimator for FocusModel {
    fn estimate(&self, tile: &Image, _truth: Option<f64>) -> Result<f64> {
        self.predict_one(tile)
    }
}

/// Returns the ground truth it is handed.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundTruthOracle;

impl FocusEstimator for GroundTruthOracle {
    fn estimate(&self, _tile: &Image, truth: Option<f64>) -> Result<f64> {
        truth.ok_or_else(|| Error::Model("the oracle estimator needs ground truth".into()))
    }
}

/// Always predicts the same value.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantEstimator(pub f64);

impl FocusEstimator for ConstantEstimator {
    fn estimate(&self, _tile: &Image, _truth: Option<f64>) -> Result<f64> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub true_z_um: f64,
    pub pred_z_um: f64,
    pub source: SourceId,
    /// True when the record is a median over the tiles of one image.
    pub aggregated: bool,
}

impl EvalRecord {
    pub fn new(true_z_um: f64, pred_z_um: f64) -> Self {
        Self {
            true_z_um,
            pred_z_um,
            source: SourceId {
                slide_id: String::new(),
                fov_id: 0,
                slice_idx: 0,
                tile_xy: (0, 0),
            },
            aggregated: false,
        }
    }

    pub fn abs_error(&self) -> f64 {
        (self.pred_z_um - self.true_z_um).abs()
    }
}

fn check(records: &[EvalRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Metric("no records to evaluate".into()));
    }
    if records.iter().any(|r| !(r.true_z_um.is_finite() && r.pred_z_um.is_finite())) {
        return Err(Error::Metric("records must hold finite values".into()));
    }
    Ok(())
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population standard deviation of `|pred − true|`.
pub fn compute_fe(records: &[EvalRecord]) -> Result<(f64, f64)> {
    check(records)?;
    Ok(mean_std(records.iter().map(EvalRecord::abs_error)))
}

/// Records closer to the plane than this are never counted by [`compute_fd`].
pub const DEFAULT_DIRECTION_EPSILON_UM: f64 = 1e-9;

/// False-direction rate: the fraction of records with `|true| > ε` whose
/// predicted sign differs from the true sign (a zero prediction has no
/// direction and counts as wrong). Uses [`DEFAULT_DIRECTION_EPSILON_UM`].
pub fn compute_fd(records: &[EvalRecord]) -> Result<f64> {
    compute_fd_with(records, DEFAULT_DIRECTION_EPSILON_UM)
}

pub fn compute_fd_with(records: &[EvalRecord], epsilon_um: f64) -> Result<f64> {
    check(records)?;
    let sign = |v: f64| (v > 0.0) as i8 - (v < 0.0) as i8;
    let (mut counted, mut wrong) = (0usize, 0usize);
    for r in records.iter().filter(|r| r.true_z_um.abs() > epsilon_um) {
        counted += 1;
        if sign(r.pred_z_um) != sign(r.true_z_um) {
            wrong += 1;
        }
    }
    if counted == 0 {
        return Err(Error::UndefinedDirection { epsilon_um });
    }
    Ok(wrong as f64 / counted as f64)
}

/// Fraction of records with `|pred − true| ≤ dof / 2`.
pub fn compute_dof_rate(records: &[EvalRecord], dof_um: f64) -> Result<f64> {
    if !(dof_um > 0.0 && dof_um.is_finite()) {
        return Err(Error::Parameter(format!("dof_um must be > 0, got {dof_um}")));
    }
    check(records)?;
    let hits = records.iter().filter(|r| r.abs_error() <= dof_um / 2.0).count();
    Ok(hits as f64 / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceBucket {
    pub lo_um: f64,
    pub hi_um: f64,
    pub fe_mean_um: f64,
    pub fe_std_um: f64,
    pub count: usize,
}

pub const BUCKET_CSV_HEADER: &str = "bucket_lo_um,bucket_hi_um,fe_mean_um,fe_std_um,count";

/// FE statistics in buckets `[k·w, (k+1)·w)` of `|true_z|`, covering
/// `[0, max |true_z|]`. Empty buckets report zero error and zero count.
pub fn error_vs_distance_report(records: &[EvalRecord], bucket_width_um: f64) -> Result<Vec<DistanceBucket>> {
    if !(bucket_width_um > 0.0 && bucket_width_um.is_finite()) {
        return Err(Error::Parameter(format!("bucket width must be > 0, got {bucket_width_um}")));
    }
    let max = records.iter().map(|r| r.true_z_um.abs()).fold(0.0, f64::max);
    let n = (max / bucket_width_um).floor() as usize + 1;
    let mut errors: Vec<Vec<f64>> = vec![Vec::new(); n];
    for r in records {
        let k = ((r.true_z_um.abs() / bucket_width_um).floor() as usize).min(n - 1);
        errors[k].push(r.abs_error());
    }
    Ok(errors
        .into_iter()
        .enumerate()
        .map(|(k, e)| {
            let (fe_mean_um, fe_std_um) = if e.is_empty() { (0.0, 0.0) } else { mean_std(e.iter().copied()) };
            DistanceBucket {
                lo_um: k as f64 * bucket_width_um,
                hi_um: (k + 1) as f64 * bucket_width_um,
                fe_mean_um,
                fe_std_um,
                count: e.len(),
            }
        })
        .collect())
}

pub fn buckets_to_csv(buckets: &[DistanceBucket]) -> String {
    let mut out = String::from(BUCKET_CSV_HEADER);
    out.push('\n');
    for b in buckets {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            b.lo_um, b.hi_um, b.fe_mean_um, b.fe_std_um, b.count
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Reduce the tiles of each image to their median before scoring.
    pub aggregate: bool,
    pub dof_um: f64,
    pub direction_epsilon_um: f64,
    pub bucket_width_um: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            aggregate: true,
            dof_um: 4.0,
            // half the default 2 µm stack spacing
            direction_epsilon_um: 1.0,
            bucket_width_um: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fe_mean_um: f64,
    pub fe_std_um: f64,
    pub fd_rate: f64,
    pub dof_rate: f64,
    pub n_records: usize,
    pub aggregated: bool,
    pub dof_um: f64,
    pub direction_epsilon_um: f64,
    pub buckets: Vec<DistanceBucket>,
}

impl MetricsReport {
    pub fn from_records(records: &[EvalRecord], options: &EvalOptions) -> Result<Self> {
        let (fe_mean_um, fe_std_um) = compute_fe(records)?;
        Ok(Self {
            fe_mean_um,
            fe_std_um,
            fd_rate: compute_fd_with(records, options.direction_epsilon_um)?,
            dof_rate: compute_dof_rate(records, options.dof_um)?,
            n_records: records.len(),
            aggregated: options.aggregate,
            dof_um: options.dof_um,
            direction_epsilon_um: options.direction_epsilon_um,
            buckets: error_vs_distance_report(records, options.bucket_width_um)?,
        })
    }

    /// `FE=<mean>±<std>um FD=<pct>% DoF=<pct>%`
    pub fn summary_line(&self) -> String {
        format!(
            "FE={:.2}±{:.2}um FD={:.2}% DoF={:.2}%",
            self.fe_mean_um,
            self.fe_std_um,
            100.0 * self.fd_rate,
            100.0 * self.dof_rate
        )
    }
}

/// Groups patch records by image and replaces each group by one record whose
/// prediction and truth are the medians of its tiles.
pub fn aggregate_records(records: &[EvalRecord]) -> Result<Vec<EvalRecord>> {
    let mut groups: BTreeMap<(String, usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let g = groups.entry(r.source.image_key()).or_default();
        g.0.push(r.true_z_um);
        g.1.push(r.pred_z_um);
    }
    groups
        .into_iter()
        .map(|((slide_id, fov_id, slice_idx), (truth, pred))| {
            Ok(EvalRecord {
                true_z_um: aggregate_prediction(&truth)?,
                pred_z_um: aggregate_prediction(&pred)?,
                source: SourceId {
                    slide_id,
                    fov_id,
                    slice_idx,
                    tile_xy: (0, 0),
                },
                aggregated: true,
            })
        })
        .collect()
}

/// Patch-level records for in-memory samples.
pub fn predict_samples(estimator: &dyn FocusEstimator, samples: &[PatchSample]) -> Result<Vec<EvalRecord>> {
    samples
        .iter()
        .map(|s| {
            Ok(EvalRecord {
                true_z_um: s.z_label_um,
                pred_z_um: estimator.estimate(&s.image, Some(s.z_label_um))?,
                source: s.source.clone(),
                aggregated: false,
            })
        })
        .collect()
}

/// Scores in-memory samples; returns the report and the scored records
/// (aggregated when `options.aggregate`).
pub fn evaluate_samples(
    estimator: &dyn FocusEstimator,
    samples: &[PatchSample],
    options: &EvalOptions,
) -> Result<(MetricsReport, Vec<EvalRecord>)> {
    let mut records = predict_samples(estimator, samples)?;
    if options.aggregate {
        records = aggregate_records(&records)?;
    }
    Ok((MetricsReport::from_records(&records, options)?, records))
}

/// Loads a manifest's tiles from `root` and scores them.
pub fn evaluate_model(
    estimator: &dyn FocusEstimator,
    root: impl AsRef<Path>,
    manifest: &DatasetManifest,
    options: &EvalOptions,
) -> Result<(MetricsReport, Vec<EvalRecord>)> {
    if manifest.is_empty() {
        return Err(Error::Config(format!("the {} manifest is empty", manifest.split)));
    }
    let samples = load_samples(root, manifest)?;
    evaluate_samples(estimator, &samples, options)
}

#[cfg(test)]
mod tests;
