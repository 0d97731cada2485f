//! Virtual slide scanner: serpentine stage trajectory, empty-region
//! filtering, single-shot focus correction and dual-resolution capture.

mod stage;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{aggregate_prediction, tile_image, DEFAULT_TILE_SIZE};
use crate::eval::FocusEstimator;
use crate::optics::{render_region, OpticsConfig, Region, VirtualSlide};
use crate::{Error, Image, Result};

pub use stage::{quantize_z, StageLimits, StageModel};

pub const DEFAULT_TAU: f64 = 0.9;
pub const DEFAULT_Z_PRECISION_UM: f64 = 2.0;
pub const LOW_RES: (usize, usize) = (1280, 720);
pub const HIGH_RES: (usize, usize) = (4056, 3040);
pub const DEFAULT_DESK_SCALE: f64 = 0.35;
pub const TRAJECTORY_CSV_HEADER: &str = "order,grid_x,grid_y,skipped,pred_z_um,true_z_um,in_dof";

/// Serpentine scan order over an `nx × ny` grid.
///
/// Starts in the bottom-right cell `(nx − 1, 0)`, runs right-to-left along the
/// bottom row, steps up, runs left-to-right, and so on.
pub fn plan_trajectory(grid: (usize, usize)) -> Result<Vec<(usize, usize)>> {
    let (nx, ny) = grid;
    if nx == 0 || ny == 0 {
        return Err(Error::Parameter(format!("scan grid must be non-empty, got {nx}x{ny}")));
    }
    let mut order = Vec::with_capacity(nx * ny);
    for y in 0..ny {
        if y % 2 == 0 {
            order.extend((0..nx).rev().map(|x| (x, y)));
        } else {
            order.extend((0..nx).map(|x| (x, y)));
        }
    }
    Ok(order)
}

/// Background test on the HSV value channel: empty iff `mean(max(R, G, B)) > tau`.
pub fn is_empty_region(image: &Image, tau: f64) -> Result<bool> {
    let n = image.pixel_count();
    if n == 0 {
        return Err(Error::Parameter("cannot classify an image with no pixels".into()));
    }
    let sum: f64 = image
        .data()
        .chunks_exact(n)
        .fold(vec![f32::MIN; n], |mut v, plane| {
            v.iter_mut().zip(plane).for_each(|(m, &p)| *m = m.max(p));
            v
        })
        .iter()
        .map(|&v| v as f64)
        .sum();
    Ok(sum / n as f64 > tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    /// HSV value threshold above which a frame counts as empty background.
    pub tau: f64,
    pub low_res: (usize, usize),
    pub high_res: (usize, usize),
    /// Shrinks both camera resolutions; the low-res camera samples the slide
    /// at its native pitch, so this also sets the field of view.
    pub desk_scale: f64,
    /// Fraction of the field of view shared by neighbouring cells.
    pub overlap_fraction: f64,
    pub z_precision_um: f64,
    /// Stage height at the first cell, µm.
    pub start_z_um: f64,
    pub z_travel_um: f64,
    pub tile_size: usize,
    pub optics: OpticsConfig,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            low_res: LOW_RES,
            high_res: HIGH_RES,
            desk_scale: DEFAULT_DESK_SCALE,
            overlap_fraction: 0.0,
            z_precision_um: DEFAULT_Z_PRECISION_UM,
            start_z_um: 0.0,
            z_travel_um: 100.0,
            tile_size: DEFAULT_TILE_SIZE,
            optics: OpticsConfig::desk_training(),
        }
    }
}

fn scaled((w, h): (usize, usize), s: f64) -> (usize, usize) {
    (((w as f64 * s).round() as usize).max(1), ((h as f64 * s).round() as usize).max(1))
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Config(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.desk_scale > 0.0 && self.desk_scale <= 1.0) {
            return Err(Error::Config(format!("desk_scale must lie in (0, 1], got {}", self.desk_scale)));
        }
        if [self.low_res.0, self.low_res.1, self.high_res.0, self.high_res.1].contains(&0) {
            return Err(Error::Config("camera resolutions must be positive".into()));
        }
        if !(0.0..0.9).contains(&self.overlap_fraction) {
            return Err(Error::Config(format!(
                "overlap_fraction must lie in [0, 0.9), got {}",
                self.overlap_fraction
            )));
        }
        if !(self.z_precision_um > 0.0 && self.z_travel_um > 0.0 && self.start_z_um.abs() <= self.z_travel_um) {
            return Err(Error::Config("invalid stage z parameters".into()));
        }
        self.optics.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Low-res frame size after desk scaling; also the field of view in slide pixels.
    pub fn low_res_px(&self) -> (usize, usize) {
        scaled(self.low_res, self.desk_scale)
    }

    pub fn high_res_px(&self) -> (usize, usize) {
        scaled(self.high_res, self.desk_scale)
    }

    fn step_px(&self) -> (usize, usize) {
        let (w, h) = self.low_res_px();
        let keep = 1.0 - self.overlap_fraction;
        (
            ((w as f64 * keep).round() as usize).max(1),
            ((h as f64 * keep).round() as usize).max(1),
        )
    }

    /// Number of cells that fit on a `width × height` slide.
    pub fn grid_for(&self, width: usize, height: usize) -> Result<(usize, usize)> {
        let (fw, fh) = self.low_res_px();
        if width < fw || height < fh {
            return Err(Error::Region(format!(
                "a {width}x{height} slide is smaller than the {fw}x{fh} field of view"
            )));
        }
        let (sx, sy) = self.step_px();
        Ok(((width - fw) / sx + 1, (height - fh) / sy + 1))
    }

    /// Slide window seen at grid cell `(gx, gy)`; row 0 is the bottom of the slide.
    pub fn cell_region(&self, slide_height: usize, gx: usize, gy: usize) -> Region {
        let (fw, fh) = self.low_res_px();
        let (sx, sy) = self.step_px();
        Region::new(gx * sx, slide_height - fh - gy * sy, fw, fh)
    }
}

/// Renders the field of view under the stage at its current (quantized) height,
/// resampled to `resolution`.
pub fn capture(
    slide: &VirtualSlide,
    stage: &StageModel,
    fov: (usize, usize),
    resolution: (usize, usize),
    optics: &OpticsConfig,
) -> Result<Image> {
    let (x, y) = stage.pixel_position(slide.um_per_px);
    let region = Region::new(x, y, fov.0, fov.1);
    let key = [x as u64, y as u64, stage.z_um().to_bits()];
    render_region(slide, &region, stage.z_um(), optics, &key)?.resize(resolution.0, resolution.1)
}

/// Outcome of one focus correction.
#[derive(Debug, Clone, PartialEq)]
pub struct FocusCorrection {
    /// Aggregated signed defocus estimate, µm (stage z minus focal plane).
    pub defocus_um: f64,
    /// Estimated focal plane ẑ before quantization.
    pub focal_plane_um: f64,
    pub tiles_used: usize,
}

/// Ground-truth defocus of each tile, handed to oracle estimators.
fn tile_truths(slide: &VirtualSlide, stage: &StageModel, origin: (usize, usize), tiles: &[(usize, usize)], size: usize) -> Vec<f64> {
    tiles
        .iter()
        .map(|&(tx, ty)| {
            let r = Region::new(origin.0 + tx, origin.1 + ty, size, size);
            stage.z_um() - slide.focal_surface.mean_over(&r)
        })
        .collect()
}

/// Predicts the defocus of `frame` (captured at the stage's pose) and moves
/// the stage by the negated median estimate. The frame is tiled; background
/// tiles are ignored unless every tile is background.
pub fn correct_focus(
    estimator: &dyn FocusEstimator,
    stage: &mut StageModel,
    slide: &VirtualSlide,
    frame: &Image,
    tile_size: usize,
    tau: f64,
) -> Result<FocusCorrection> {
    let tiles = tile_image(frame, tile_size, false)?;
    if tiles.is_empty() {
        return Err(Error::Shape(format!(
            "a {}x{} frame holds no {tile_size}px tile",
            frame.width(),
            frame.height()
        )));
    }
    let mut chosen = Vec::new();
    for t in &tiles {
        if !is_empty_region(&t.image, tau)? {
            chosen.push(t);
        }
    }
    if chosen.is_empty() {
        chosen = tiles.iter().collect();
    }
    let origin = stage.pixel_position(slide.um_per_px);
    let offsets: Vec<(usize, usize)> = chosen.iter().map(|t| (t.x, t.y)).collect();
    let truths = tile_truths(slide, stage, origin, &offsets, tile_size);
    let preds = chosen
        .iter()
        .zip(&truths)
        .map(|(t, &truth)| estimator.estimate(&t.image, Some(truth)))
        .collect::<Result<Vec<_>>>()?;
    let defocus_um = aggregate_prediction(&preds)?;
    let focal_plane_um = stage.z_um() - defocus_um;
    stage.move_z(focal_plane_um);
    Ok(FocusCorrection {
        defocus_um,
        focal_plane_um,
        tiles_used: preds.len(),
    })
}

/// Single-shot autofocus: one low-res capture at the current height, one
/// estimate per tile, one stage move. The stage is untouched on failure.
pub fn autofocus_step(
    estimator: &dyn FocusEstimator,
    stage: &mut StageModel,
    slide: &VirtualSlide,
    config: &ScanConfig,
) -> Result<FocusCorrection> {
    let fov = config.low_res_px();
    let frame = capture(slide, stage, fov, fov, &config.optics)?;
    let mut trial = stage.clone();
    let out = correct_focus(estimator, &mut trial, slide, &frame, config.tile_size, config.tau)?;
    *stage = trial;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub order: usize,
    pub grid_x: usize,
    pub grid_y: usize,
    pub skipped_empty: bool,
    /// The estimator failed; the high-res frame was taken without correction.
    pub failed: bool,
    /// Estimated focal plane ẑ, µm.
    pub pred_z_um: Option<f64>,
    /// Mean of the simulated focal surface over the field of view, µm.
    pub true_z_um: f64,
    /// Stage height of the high-res capture, µm.
    pub stage_z_um: Option<f64>,
    pub in_dof: Option<bool>,
    pub autofocus_captures: usize,
    /// High-res frame, relative to the scan output directory.
    pub capture_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub slide_id: String,
    pub grid: (usize, usize),
    pub trajectory: Vec<(usize, usize)>,
    pub tiles: Vec<TileRecord>,
    pub n_tiles: usize,
    pub n_skipped: usize,
    pub low_res_captures: usize,
    pub high_res_captures: usize,
    /// Share of tissue tiles whose final height lies within ±DoF/2 of the
    /// focal plane; `None` when nothing was focused.
    pub dof_rate: Option<f64>,
    pub dof_um: f64,
    pub complete: bool,
    pub error: Option<String>,
}

impl ScanReport {
    pub fn summary_line(&self) -> String {
        let dof = match self.dof_rate {
            Some(r) => format!("{:.2}%", 100.0 * r),
            None => "n/a".to_string(),
        };
        format!("tiles={} skipped={} dof_rate={dof}", self.n_tiles, self.n_skipped)
    }

    pub fn trajectory_csv(&self) -> String {
        let mut s = String::from(TRAJECTORY_CSV_HEADER);
        s.push('\n');
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        for t in &self.tiles {
            s.push_str(&format!(
                "{},{},{},{},{},{:.6},{}\n",
                t.order,
                t.grid_x,
                t.grid_y,
                t.skipped_empty,
                opt(t.pred_z_um),
                t.true_z_um,
                t.in_dof.map(|b| b.to_string()).unwrap_or_default()
            ));
        }
        s
    }

    fn finish(&mut self) {
        self.n_tiles = self.tiles.len();
        self.n_skipped = self.tiles.iter().filter(|t| t.skipped_empty).count();
        let focused: Vec<bool> = self.tiles.iter().filter_map(|t| t.in_dof).collect();
        self.dof_rate = (!focused.is_empty())
            .then(|| focused.iter().filter(|&&b| b).count() as f64 / focused.len() as f64);
    }
}

/// Scans `slide` cell by cell along the serpentine trajectory.
///
/// Each cell gets one low-res capture. Background cells are skipped; tissue
/// cells reuse that frame for a single focus correction and then get one
/// high-res capture at the corrected height. The stage height carries over
/// between cells. With `out_dir`, high-res frames are written to
/// `out_dir/{slide_id}/{row}_{col}.png`.
pub fn scan_slide(
    slide: &VirtualSlide,
    slide_id: &str,
    estimator: &dyn FocusEstimator,
    config: &ScanConfig,
    out_dir: Option<&Path>,
) -> Result<ScanReport> {
    config.validate()?;
    let grid = config.grid_for(slide.width(), slide.height())?;
    let trajectory = plan_trajectory(grid)?;
    let capture_dir = out_dir.map(|d| d.join(slide_id));
    if let Some(d) = &capture_dir {
        fs::create_dir_all(d)?;
    }
    let mut report = ScanReport {
        slide_id: slide_id.to_string(),
        grid,
        trajectory: trajectory.clone(),
        tiles: Vec::with_capacity(trajectory.len()),
        n_tiles: 0,
        n_skipped: 0,
        low_res_captures: 0,
        high_res_captures: 0,
        dof_rate: None,
        dof_um: config.optics.dof_um,
        complete: false,
        error: None,
    };
    let (w_mm, h_mm) = slide.physical_extent();
    let mut stage = StageModel::new(
        config.z_precision_um,
        StageLimits {
            x_mm: (0.0, w_mm),
            y_mm: (0.0, h_mm),
            z_um: (-config.z_travel_um, config.z_travel_um),
        },
    );
    stage.move_z(config.start_z_um);
    for (order, &(gx, gy)) in trajectory.iter().enumerate() {
        if let Err(e) = scan_cell(slide, estimator, config, &mut stage, &mut report, order, (gx, gy), capture_dir.as_deref()) {
            report.error = Some(e.to_string());
            report.finish();
            return Ok(report);
        }
    }
    report.complete = true;
    report.finish();
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn scan_cell(
    slide: &VirtualSlide,
    estimator: &dyn FocusEstimator,
    config: &ScanConfig,
    stage: &mut StageModel,
    report: &mut ScanReport,
    order: usize,
    (gx, gy): (usize, usize),
    capture_dir: Option<&Path>,
) -> Result<()> {
    let region = config.cell_region(slide.height(), gx, gy);
    let mm = slide.um_per_px / 1000.0;
    stage.move_xy(region.x as f64 * mm, region.y as f64 * mm)?;
    let fov = (region.width, region.height);
    let frame = capture(slide, stage, fov, fov, &config.optics)?;
    report.low_res_captures += 1;
    let true_z_um = slide.focal_surface.mean_over(&region);
    let mut record = TileRecord {
        order,
        grid_x: gx,
        grid_y: gy,
        skipped_empty: false,
        failed: false,
        pred_z_um: None,
        true_z_um,
        stage_z_um: None,
        in_dof: None,
        autofocus_captures: 0,
        capture_path: None,
    };
    if is_empty_region(&frame, config.tau)? {
        record.skipped_empty = true;
        report.tiles.push(record);
        return Ok(());
    }
    // The detection frame doubles as the focus frame.
    record.autofocus_captures = 1;
    let mut trial = stage.clone();
    match correct_focus(estimator, &mut trial, slide, &frame, config.tile_size, config.tau) {
        Ok(c) => {
            *stage = trial;
            record.pred_z_um = Some(c.focal_plane_um);
        }
        Err(_) => record.failed = true,
    }
    let hi = capture(slide, stage, fov, config.high_res_px(), &config.optics)?;
    report.high_res_captures += 1;
    if let Some(dir) = capture_dir {
        let name = format!("{gy}_{gx}.png");
        hi.save_png(dir.join(&name))?;
        record.capture_path = Some(Path::new(&report.slide_id).join(name));
    }
    record.stage_z_um = Some(stage.z_um());
    record.in_dof = Some((stage.z_um() - true_z_um).abs() <= config.optics.dof_um / 2.0);
    report.tiles.push(record);
    Ok(())
}

/// Writes `scan_report.json` and `trajectory.csv` into `dir`.
pub fn write_scan_outputs(report: &ScanReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("scan_report.json"), serde_json::to_string_pretty(report)?)?;
    fs::write(dir.join("trajectory.csv"), report.trajectory_csv())?;
    Ok(())
}
