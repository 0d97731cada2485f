use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rounds `z_um` to the nearest multiple of `precision_um`, ties away from zero.
pub fn quantize_z(z_um: f64, precision_um: f64) -> f64 {
    (z_um / precision_um).round() * precision_um
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageLimits {
    pub x_mm: (f64, f64),
    pub y_mm: (f64, f64),
    pub z_um: (f64, f64),
}

/// Virtual XYZ stage. Heights snap to the z grid; lateral moves outside the
/// travel range are refused, vertical ones stop at the end of travel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageModel {
    x_mm: f64,
    y_mm: f64,
    z_um: f64,
    pub z_precision_um: f64,
    pub limits: StageLimits,
}

impl StageModel {
    /// Stage parked at the lower xy corner, z = 0.
    pub fn new(z_precision_um: f64, limits: StageLimits) -> Self {
        let mut s = Self {
            x_mm: limits.x_mm.0,
            y_mm: limits.y_mm.0,
            z_um: 0.0,
            z_precision_um,
            limits,
        };
        s.move_z(0.0);
        s
    }

    pub fn position(&self) -> (f64, f64, f64) {
        (self.x_mm, self.y_mm, self.z_um)
    }

    pub fn z_um(&self) -> f64 {
        self.z_um
    }

    pub fn move_xy(&mut self, x_mm: f64, y_mm: f64) -> Result<()> {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo - 1e-9 && v <= hi + 1e-9;
        if !(inside(x_mm, self.limits.x_mm) && inside(y_mm, self.limits.y_mm)) {
            return Err(Error::Region(format!(
                "({x_mm:.4}, {y_mm:.4}) mm is outside the stage travel {:?} x {:?}",
                self.limits.x_mm, self.limits.y_mm
            )));
        }
        self.x_mm = x_mm;
        self.y_mm = y_mm;
        Ok(())
    }

    /// Commands height `z_um`; returns the height actually reached.
    pub fn move_z(&mut self, z_um: f64) -> f64 {
        let p = self.z_precision_um;
        let (lo, hi) = self.limits.z_um;
        // innermost grid points of the travel range
        let lo = (lo / p).ceil() * p;
        let hi = (hi / p).floor() * p;
        self.z_um = quantize_z(z_um, p).clamp(lo, hi);
        self.z_um
    }

    /// Top-left pixel of the field of view on a slide sampled at `um_per_px`.
    pub fn pixel_position(&self, um_per_px: f64) -> (usize, usize) {
        let px = |mm: f64| (mm * 1000.0 / um_per_px).round().max(0.0) as usize;
        (px(self.x_mm), px(self.y_mm))
    }
}
