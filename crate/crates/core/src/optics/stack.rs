use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

use super::{render_region, FocalSurface, OpticsConfig, Region, VirtualSlide};

/// Images of one field of view at known offsets from its optimal plane.
#[derive(Debug, Clone)]
pub struct FocalStack {
    pub slide_id: String,
    pub fov_id: usize,
    pub fov: Region,
    /// Mean optimal plane of the field of view, µm (stage coordinates).
    pub plane_um: f64,
    /// z* restricted to the field of view.
    pub focal_surface: FocalSurface,
    pub images: Vec<Image>,
    /// Signed offsets of each slice from `plane_um`; positive = stage above.
    pub z_offsets_um: Vec<f64>,
    pub optics: OpticsConfig,
}

/// Serializable description of a stack (everything except the pixels).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackSidecar {
    pub slide_id: String,
    pub fov_id: usize,
    pub fov: Region,
    pub plane_um: f64,
    pub z_offsets_um: Vec<f64>,
    pub optics: OpticsConfig,
}

impl FocalStack {
    pub fn with_ids(mut self, slide_id: impl Into<String>, fov_id: usize) -> Self {
        self.slide_id = slide_id.into();
        self.fov_id = fov_id;
        self
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn sidecar(&self) -> StackSidecar {
        StackSidecar {
            slide_id: self.slide_id.clone(),
            fov_id: self.fov_id,
            fov: self.fov,
            plane_um: self.plane_um,
            z_offsets_um: self.z_offsets_um.clone(),
            optics: self.optics,
        }
    }

    /// Checks the structural invariants: one offset per image, strictly
    /// increasing offsets, symmetric about zero.
    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.z_offsets_um.len() {
            return Err(Error::Shape("stack has mismatched image and offset counts".into()));
        }
        if self.z_offsets_um.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Parameter("stack offsets must be strictly increasing".into()));
        }
        let below = self.z_offsets_um.iter().filter(|&&z| z < 0.0).count();
        let above = self.z_offsets_um.iter().filter(|&&z| z > 0.0).count();
        if below != above {
            return Err(Error::Parameter("stack offsets must be symmetric about zero".into()));
        }
        Ok(())
    }

    /// Index of the slice whose offset is closest to the optimal plane.
    pub fn focal_index(&self) -> usize {
        self.z_offsets_um
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

/// Uniformly spaced, exactly antisymmetric offsets covering `[−range, +range]`.
pub fn stack_offsets(n_slices: usize, z_range_um: f64) -> Vec<f64> {
    let span = (n_slices - 1) as f64;
    (0..n_slices)
        .map(|i| z_range_um * (2.0 * i as f64 - span) / span)
        .collect()
}

/// Renders a focal stack of `fov`, centred on the field's mean optimal plane.
/// Images are quantized to 8 bits like camera frames.
pub fn synthesize_stack(
    slide: &VirtualSlide,
    fov: Region,
    n_slices: usize,
    z_range_um: f64,
    optics: &OpticsConfig,
) -> Result<FocalStack> {
    optics.validate()?;
    if n_slices < 3 {
        return Err(Error::Parameter(format!("a stack needs at least 3 slices, got {n_slices}")));
    }
    if !(z_range_um > 0.0 && z_range_um.is_finite()) {
        return Err(Error::Parameter(format!("z_range_um must be > 0, got {z_range_um}")));
    }
    if fov.area() == 0 || !slide.bounds().contains(&fov) {
        return Err(Error::Region(format!(
            "field of view {fov:?} lies outside the {}x{} slide",
            slide.width(),
            slide.height()
        )));
    }
    let plane_um = slide.focal_surface.mean_over(&fov);
    let z_offsets_um = stack_offsets(n_slices, z_range_um);
    let images = z_offsets_um
        .iter()
        .enumerate()
        .map(|(i, dz)| {
            let key = [fov.x as u64, fov.y as u64, i as u64, 0x57ac];
            let mut img = render_region(slide, &fov, plane_um + dz, optics, &key)?;
            img.quantize_u8();
            Ok(img)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FocalStack {
        slide_id: String::new(),
        fov_id: 0,
        fov,
        plane_um,
        focal_surface: slide.crop(&fov)?.focal_surface,
        images,
        z_offsets_um,
        optics: *optics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{brenner_score, generate_slide, StackPreset};

    #[test]
    fn full_protocol_offsets_split_evenly() {
        let p = StackPreset::full_protocol();
        let z = stack_offsets(p.n_slices, p.z_range_um);
        assert_eq!(z.iter().filter(|&&v| v < 0.0).count(), 500);
        assert_eq!(z.iter().filter(|&&v| v > 0.0).count(), 500);
    }

    #[test]
    fn three_slices_over_unit_range() {
        assert_eq!(stack_offsets(3, 1.0), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn desk_default_spacing() {
        let z = stack_offsets(21, 20.0);
        assert!(z.windows(2).all(|p| (p[1] - p[0] - 2.0).abs() < 1e-12));
        assert_eq!(z[10], 0.0);
    }

    #[test]
    fn stack_invariants_and_focus() {
        let slide = generate_slide(3, (320, 320), 0.9).unwrap().with_flat_surface(0.0);
        let stack = synthesize_stack(&slide, Region::new(40, 40, 160, 160), 9, 8.0, &OpticsConfig::default()).unwrap();
        stack.validate().unwrap();
        assert_eq!(stack.len(), 9);
        let scores: Vec<f64> = stack.images.iter().map(|i| brenner_score(i).unwrap()).collect();
        let best = scores.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(best, stack.focal_index());
    }

    #[test]
    fn rejects_out_of_bounds_fov() {
        let slide = generate_slide(3, (256, 256), 0.5).unwrap();
        let r = synthesize_stack(&slide, Region::new(200, 0, 100, 100), 5, 4.0, &OpticsConfig::default());
        assert!(matches!(r, Err(Error::Region(_))));
        let r = synthesize_stack(&slide, Region::new(0, 0, 100, 100), 2, 4.0, &OpticsConfig::default());
        assert!(matches!(r, Err(Error::Parameter(_))));
    }
}
