//! Defocus simulator: tissue phantoms, focal stacks and focus oracles.

mod config;
mod defocus;
pub mod io;
pub mod measure;
mod phantom;
pub mod spectrum;
mod stack;

use serde::{Deserialize, Serialize};

pub use config::{OpticsConfig, StackPreset};
pub use defocus::{apply_defocus, gaussian_blur, gaussian_blur_plane};
pub(crate) use defocus::render_region;
pub use measure::brenner_score;
pub use phantom::{
    generate_slide, generate_slide_masked, generate_slide_with, FocalSurface, PhantomParams,
    VirtualSlide,
};
pub use spectrum::{estimate_cutoff_frequency, radial_power_spectrum};
pub use stack::{synthesize_stack, FocalStack};

/// Axis-aligned pixel window `[x, x + width) × [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self { x, y, width, height }
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, other: &Region) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.x + other.width <= self.x + self.width
            && other.y + other.height <= self.y + self.height
    }

    /// Grows the window by `m` pixels on every side (saturating at zero).
    pub fn expand(&self, m: usize) -> Region {
        let x = self.x.saturating_sub(m);
        let y = self.y.saturating_sub(m);
        Region::new(x, y, self.x + self.width + m - x, self.y + self.height + m - y)
    }

    pub fn clamp_to(&self, bounds: &Region) -> Region {
        let x0 = self.x.max(bounds.x);
        let y0 = self.y.max(bounds.y);
        let x1 = (self.x + self.width).min(bounds.x + bounds.width);
        let y1 = (self.y + self.height).min(bounds.y + bounds.height);
        Region::new(x0, y0, x1.saturating_sub(x0), y1.saturating_sub(y0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_geometry() {
        let b = Region::new(0, 0, 100, 80);
        let r = Region::new(5, 5, 20, 10);
        assert!(b.contains(&r));
        assert_eq!(r.expand(10), Region::new(0, 0, 35, 25));
        assert_eq!(Region::new(90, 70, 20, 20).clamp_to(&b), Region::new(90, 70, 10, 10));
        assert!(!b.contains(&Region::new(90, 0, 20, 5)));
    }
}
