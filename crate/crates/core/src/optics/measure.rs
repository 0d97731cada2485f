//! Classical contrast-based focus measures.

use crate::error::{Error, Result};
use crate::image::Image;

fn brenner_plane(plane: &[f32], w: usize, h: usize) -> f64 {
    let mut acc = 0.0f64;
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w - 2 {
            let d = (row[x + 2] - row[x]) as f64;
            acc += d * d;
        }
    }
    acc
}

/// Brenner gradient `Σ (I(x+2, y) − I(x, y))²` of the channel-mean image.
pub fn brenner_score(image: &Image) -> Result<f64> {
    if image.width() < 3 {
        return Err(Error::Parameter(format!(
            "Brenner score needs width >= 3, got {}",
            image.width()
        )));
    }
    let gray = image.to_gray();
    Ok(brenner_plane(gray.data(), gray.width(), gray.height()))
}

/// Brenner gradient of a single channel.
pub fn brenner_score_channel(image: &Image, channel: usize) -> Result<f64> {
    if image.width() < 3 {
        return Err(Error::Parameter(format!(
            "Brenner score needs width >= 3, got {}",
            image.width()
        )));
    }
    if channel >= image.channels() {
        return Err(Error::Parameter(format!("no channel {channel}")));
    }
    Ok(brenner_plane(image.plane(channel), image.width(), image.height()))
}
