//! On-disk formats for simulator outputs: PNG frames, `.npy` focal surfaces
//! (little-endian float32, shape `[height, width]`) and JSON stack sidecars.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use npyz::WriterBuilder;

use crate::error::{Error, Result};

use super::stack::StackSidecar;
use super::FocalSurface;

pub fn write_focal_surface(surface: &FocalSurface, path: impl AsRef<Path>) -> Result<()> {
    let file = BufWriter::new(File::create(path.as_ref())?);
    let mut writer = npyz::WriteOptions::new()
        .default_dtype()
        .shape(&[surface.height() as u64, surface.width() as u64])
        .writer(file)
        .begin_nd()?;
    writer.extend(surface.data().iter().copied())?;
    writer.finish()?;
    Ok(())
}

pub fn read_focal_surface(path: impl AsRef<Path>) -> Result<FocalSurface> {
    let path = path.as_ref();
    let file = BufReader::new(File::open(path)?);
    let npy = npyz::NpyFile::new(file)?;
    let shape = npy.shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::load(path, format!("expected a 2-D array, got shape {shape:?}")));
    }
    let data: Vec<f32> = npy.into_vec().map_err(|e| Error::load(path, e.to_string()))?;
    FocalSurface::from_vec(shape[1] as usize, shape[0] as usize, data)
}

pub fn write_sidecar(sidecar: &StackSidecar, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(sidecar)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<StackSidecar> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{generate_slide, synthesize_stack, OpticsConfig, Region};

    #[test]
    fn focal_surface_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let slide = generate_slide(2, (256, 300), 0.4).unwrap();
        let path = dir.path().join("z.npy");
        write_focal_surface(&slide.focal_surface, &path).unwrap();
        let back = read_focal_surface(&path).unwrap();
        assert_eq!(back, slide.focal_surface);
        assert_eq!((back.width(), back.height()), (256, 300));
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let slide = generate_slide(2, (256, 256), 0.4).unwrap();
        let stack = synthesize_stack(&slide, Region::new(0, 0, 64, 64), 3, 1.0, &OpticsConfig::default())
            .unwrap()
            .with_ids("s0", 1);
        let path = dir.path().join("s.json");
        write_sidecar(&stack.sidecar(), &path).unwrap();
        assert_eq!(read_sidecar(&path).unwrap(), stack.sidecar());
    }
}
