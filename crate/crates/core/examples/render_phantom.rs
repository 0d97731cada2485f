//! Writes a phantom slide and a few defocused renders of it as PNGs.
//!
//! cargo run -p specfocus --example render_phantom -- <out_dir> [seed]

use specfocus::optics::{apply_defocus, generate_slide, OpticsConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "phantom".into()));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    std::fs::create_dir_all(&out)?;

    let slide = generate_slide(seed, (512, 512), 0.6)?;
    slide.sharp_image.save_png(out.join("sharp.png"))?;
    let optics = OpticsConfig::default();
    for z in [-10.0, -4.0, 4.0, 10.0] {
        apply_defocus(&slide, z, &optics)?.save_png(out.join(format!("z{z:+}.png")))?;
    }
    Ok(())
}
