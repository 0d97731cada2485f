//! Single-shot spatiospectral autofocus for brightfield slide scanning.
//!
//! The crate is organised bottom-up:
//!
//! * [`optics`] – procedural tissue phantoms, a Gaussian defocus model with
//!   chromatic focal offsets, focal-stack synthesis and classical focus
//!   oracles (Brenner gradient, radial power spectrum, cut-off frequency).
//! * [`dataset`] – 224×224 tiling, slide-level splits, JSON Lines manifests
//!   and median aggregation of patch predictions.
//! * [`nn`] – the dual-encoder regression network (spatial CNN encoder plus
//!   fast-Fourier-convolution encoder) with hand-written backpropagation.
//! * [`train`] – smooth-L1 objective, augmentation pipeline, Adam and the
//!   training loop with checkpoint selection.
//! * [`eval`] – focus error, false-direction rate, depth-of-field rate and
//!   error-versus-distance reports.
//! * [`scope`] – a virtual motorized microscope that scans a slide along a
//!   serpentine trajectory, skips empty fields and refocuses single-shot.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod image;
pub mod nn;
pub mod optics;
pub mod scope;
pub(crate) mod seed;
pub mod train;

pub use error::{Error, Result};
pub use image::Image;
