//! Python bindings for the `specfocus` crate.
//!
//! Images cross the boundary as flat channel-major `float` lists plus a
//! shape; configuration and reports travel as JSON-compatible dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use specfocus::eval::{self, EvalRecord, FocusEstimator, GroundTruthOracle};
use specfocus::nn::{self, ModelConfig, Variant};
use specfocus::optics::{self, OpticsConfig, Region};
use specfocus::scope::{self, ScanConfig};
use specfocus::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Parameter(_) | Error::Config(_) | Error::Region(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn from_json<T: serde::de::DeserializeOwned + Default>(json: Option<&str>) -> PyResult<T> {
    match json {
        None => Ok(T::default()),
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("bad config: {e}"))),
    }
}

fn to_dict<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn records(true_z_um: Vec<f64>, pred_z_um: Vec<f64>) -> PyResult<Vec<EvalRecord>> {
    if true_z_um.len() != pred_z_um.len() {
        return Err(PyValueError::new_err(format!(
            "length mismatch: {} truths vs {} predictions",
            true_z_um.len(),
            pred_z_um.len()
        )));
    }
    Ok(true_z_um.into_iter().zip(pred_z_um).map(|(t, p)| EvalRecord::new(t, p)).collect())
}

/// A float image stored channel-major with values in [0, 1].
#[pyclass(name = "Image", module = "specfocus_py", skip_from_py_object)]
#[derive(Clone)]
struct PyImage {
    inner: specfocus::Image,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> PyResult<Self> {
        let inner = specfocus::Image::from_vec(width, height, channels, data).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load_png(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: specfocus::Image::load_png(path).map_err(to_py)?,
        })
    }

    fn save_png(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_png(path).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    /// Pixel values, channel-major.
    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.crop(x, y, width, height).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{}x{})", self.inner.width(), self.inner.height(), self.inner.channels())
    }
}

/// A procedural slide with a known focal surface.
#[pyclass(name = "Slide", module = "specfocus_py")]
struct PySlide {
    inner: optics::VirtualSlide,
}

#[pymethods]
impl PySlide {
    /// `flat_z_um` replaces the random focal surface with a flat one.
    #[new]
    #[pyo3(signature = (seed, width, height, tissue_fraction=0.6, flat_z_um=None))]
    fn new(seed: u64, width: usize, height: usize, tissue_fraction: f64, flat_z_um: Option<f32>) -> PyResult<Self> {
        let mut inner = optics::generate_slide(seed, (width, height), tissue_fraction).map_err(to_py)?;
        if let Some(z) = flat_z_um {
            inner = inner.with_flat_surface(z);
        }
        Ok(Self { inner })
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn tissue_fraction(&self) -> f64 {
        self.inner.tissue_fraction()
    }

    fn sharp_image(&self) -> PyImage {
        PyImage {
            inner: self.inner.sharp_image.clone(),
        }
    }

    /// Mean focal-surface height over a region, µm.
    fn surface_mean(&self, x: usize, y: usize, width: usize, height: usize) -> f64 {
        self.inner.focal_surface.mean_over(&Region::new(x, y, width, height))
    }

    /// Renders a region with the stage at `z_um`. `optics` is a JSON object;
    /// missing fields take their defaults.
    #[pyo3(signature = (x, y, width, height, z_um, optics=None))]
    fn render(&self, x: usize, y: usize, width: usize, height: usize, z_um: f64, optics: Option<&str>) -> PyResult<PyImage> {
        let cfg: OpticsConfig = from_json(optics)?;
        let crop = self.inner.crop(&Region::new(x, y, width, height)).map_err(to_py)?;
        Ok(PyImage {
            inner: optics::apply_defocus(&crop, z_um, &cfg).map_err(to_py)?,
        })
    }

    /// Focal stack of a region centred on its mean focal plane.
    /// Returns `(images, z_offsets_um, focal_index)`.
    #[pyo3(signature = (x, y, width, height, n_slices=21, z_range_um=20.0, optics=None))]
    #[allow(clippy::too_many_arguments)]
    fn focal_stack(
        &self,
        x: usize,
        y: usize,
        width: usize,
        height: usize,
        n_slices: usize,
        z_range_um: f64,
        optics: Option<&str>,
    ) -> PyResult<(Vec<PyImage>, Vec<f64>, usize)> {
        let cfg: OpticsConfig = from_json(optics)?;
        let fov = Region::new(x, y, width, height);
        let stack = optics::synthesize_stack(&self.inner, fov, n_slices, z_range_um, &cfg).map_err(to_py)?;
        let focal = stack.focal_index();
        let images = stack.images.into_iter().map(|inner| PyImage { inner }).collect();
        Ok((images, stack.z_offsets_um, focal))
    }
}

/// The focus regression network.
#[pyclass(name = "FocusModel", module = "specfocus_py")]
struct PyFocusModel {
    inner: nn::FocusModel,
}

#[pymethods]
impl PyFocusModel {
    #[new]
    #[pyo3(signature = (variant="spatiospectral", base_channels=nn::DEFAULT_BASE_CHANNELS, seed=0))]
    fn new(variant: &str, base_channels: usize, seed: u64) -> PyResult<Self> {
        let variant: Variant = variant.parse().map_err(to_py)?;
        let inner = nn::FocusModel::new(ModelConfig::new(variant, base_channels), seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Loads a weights file, or the best weights behind a training
    /// directory or its `checkpoint.json` pointer.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let path = specfocus::train::resolve_best_weights(path).map_err(to_py)?;
        Ok(Self {
            inner: nn::load_weights(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        nn::save_weights(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant().as_str()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    /// Signed defocus in µm for one tile.
    fn predict_one(&self, tile: &PyImage) -> PyResult<f64> {
        self.inner.predict_one(&tile.inner).map_err(to_py)
    }

    fn predict(&self, tiles: Vec<PyRef<'_, PyImage>>) -> PyResult<Vec<f64>> {
        let imgs: Vec<_> = tiles.iter().map(|t| t.inner.clone()).collect();
        self.inner.predict(&imgs).map_err(to_py)
    }

    /// Tiles a full frame and returns the median of the tile predictions.
    fn predict_image(&self, image: &PyImage) -> PyResult<f64> {
        let tiles = specfocus::dataset::tile_image(&image.inner, nn::TILE_SIZE, false).map_err(to_py)?;
        let preds = tiles
            .iter()
            .map(|t| self.inner.estimate(&t.image, None))
            .collect::<specfocus::Result<Vec<_>>>()
            .map_err(to_py)?;
        specfocus::dataset::aggregate_prediction(&preds).map_err(to_py)
    }
}

#[pyfunction]
fn brenner_score(image: &PyImage) -> PyResult<f64> {
    optics::brenner_score(&image.inner).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (image, floor_ratio=optics::spectrum::DEFAULT_FLOOR_RATIO))]
fn estimate_cutoff_frequency(image: &PyImage, floor_ratio: f64) -> PyResult<f64> {
    optics::estimate_cutoff_frequency(&image.inner, floor_ratio).map_err(to_py)
}

#[pyfunction]
fn radial_power_spectrum(image: &PyImage) -> Vec<f64> {
    optics::radial_power_spectrum(&image.inner)
}

#[pyfunction]
fn aggregate_prediction(predictions: Vec<f64>) -> PyResult<f64> {
    specfocus::dataset::aggregate_prediction(&predictions).map_err(to_py)
}

/// Returns `(mean, std)` of the absolute error, µm.
#[pyfunction]
fn compute_fe(true_z_um: Vec<f64>, pred_z_um: Vec<f64>) -> PyResult<(f64, f64)> {
    eval::compute_fe(&records(true_z_um, pred_z_um)?).map_err(to_py)
}

/// False-direction rate as a fraction.
#[pyfunction]
fn compute_fd(true_z_um: Vec<f64>, pred_z_um: Vec<f64>) -> PyResult<f64> {
    eval::compute_fd(&records(true_z_um, pred_z_um)?).map_err(to_py)
}

#[pyfunction]
fn compute_dof_rate(true_z_um: Vec<f64>, pred_z_um: Vec<f64>, dof_um: f64) -> PyResult<f64> {
    eval::compute_dof_rate(&records(true_z_um, pred_z_um)?, dof_um).map_err(to_py)
}

#[pyfunction]
fn plan_trajectory(nx: usize, ny: usize) -> PyResult<Vec<(usize, usize)>> {
    scope::plan_trajectory((nx, ny)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (image, tau=scope::DEFAULT_TAU))]
fn is_empty_region(image: &PyImage, tau: f64) -> PyResult<bool> {
    scope::is_empty_region(&image.inner, tau).map_err(to_py)
}

/// Scans a slide and returns the report as a dict. Without a model the
/// ground-truth oracle drives the focus.
#[pyfunction]
#[pyo3(signature = (slide, slide_id="slide", model=None, config=None, out_dir=None))]
fn scan_slide<'py>(
    py: Python<'py>,
    slide: &PySlide,
    slide_id: &str,
    model: Option<&PyFocusModel>,
    config: Option<&str>,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: ScanConfig = from_json(config)?;
    let estimator: &dyn FocusEstimator = match model {
        Some(m) => &m.inner,
        None => &GroundTruthOracle,
    };
    let report = scope::scan_slide(&slide.inner, slide_id, estimator, &cfg, out_dir.as_deref()).map_err(to_py)?;
    if let Some(dir) = &out_dir {
        scope::write_scan_outputs(&report, dir).map_err(to_py)?;
    }
    to_dict(py, &report)
}

#[pymodule]
pub fn specfocus_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PySlide>()?;
    m.add_class::<PyFocusModel>()?;
    m.add_function(wrap_pyfunction!(brenner_score, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_cutoff_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(radial_power_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_prediction, m)?)?;
    m.add_function(wrap_pyfunction!(compute_fe, m)?)?;
    m.add_function(wrap_pyfunction!(compute_fd, m)?)?;
    m.add_function(wrap_pyfunction!(compute_dof_rate, m)?)?;
    m.add_function(wrap_pyfunction!(plan_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(is_empty_region, m)?)?;
    m.add_function(wrap_pyfunction!(scan_slide, m)?)?;
    m.add("TILE_SIZE", nn::TILE_SIZE)?;
    Ok(())
}
