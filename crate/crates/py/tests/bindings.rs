use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "specfocus_py").unwrap();
        specfocus_py::specfocus_py(&m).unwrap();
        let globals = PyDict::new(py);
        globals.set_item("sf", m).unwrap();
        f(py, &globals);
    });
}

fn run(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) {
    let code = std::ffi::CString::new(code).unwrap();
    if let Err(e) = py.run(&code, Some(globals), None) {
        e.print(py);
        panic!("python snippet failed");
    }
}

#[test]
fn metrics_and_trajectory_round_trip() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
fe, sd = sf.compute_fe([1.0, -2.0, 3.0], [1.5, -2.0, 2.0])
assert abs(fe - 0.5) < 1e-12, fe
assert sf.compute_fd([2.0, -2.0], [1.0, 1.0]) == 0.5
assert sf.compute_dof_rate([0.0, 0.0], [0.4, 2.0], 1.0) == 0.5
assert sf.aggregate_prediction([3.0, 1.0, 2.0]) == 2.0
assert sf.plan_trajectory(2, 2) == [(1, 0), (0, 0), (0, 1), (1, 1)]
try:
    sf.plan_trajectory(0, 1)
    raise AssertionError("expected ValueError")
except ValueError:
    pass
"#,
        );
    });
}

#[test]
fn slide_rendering_and_focus_measures() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
slide = sf.Slide(3, 256, 256, 0.7, flat_z_um=0.0)
sharp = slide.render(0, 0, 96, 96, 0.0, '{"noise_sigma": 0.0, "chroma_offset_um": 0.0}')
blurred = slide.render(0, 0, 96, 96, 8.0, '{"noise_sigma": 0.0, "chroma_offset_um": 0.0}')
assert (sharp.width, sharp.height, sharp.channels) == (96, 96, 3)
assert sf.brenner_score(sharp) > sf.brenner_score(blurred)
assert sf.estimate_cutoff_frequency(sharp) >= sf.estimate_cutoff_frequency(blurred)
imgs, offsets, focal = slide.focal_stack(0, 0, 64, 64, n_slices=5, z_range_um=8.0)
assert len(imgs) == 5 and offsets[focal] == 0.0
white = sf.Image(8, 8, 3, [1.0] * 192)
assert sf.is_empty_region(white)
"#,
        );
    });
}

#[test]
fn model_predicts_and_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.spfw");
    with_module(|py, g| {
        g.set_item("path", path.to_str().unwrap()).unwrap();
        run(
            py,
            g,
            r#"
m = sf.FocusModel("spectral", base_channels=2, seed=4)
assert m.variant == "spectral" and m.param_count > 0
tile = sf.Slide(1, 256, 256).sharp_image().crop(0, 0, 224, 224)
p = m.predict_one(tile)
m.save(path)
again = sf.FocusModel.load(path)
assert again.predict([tile]) == [p]
assert again.predict_image(tile) == p
"#,
        );
    });
}

#[test]
fn oracle_scan_returns_a_report_dict() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
slide = sf.Slide(5, 900, 500, 0.0)
r = sf.scan_slide(slide, "blank")
assert r["n_skipped"] == r["n_tiles"] and r["dof_rate"] is None
"#,
        );
    });
}
