"""Smoke test for the specfocus_py extension module.

Build and install first:

    pip install maturin
    pip install -e . --no-build-isolation

then run ``python python/smoke_test.py``.
"""

import json
import tempfile

import specfocus_py as sf

QUIET = json.dumps({"noise_sigma": 0.0, "chroma_offset_um": 0.0})


def main():
    slide = sf.Slide(7, 512, 384, 0.6, flat_z_um=0.0)
    print("slide", slide.width, "x", slide.height, "tissue %.2f" % slide.tissue_fraction)

    imgs, offsets, focal = slide.focal_stack(0, 0, 256, 256, n_slices=11, z_range_um=20.0)
    scores = [sf.brenner_score(im) for im in imgs]
    best = max(range(len(scores)), key=scores.__getitem__)
    print("brenner peak at slice", best, "true focal slice", focal)
    assert abs(best - focal) <= 1

    sharp = slide.render(0, 0, 224, 224, 0.0, QUIET)
    blurred = slide.render(0, 0, 224, 224, 10.0, QUIET)
    print("cut-off in focus %.3f, 10um away %.3f" % (
        sf.estimate_cutoff_frequency(sharp), sf.estimate_cutoff_frequency(blurred)))

    model = sf.FocusModel("spatiospectral", base_channels=4, seed=0)
    print("untrained", model.variant, "params", model.param_count,
          "prediction %.3f um" % model.predict_one(sharp))

    truths = [2.0, -3.0, 0.5]
    preds = [1.5, -2.0, -0.2]
    fe, sd = sf.compute_fe(truths, preds)
    print("FE %.3f +- %.3f, FD %.2f, DoF %.2f" % (
        fe, sd, sf.compute_fd(truths, preds), sf.compute_dof_rate(truths, preds, 2.0)))

    print("trajectory 3x2", sf.plan_trajectory(3, 2))
    with tempfile.TemporaryDirectory() as out:
        report = sf.scan_slide(sf.Slide(3, 1000, 600, 0.7), "demo", out_dir=out)
    print("scan: tiles", report["n_tiles"], "skipped", report["n_skipped"], "dof_rate", report["dof_rate"])
    print("ok")


if __name__ == "__main__":
    main()
