"""Smoke tests for the hemodet python module (run via ctest with PYTHONPATH set)."""

import math
import tempfile
from pathlib import Path

import numpy as np

import hemodet

TINY_CONFIG = """
model.window_size = 4
model.input_resolution = 32
model.channels.coarse = 16
model.channels.quarter = 8
model.channels.eighth = 12
seed = 9
"""


def test_config_round_trip():
    text = hemodet.default_config()
    assert hemodet.normalize_config(text) == text
    canon = hemodet.normalize_config("seed = 5\n")
    assert "seed = 5" in canon
    try:
        hemodet.normalize_config("model.window_size = -1\n")
    except ValueError:
        pass
    else:
        raise AssertionError("invalid config must raise")


def test_synth_dataset_layout():
    with tempfile.TemporaryDirectory() as tmp:
        hemodet.synth_dataset(tmp, 2, 5, 32, 32, "pan", 3)
        ids = hemodet.list_clip_ids(tmp)
        assert ids == ["clip000", "clip001"]
        root = Path(tmp)
        assert (root / "splits.json").exists()
        for cid in ids:
            assert (root / "clips" / cid / "frames" / "000000.png").exists()
            assert (root / "clips" / cid / "annotations.json").exists()
            assert (root / "clips" / cid / "flow.json").exists()


def test_gabor_kernel_values():
    k = hemodet.gabor_kernel(wavelength=4.0, phase=0.0, sigma=2.0, aspect=0.5,
                             size=7, theta=0.0)
    assert k.shape == (7, 7)
    assert abs(k[3, 3] - 1.0) < 1e-12  # origin = cos(phase)
    lg = hemodet.laplacian_of_kernel(k)
    assert abs(lg.sum()) < 1e-9  # Laplacian responses cancel on constants


def test_flow_offset_oracle():
    flow = np.zeros((2, 8, 8))
    flow[0, :, :] = 2.0
    flow[1, :, :] = -1.0
    mask = np.zeros((8, 8))
    mask[2:4, 2:4] = 1.0  # 4 of 64 pixels are foreground
    dx, dy = hemodet.mean_background_offset(flow, mask, "background_count")
    assert abs(dx - 2.0) < 1e-12 and abs(dy + 1.0) < 1e-12
    dx, dy = hemodet.mean_background_offset(flow, mask, "paper_hw")
    frac = 60.0 / 64.0
    assert abs(dx - 2.0 * frac) < 1e-12 and abs(dy + 1.0 * frac) < 1e-12


def test_metrics():
    a = np.zeros((3, 4))
    b = np.zeros((3, 4))
    a[0:2, 0:2] = 1
    b[0:2, 1:3] = 1
    assert abs(hemodet.iou(a, b) - 1.0 / 3.0) < 1e-12
    assert abs(hemodet.dice_score(a, b) - 0.5) < 1e-12


def test_detector_streaming():
    det = hemodet.Detector(TINY_CONFIG)
    rng = np.random.default_rng(0)
    for k in range(3):
        out = det.process(rng.random((3, 32, 32)), k)
        assert out["mask"].shape == (32, 32)
        assert set(np.unique(out["mask"])) <= {0.0, 1.0}
        assert 0.0 <= out["score"] <= 1.0
        if out["point"] is not None:
            x, y = out["point"]
            assert 0.0 <= x <= 1.0 and 0.0 <= y <= 1.0
        assert len(out["offset"]) == 2
    det.reset()
    out2 = det.process(rng.random((3, 32, 32)), 0)
    assert out2["mask"].shape == (32, 32)


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for fn in tests:
        fn()
        print(f"ok: {fn.__name__}")
    print(f"{len(tests)} python smoke tests passed")


if __name__ == "__main__":
    main()
