"""Acceptance checks, one test per criterion.

Each test is named ``test_cNN_<slug>``; the conftest hook prints a PASS/FAIL
line per criterion at the end of the run. Run standalone with
``python3 tests/test_acceptance.py``.
"""

import csv
import filecmp
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
import yaml
from plyfile import PlyData

from camdepth.cli import main
from camdepth.cloud import PointCloud, backproject, project, write_ply
from camdepth.core import DepthMap, Intrinsics, ScalarField, read_u16_png
from camdepth.gfilter import GuidedFilterParams, guided_filter
from camdepth.metrics import (REPORT_COLUMNS, bce_hole_loss, binned_accuracy, depth_metrics,
                              grad_loss, l1_normalized_loss, total_loss)
from camdepth.noise import HoleProbField, NoisePipelineConfig, synthesize
from camdepth.normalize import affine_normalize, affine_recover
from camdepth.traj import JointTrajectory, mean_abs_accel, rms_jerk

from conftest import random_depth, smooth_scene, write_toy_dataset
from oracles import (bce_loop, grad_loop, guided_filter_oracle, l1_disp_loop, l1_normalized_loop,
                     metrics_loop)

FIXTURE = Path(__file__).parent / "fixtures" / "eval5"

# loop-oracle aggregates for the eval5 fixture, intersection policy, mean over samples
EVAL5_HOLED = {
    "L1": 0.40878057416267943,
    "RMSE": 0.5320720203335627,
    "AbsRel": 0.13016076483590452,
    "delta_0.5": 0.47269537480063795,
    "delta_1": 0.8913397129186602,
    "coverage": 0.6854680177464988,
}
EVAL5_FILLED = {
    "L1": 0.9512092278535317,
    "RMSE": 1.4664399811353122,
    "AbsRel": 0.4333018167007032,
    "delta_0.5": 0.3462110573502979,
    "delta_1": 0.6577690620095684,
    "coverage": 1.0,
}


def _masked(rng, shape, density=0.8):
    return ScalarField(rng.uniform(0, 1, shape), rng.random(shape) < density)


def test_c01_guided_filter_oracle():
    rng = np.random.default_rng(1)
    params = GuidedFilterParams(radius=2, epsilon=1e-3, min_valid=4)
    pairs = [(_masked(rng, (16, 16)), _masked(rng, (16, 16))) for _ in range(50)]
    t0 = time.perf_counter()
    outs = [guided_filter(g, a, params) for g, a in pairs]
    elapsed = time.perf_counter() - t0
    worst = 0.0
    for (g, a), out in zip(pairs, outs):
        ov, om = guided_filter_oracle(g.values, g.valid, a.values, a.valid, 2, 1e-3, 4)
        assert np.array_equal(out.valid, om)
        worst = max(worst, float(np.max(np.abs(out.values - ov))))
    assert worst < 1e-6
    assert elapsed < 1.0


def test_c02_guided_filter_identities():
    rng = np.random.default_rng(2)
    a = _masked(rng, (24, 24), 0.9)
    out = guided_filter(a, a, GuidedFilterParams(3, 1e-12))
    assert np.max(np.abs(out.values - a.values)[a.valid]) < 1e-6

    c = guided_filter(ScalarField(np.full((12, 12), 2.0)), ScalarField(np.full((12, 12), 0.7)),
                      GuidedFilterParams(3, 1e-4))
    assert np.all(c.values == 0.7)

    g, inp = _masked(rng, (20, 20), 0.9), _masked(rng, (20, 20), 0.9)
    p = GuidedFilterParams(2, 0.0)
    base = guided_filter(g, inp, p)
    for s, t in [(3.0, -1.0), (-0.5, 4.0), (40.0, 0.0)]:
        moved = guided_filter(ScalarField(s * g.values + t, g.valid), inp, p)
        assert np.max(np.abs(moved.values - base.values)) < 1e-6


def test_c03_linear_time_in_radius():
    rng = np.random.default_rng(3)
    g, a = _masked(rng, (480, 640), 0.95), _masked(rng, (480, 640), 0.95)

    def best(radius, repeats=5):
        p = GuidedFilterParams(radius, 1e-4)
        guided_filter(g, a, p)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            guided_filter(g, a, p)
            times.append(time.perf_counter() - t0)
        return min(times)

    assert best(32) <= 1.5 * best(2)


def test_c04_affine_roundtrip():
    rng = np.random.default_rng(4)
    for i in range(100):
        d = random_depth(rng, (20, 24), 0.3 if i % 2 else 0.0, lo=0.2, hi=15.0)
        rel, _ = affine_normalize(d)
        back = affine_recover(rel, d)
        assert np.array_equal(back.valid, d.valid)
        v = d.valid
        assert np.max(np.abs(back.values[v] - d.values[v]) / d.values[v]) < 1e-6
    flat = DepthMap(np.full((10, 10), 2.5))
    rel, params = affine_normalize(flat)
    assert params.degenerate
    back = affine_recover(rel, flat)
    assert np.max(np.abs(back.values - 2.5)) < 1e-6 * 2.5


def test_c05_hole_composition():
    rng = np.random.default_rng(5)
    rgb, gt = smooth_scene(32, 40)
    holes = 0
    for i in range(20):
        cfg = NoisePipelineConfig.from_dict({
            "value_stages": [{"kind": "depth_gaussian", "sigma0": 0.001, "sigma1": 0.002}],
            "rescale": {"radii_pool": [1, 2, 4]},
            "high_freq": {"amplitude": float(rng.uniform(0, 0.05)),
                          "probability": float(rng.uniform(0, 0.3))},
            "hole_layers": [
                {"kind": "edge", "grad_threshold": float(rng.uniform(0.01, 0.2)),
                 "dilate_radius": int(rng.integers(0, 3)), "prob": float(rng.uniform(0.3, 1))},
                {"kind": "dark", "lum_threshold": float(rng.uniform(10, 80)),
                 "prob": float(rng.uniform(0.3, 1))},
                {"kind": "speckle", "grid": int(rng.integers(4, 12)),
                 "threshold": float(rng.uniform(0.5, 1.5)), "prob": float(rng.uniform(0.3, 1))},
            ],
            "seed": int(rng.integers(0, 2**31)),
        })
        out, tr = synthesize(rgb, gt, cfg, sample_index=i, trace=True)
        assert np.array_equal(~out.valid, tr.hole.prob >= 0.5)
        holes += int((~out.valid).sum())
    assert 0 < holes < 20 * gt.values.size

    half = HoleProbField(np.full(gt.shape, 0.5))
    out = synthesize(rgb, gt, NoisePipelineConfig(), hole_prob=half)
    assert not out.valid.any()


def test_c06_metric_oracles():
    rng = np.random.default_rng(6)
    for policy, strict in (("intersection", False), ("gt-valid-strict", True)):
        gt = random_depth(rng, (32, 32), 0.15)
        pred = DepthMap(np.where(rng.random((32, 32)) < 0.1, 0,
                                 gt.values * rng.uniform(0.7, 1.4, (32, 32)) + 0.01))
        r = depth_metrics(pred, gt, policy)
        o = metrics_loop(pred.values, gt.values, strict=strict)
        for k, v in r.table_row().items():
            assert abs(v - o[k]) < 1e-9
    gt = random_depth(rng, (32, 32), 0.2)
    pred = random_depth(rng, (32, 32), 0.1)
    logits = rng.normal(0, 5, (32, 32))
    rel = rng.normal(size=(32, 32))
    assert abs(bce_hole_loss(logits, gt) - bce_loop(logits, gt.values)) < 1e-9
    assert abs(l1_normalized_loss(ScalarField(rel), gt) - l1_normalized_loop(rel, gt.values)) < 1e-9
    assert abs(grad_loss(pred, gt) - grad_loop(pred.values, gt.values)) < 1e-9
    expect = l1_disp_loop(pred.values, gt.values) + grad_loop(pred.values, gt.values)
    assert abs(total_loss(pred, gt) - expect) < 1e-9

    r = depth_metrics(DepthMap(1.1 * gt.values), gt)
    assert abs(r.abs_rel - 0.1) < 1e-9 and r.delta_half == 1.0
    assert abs(bce_hole_loss(np.zeros((32, 32)), gt) - math.log(2)) < 1e-9


def test_c07_bin_consistency():
    rng = np.random.default_rng(7)
    for _ in range(10):
        gt = random_depth(rng, (32, 32), 0.2, lo=0.3, hi=9.0)
        pred = random_depth(rng, (32, 32), 0.2, lo=0.3, hi=9.0)
        rep = binned_accuracy(pred, gt, 0.5, 10.0)
        total = sum(rep.n)
        wmean = sum(n * l for n, l in zip(rep.n, rep.l1) if n) / total
        assert abs(wmean - depth_metrics(pred, gt).l1) < 1e-9


def test_c08_cloud_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    k = Intrinsics(fx=525.0, fy=520.0, cx=31.5, cy=23.5, width=64, height=48)
    for _ in range(10):
        d = random_depth(rng, (48, 64), 0.3, lo=0.1, hi=20.0)
        uvz = project(backproject(d, k), k)
        vs, us = np.nonzero(d.valid)
        assert np.max(np.abs(uvz[:, 0] - us)) < 1e-4
        assert np.max(np.abs(uvz[:, 1] - vs)) < 1e-4
    pts = rng.normal(0, 5, (500, 3))
    write_ply(PointCloud(pts, rng.integers(0, 256, (500, 3))), tmp_path / "c.ply", "binary")
    v = PlyData.read(str(tmp_path / "c.ply"))["vertex"]
    for i, ax in enumerate("xyz"):
        assert v[ax].tobytes() == pts[:, i].astype("<f4").tobytes()


def test_c09_trajectory_exactness():
    alpha = 2.5
    quad = JointTrajectory.uniform(0.5 * alpha * (np.arange(30) / 8.0) ** 2, rate=8.0)
    assert mean_abs_accel(quad)[0] == alpha
    assert rms_jerk(quad)[0] == 0.0
    cube = JointTrajectory.uniform((np.arange(16) / 2.0) ** 3, rate=2.0)
    assert rms_jerk(cube)[0] == 6.0

    s = np.arange(50) * 0.04
    q = np.column_stack([np.sin(3 * s), s ** 4])
    base = JointTrajectory(s, q, ())
    for c in (0.5, 2.0, 7.0):
        slow = JointTrajectory(c * s, q, ())
        assert np.allclose(mean_abs_accel(slow), mean_abs_accel(base) / c ** 2, rtol=1e-9, atol=0)
        assert np.allclose(rms_jerk(slow), rms_jerk(base) / c ** 3, rtol=1e-9, atol=0)


def _tree(root: Path) -> list[str]:
    return sorted(str(p.relative_to(root)) for p in root.rglob("*") if p.is_file())


def test_c10_synth_determinism(tmp_path):
    man = write_toy_dataset(tmp_path / "data", n=6)
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"pipeline": {
        "value_stages": [{"kind": "quantization", "virtual_focal": 60, "virtual_baseline": 0.05,
                          "subpixel_step": 0.1},
                         {"kind": "depth_gaussian", "sigma0": 0.001, "sigma1": 0.002}],
        "rescale": {"radii_pool": [1, 2, 4]},
        "high_freq": {"amplitude": 0.02, "probability": 0.1},
        "hole_layers": [{"kind": "speckle", "grid": 8, "threshold": 1.0, "prob": 0.8}],
    }}))
    outs = []
    for workers in (1, 8):
        out = tmp_path / f"w{workers}"
        assert main(["--config", str(cfg), "--seed", "17", "--workers", str(workers), "synth",
                     "--manifest", str(man), "--out", str(out)]) == 0
        outs.append(out)
    a, b = outs
    files = [f for f in _tree(a) if f != "run_log.jsonl"]
    assert files == [f for f in _tree(b) if f != "run_log.jsonl"]
    _, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
    assert not mismatch and not errors

    ident = tmp_path / "ident.yaml"
    ident.write_text(yaml.safe_dump({"pipeline": {"rescale": {"radii_pool": [1], "epsilon": 0.0}}}))
    out = tmp_path / "ident"
    assert main(["--config", str(ident), "synth", "--manifest", str(man), "--out", str(out)]) == 0
    for p in sorted((out / "depth").iterdir()):
        diff = read_u16_png(p).astype(int) - read_u16_png(man.parent / "gt" / p.name).astype(int)
        assert np.max(np.abs(diff)) <= 1


@pytest.mark.parametrize("fill,expected", [(False, EVAL5_HOLED), (True, EVAL5_FILLED)],
                         ids=["holed", "filled"])
def test_c11_report_reproduction(tmp_path, fill, expected):
    out = tmp_path / "rep"
    argv = ["eval", "--manifest", str(FIXTURE / "manifest.yaml"), "--policy", "intersection",
            "--out", str(out)] + (["--fill"] if fill else [])
    assert main(argv) == 0
    rep = json.loads((out / "metrics.json").read_text())
    agg = rep["aggregate"]
    assert tuple(agg["metrics"]) == REPORT_COLUMNS
    assert len(rep["samples"]) == 5
    for k in REPORT_COLUMNS:
        assert abs(agg["metrics"][k] - expected[k]) < 1e-9, k
    assert abs(agg["coverage"] - expected["coverage"]) < 1e-9
    header = next(csv.reader((out / "metrics.csv").open()))
    assert tuple(header[1:6]) == REPORT_COLUMNS
    last = list(csv.DictReader((out / "metrics.csv").open()))[-1]
    assert last["sample"] == "aggregate"
    for k in REPORT_COLUMNS:
        assert abs(float(last[k]) - expected[k]) < 1e-9


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
