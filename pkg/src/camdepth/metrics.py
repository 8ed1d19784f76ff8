"""Depth metrics (L1, RMSE, AbsRel, delta thresholds), training losses as scores, and distance bins."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .core import DepthMap, ScalarField
from .normalize import affine_normalize, to_disparity

REPORT_COLUMNS = ("L1", "RMSE", "AbsRel", "delta_0.5", "delta_1")
POLICIES = ("intersection", "gt-valid-strict")
LOGIT_CLAMP = 30.0


@dataclass(frozen=True)
class MetricReport:
    l1: float
    rmse: float
    abs_rel: float
    delta_half: float
    delta_one: float
    coverage: float
    n_pixels: int
    policy: str = "intersection"

    def table_row(self) -> dict[str, float]:
        return dict(zip(REPORT_COLUMNS,
                        (self.l1, self.rmse, self.abs_rel, self.delta_half, self.delta_one)))

    def to_dict(self) -> dict:
        return {"policy": self.policy, "metrics": {k: _jsonable(v) for k, v in self.table_row().items()},
                "coverage": self.coverage, "n_pixels": self.n_pixels}


def _jsonable(v: float):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def _check_shapes(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def depth_metrics(pred: DepthMap, gt: DepthMap, policy: str = "intersection") -> MetricReport:
    """Score ``pred`` against ``gt`` in meters, without any alignment.

    ``intersection`` evaluates pixels valid in both maps. ``gt-valid-strict``
    evaluates every gt-valid pixel: missing predictions count as delta
    failures and are left out of the error means.
    """
    _check_shapes(pred, gt)
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    gv, pv = gt.valid, pred.valid
    both = gv & pv
    n_gt = int(gv.sum())
    if n_gt == 0 or (policy == "intersection" and not both.any()):
        raise ValueError("empty evaluation set")
    z, zh = gt.values[both], pred.values[both]
    err = np.abs(zh - z)
    ratio = np.maximum(zh / z, z / zh)
    n_eval = int(both.sum()) if policy == "intersection" else n_gt
    if both.any():
        l1, rmse, absrel = float(err.mean()), float(np.sqrt(np.mean(err ** 2))), float(np.mean(err / z))
    else:
        l1 = rmse = absrel = float("nan")
    return MetricReport(
        l1=l1, rmse=rmse, abs_rel=absrel,
        delta_half=float(np.sum(ratio < 1.25 ** 0.5)) / n_eval,
        delta_one=float(np.sum(ratio < 1.25)) / n_eval,
        coverage=float(both.sum()) / n_gt,
        n_pixels=n_eval,
        policy=policy,
    )


def aggregate_reports(reports: list[MetricReport]) -> MetricReport:
    """Unweighted mean over samples; coverage and pixel counts are pooled."""
    if not reports:
        raise ValueError("nothing to aggregate")

    def mean(attr):
        vals = [getattr(r, attr) for r in reports if not math.isnan(getattr(r, attr))]
        return float(np.mean(vals)) if vals else float("nan")

    return MetricReport(
        l1=mean("l1"), rmse=mean("rmse"), abs_rel=mean("abs_rel"),
        delta_half=mean("delta_half"), delta_one=mean("delta_one"),
        coverage=mean("coverage"), n_pixels=sum(r.n_pixels for r in reports),
        policy=reports[0].policy,
    )


def reports_to_csv(rows: list[tuple[str, MetricReport]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("sample",) + REPORT_COLUMNS + ("coverage", "n_pixels", "policy"))
    for sid, r in rows:
        vals = ["" if math.isnan(v) else repr(v) for v in r.table_row().values()]
        w.writerow([sid, *vals, repr(r.coverage), r.n_pixels, r.policy])
    return buf.getvalue()


# --- distance bins ----------------------------------------------------------

@dataclass
class BinnedReport:
    bin_edges: np.ndarray
    n: list[int] = field(default_factory=list)
    l1: list[float | None] = field(default_factory=list)
    abs_rel: list[float | None] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("bin_lo", "bin_hi", "n", "L1", "AbsRel"))
        for i, n in enumerate(self.n):
            w.writerow([repr(float(self.bin_edges[i])), repr(float(self.bin_edges[i + 1])), n,
                        "" if self.l1[i] is None else repr(self.l1[i]),
                        "" if self.abs_rel[i] is None else repr(self.abs_rel[i])])
        return buf.getvalue()


def binned_accuracy(pred: DepthMap, gt: DepthMap, bin_width: float,
                    max_range: float) -> BinnedReport:
    """Per-distance-bin L1 and AbsRel over pixels valid in both maps.

    Bins are ``[k*w, (k+1)*w)`` up to ``max_range`` (rounded up to a whole
    bin); pixels beyond the last edge are not evaluated.
    """
    _check_shapes(pred, gt)
    if not bin_width > 0 or not max_range > 0:
        raise ValueError("bin_width and max_range must be positive")
    nb = int(math.ceil(max_range / bin_width - 1e-12))
    edges = bin_width * np.arange(nb + 1, dtype=np.float64)
    both = gt.valid & pred.valid
    z, zh = gt.values[both], pred.values[both]
    idx = np.floor(z / bin_width).astype(np.int64)
    err = np.abs(zh - z)
    rep = BinnedReport(bin_edges=edges)
    for k in range(nb):
        sel = idx == k
        n = int(sel.sum())
        rep.n.append(n)
        rep.l1.append(float(err[sel].mean()) if n else None)
        rep.abs_rel.append(float(np.mean(err[sel] / z[sel])) if n else None)
    return rep


def merge_binned(reports: list[BinnedReport]) -> BinnedReport:
    """Pool several per-sample bin reports (count-weighted)."""
    edges = reports[0].bin_edges
    out = BinnedReport(bin_edges=edges)
    for k in range(len(edges) - 1):
        n = sum(r.n[k] for r in reports)
        out.n.append(n)
        if n:
            out.l1.append(sum(r.n[k] * r.l1[k] for r in reports if r.n[k]) / n)
            out.abs_rel.append(sum(r.n[k] * r.abs_rel[k] for r in reports if r.n[k]) / n)
        else:
            out.l1.append(None)
            out.abs_rel.append(None)
    return out


# --- losses -----------------------------------------------------------------

def bce_hole_loss(logits, gt: DepthMap) -> float:
    """Mean binary cross-entropy of hole logits; the target is 1 where gt is a hole."""
    x = logits.values if isinstance(logits, ScalarField) else np.asarray(logits, dtype=np.float64)
    _check_shapes(x, gt)
    x = np.clip(x, -LOGIT_CLAMP, LOGIT_CLAMP)
    y = (~gt.valid).astype(np.float64)
    # -[y log s(x) + (1-y) log(1-s(x))] == softplus(x) - y*x
    return float(np.mean(np.logaddexp(0.0, x) - y * x))


def l1_normalized_loss(pred_rel: ScalarField, gt: DepthMap) -> float:
    _check_shapes(pred_rel, gt)
    norm, _ = affine_normalize(gt)
    m = norm.valid & pred_rel.valid
    if not m.any():
        raise ValueError("no valid pixels")
    return float(np.mean(np.abs(norm.values[m] - pred_rel.values[m])))


def _disp_error(pred: DepthMap, gt: DepthMap) -> tuple[np.ndarray, np.ndarray]:
    _check_shapes(pred, gt)
    m = pred.valid & gt.valid
    e = np.where(m, to_disparity(pred).values - to_disparity(gt).values, 0.0)
    return e, m


def grad_loss(pred: DepthMap, gt: DepthMap) -> float:
    """Mean |d/dx| plus mean |d/dy| of the disparity error, over forward-difference
    pairs whose both ends are valid."""
    e, m = _disp_error(pred, gt)
    mx = m[:, 1:] & m[:, :-1]
    my = m[1:, :] & m[:-1, :]
    if not mx.any() and not my.any():
        raise ValueError("no valid difference pairs")
    gx = np.abs(np.diff(e, axis=1))[mx].mean() if mx.any() else 0.0
    gy = np.abs(np.diff(e, axis=0))[my].mean() if my.any() else 0.0
    return float(gx + gy)


def l1_disparity_loss(pred: DepthMap, gt: DepthMap) -> float:
    e, m = _disp_error(pred, gt)
    if not m.any():
        raise ValueError("no jointly valid pixels")
    return float(np.abs(e[m]).mean())


def total_loss(pred: DepthMap, gt: DepthMap) -> float:
    return l1_disparity_loss(pred, gt) + grad_loss(pred, gt)
