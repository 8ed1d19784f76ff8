"""Affine-invariant normalization of disparity and metric recovery against a reference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DepthMap, ScalarField

SCALE_FLOOR = 1e-8
D_FLOOR = 1e-6
TRIM_FRACTION = 0.2


@dataclass(frozen=True)
class NormParams:
    shift: float
    scale: float
    degenerate: bool


def to_disparity(d: DepthMap, d_floor: float = D_FLOOR) -> ScalarField:
    if not d_floor > 0:
        raise ValueError("d_floor must be positive")
    valid = d.valid
    disp = np.zeros(d.shape)
    disp[valid] = 1.0 / np.maximum(d.values[valid], d_floor)
    return ScalarField(disp, valid)


def from_disparity(disp: ScalarField, disp_floor: float = D_FLOOR) -> DepthMap:
    """Invert disparity; sub-floor (including negative) disparities are clamped, not dropped."""
    out = np.zeros(disp.shape)
    m = disp.valid
    out[m] = 1.0 / np.maximum(disp.values[m], disp_floor)
    return DepthMap(out)


def normalize_field(x: ScalarField, scale_floor: float = SCALE_FLOOR) -> tuple[ScalarField, NormParams]:
    """Median shift and mean-absolute-deviation scale over the valid pixels."""
    vals = x.values[x.valid]
    if vals.size == 0:
        raise ValueError("cannot normalize a field with no valid pixels")
    t = float(np.median(vals))
    mad = float(np.mean(np.abs(vals - t)))
    s = max(mad, scale_floor)
    out = np.zeros(x.shape)
    out[x.valid] = (vals - t) / s
    return ScalarField(out, x.valid), NormParams(shift=t, scale=s, degenerate=mad < scale_floor)


def affine_normalize(d: DepthMap, scale_floor: float = SCALE_FLOOR,
                     d_floor: float = D_FLOOR) -> tuple[ScalarField, NormParams]:
    if not d.valid.any():
        raise ValueError("cannot normalize a depth map with no valid pixels")
    return normalize_field(to_disparity(d, d_floor), scale_floor)


def _fit(r: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    A = np.stack([r, np.ones_like(r)], axis=1)
    (s, t), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(s), float(t)


def fit_scale_shift(rel: np.ndarray, target: np.ndarray,
                    trim: float = TRIM_FRACTION) -> tuple[float, float]:
    """Least-squares ``s*rel + t ~ target``, then one re-fit without the worst residuals.

    Constant ``rel`` has no usable slope; that case returns ``(0, median(target))``.
    """
    rel = np.asarray(rel, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if rel.size == 0:
        raise ValueError("no overlapping valid pixels to fit")
    if rel.size < 2 or np.ptp(rel) == 0:
        return 0.0, float(np.median(target))
    s, t = _fit(rel, target)
    n_keep = rel.size - int(np.floor(trim * rel.size))
    if n_keep < rel.size:
        resid = np.abs(s * rel + t - target)
        keep = np.argsort(resid, kind="stable")[:n_keep]
        if n_keep >= 2 and np.ptp(rel[keep]) > 0:
            s, t = _fit(rel[keep], target[keep])
    return s, t


def affine_recover(rel: ScalarField, ref: DepthMap, d_floor: float = D_FLOOR,
                   trim: float = TRIM_FRACTION) -> DepthMap:
    """Map a relative (affine-invariant) field back to metric depth using ``ref``.

    The fit happens in disparity space over pixels valid in both inputs; the
    result is defined wherever ``rel`` is valid.
    """
    if rel.shape != ref.shape:
        raise ValueError(f"shape mismatch: {rel.shape} vs {ref.shape}")
    ref_disp = to_disparity(ref, d_floor)
    both = rel.valid & ref_disp.valid
    if not both.any():
        raise ValueError("no overlapping valid pixels between relative field and reference")
    s, t = fit_scale_shift(rel.values[both], ref_disp.values[both], trim)
    disp = s * rel.values + t
    return from_disparity(ScalarField(disp, rel.valid), d_floor)
