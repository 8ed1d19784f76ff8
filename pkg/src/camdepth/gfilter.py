"""Masked box statistics and the guided filter, plus the randomized-radius rescale augmentation.

Window sums come from integral images, so cost does not depend on the radius.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DepthMap, ScalarField
from .normalize import D_FLOOR, from_disparity, to_disparity

DEFAULT_EPS = 1e-4
DEFAULT_MIN_VALID = 4
DEFAULT_RADII = (1, 2, 4, 8, 16, 32)


@dataclass(frozen=True)
class GuidedFilterParams:
    radius: int
    epsilon: float = DEFAULT_EPS
    min_valid: int = DEFAULT_MIN_VALID

    def __post_init__(self):
        if self.radius < 0 or self.epsilon < 0 or self.min_valid < 1:
            raise ValueError(f"invalid guided filter params: {self}")


@dataclass(frozen=True)
class RescaleAugmentParams:
    radii_pool: tuple[int, ...] = DEFAULT_RADII
    epsilon: float = DEFAULT_EPS
    min_valid: int = DEFAULT_MIN_VALID
    seed_tag: str = "rescale"

    def __post_init__(self):
        pool = tuple(int(r) for r in self.radii_pool)
        if not pool:
            raise ValueError("radii_pool must not be empty")
        if any(r < 1 for r in pool):
            raise ValueError("radii must be >= 1")
        object.__setattr__(self, "radii_pool", tuple(sorted(pool)))

    def pool_for(self, shape: tuple[int, int]) -> tuple[int, ...]:
        """Radii usable on an image of ``shape``: at most min(H, W) // 8.

        Falls back to the smallest radius when none fit.
        """
        cap = min(shape) // 8
        pool = tuple(r for r in self.radii_pool if r <= cap)
        return pool or self.radii_pool[:1]


def box_sum(arr: np.ndarray, radius: int) -> np.ndarray:
    """Sum over the (2r+1)^2 window around each pixel, clipped at the borders."""
    h, w = arr.shape
    ii = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(np.cumsum(arr, axis=0, dtype=np.float64), axis=1, out=ii[1:, 1:])
    r = int(radius)
    y0 = np.clip(np.arange(h) - r, 0, h)
    y1 = np.clip(np.arange(h) + r + 1, 0, h)
    x0 = np.clip(np.arange(w) - r, 0, w)
    x1 = np.clip(np.arange(w) + r + 1, 0, w)
    return (ii[y1][:, x1] - ii[y0][:, x1] - ii[y1][:, x0] + ii[y0][:, x0])


def box_stats(f: ScalarField, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Windowed sum of valid values and count of valid pixels."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    m = f.valid.astype(np.float64)
    s = box_sum(np.where(f.valid, f.values, 0.0), radius)
    n = np.rint(box_sum(m, radius)).astype(np.int64)
    return s, n


def guided_filter(guide: ScalarField, inp: ScalarField, params: GuidedFilterParams) -> ScalarField:
    """Guided filter over the jointly valid pixels of ``guide`` and ``inp``.

    Per window k: x_k = cov(g, a) / (var(g) + eps), y_k = mean(a) - x_k mean(g).
    Each output pixel averages (x_k, y_k) over the usable windows covering it
    (windows with at least ``min_valid`` joint pixels). Pixels with no usable
    window, or with an invalid guide, pass ``inp`` through.
    """
    if guide.shape != inp.shape:
        raise ValueError(f"shape mismatch: guide {guide.shape} vs input {inp.shape}")
    r, eps = params.radius, params.epsilon
    joint = guide.valid & inp.valid
    a_out = inp.values.copy()
    out_valid = inp.valid.copy()
    if not joint.any():
        return ScalarField(a_out, out_valid)

    # centering keeps E[g^2] - E[g]^2 from cancelling catastrophically
    g0 = guide.values[joint].mean()
    a0 = inp.values[joint].mean()
    g = np.where(joint, guide.values - g0, 0.0)
    a = np.where(joint, inp.values - a0, 0.0)

    n = box_sum(joint.astype(np.float64), r)
    usable = n >= params.min_valid - 0.5
    nn = np.where(usable, n, 1.0)
    mg = box_sum(g, r) / nn
    ma = box_sum(a, r) / nn
    var = np.maximum(box_sum(g * g, r) / nn - mg * mg, 0.0)
    cov = box_sum(g * a, r) / nn - mg * ma
    denom = var + eps
    x = np.divide(cov, denom, out=np.zeros_like(cov), where=denom > 0)
    y = ma - x * mg
    x[~usable] = 0.0
    y[~usable] = 0.0

    cover = box_sum(usable.astype(np.float64), r)
    covered = (cover > 0.5) & guide.valid
    cc = np.where(covered, cover, 1.0)
    xb = box_sum(x, r) / cc
    yb = box_sum(y, r) / cc
    b = xb * (guide.values - g0) + yb + a0
    a_out[covered] = b[covered]
    out_valid |= covered
    return ScalarField(a_out, out_valid)


def guided_filter_depth(guide: DepthMap, inp: DepthMap, params: GuidedFilterParams,
                        d_floor: float = D_FLOOR) -> DepthMap:
    """Depth-in, depth-out wrapper; filtering runs in disparity space."""
    out = guided_filter(to_disparity(guide, d_floor), to_disparity(inp, d_floor), params)
    return from_disparity(out, d_floor)


def guided_rescale_augment(value_noise: ScalarField, gt: DepthMap, params: RescaleAugmentParams,
                           rng: np.random.Generator, return_radius: bool = False):
    """Stamp the metric scale of ``gt`` onto a disparity-space value-noise field.

    The noise is the guide and the ground-truth disparity is the filtered
    input, so the result keeps the noise structure at roughly the right scale.
    Small radii pull it towards ``gt``; large radii keep more of the noise.
    """
    pool = params.pool_for(gt.shape)
    radius = int(pool[rng.integers(len(pool))])
    gp = GuidedFilterParams(radius=radius, epsilon=params.epsilon, min_valid=params.min_valid)
    out = guided_filter(value_noise, to_disparity(gt), gp)
    return (out, radius) if return_radius else out
