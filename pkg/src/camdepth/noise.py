"""Camera-style depth synthesis: hole and value noise, composition, and the Filled-split baseline."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .core import (DepthMap, ImageRGB, ScalarField, U16_MAX, derive_rng, luminance,
                   read_u16_png, write_u16_png)
from .gfilter import RescaleAugmentParams, guided_rescale_augment
from .normalize import D_FLOOR, affine_recover, from_disparity, to_disparity

FIELD_MAGIC = b"DFG1"


@dataclass(frozen=True)
class HoleProbField:
    prob: np.ndarray

    def __post_init__(self):
        p = np.array(self.prob, dtype=np.float64)
        if p.ndim != 2:
            raise ValueError("hole probabilities must be 2-D")
        if not np.all(np.isfinite(p)) or p.min() < 0 or p.max() > 1:
            raise ValueError("hole probabilities must lie in [0, 1]")
        p.setflags(write=False)
        object.__setattr__(self, "prob", p)

    @property
    def shape(self) -> tuple[int, int]:
        return self.prob.shape


# --- field import/export ----------------------------------------------------

def export_field(f: Union[ScalarField, HoleProbField], path, scale: float | None = None) -> None:
    """Write a field as a DFG1 raw grid (``.dfg``) or a scaled 16-bit PNG (``.png``).

    Invalid scalar pixels are stored as NaN in raw grids and 0 in PNGs.
    """
    path = Path(path)
    if isinstance(f, HoleProbField):
        vals, valid = f.prob, np.ones(f.shape, bool)
    else:
        vals, valid = f.values, f.valid
    if path.suffix.lower() == ".png":
        scale = U16_MAX if scale is None else scale
        u = np.floor(np.where(valid, vals, 0.0) * scale + 0.5)
        if u.min() < 0 or u.max() > U16_MAX:
            raise ValueError("field does not fit in 16 bits at this scale")
        write_u16_png(path, u.astype(np.uint16))
        return
    h, w = vals.shape
    data = np.where(valid, vals, np.nan).astype("<f4")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC + struct.pack("<II", w, h) + data.tobytes())


def _read_raw_grid(path: Path) -> np.ndarray:
    buf = path.read_bytes()
    if len(buf) < 12 or buf[:4] != FIELD_MAGIC:
        raise ValueError(f"{path}: not a DFG1 float grid")
    w, h = struct.unpack("<II", buf[4:12])
    if len(buf) != 12 + 4 * w * h:
        raise ValueError(f"{path}: expected {w}x{h} floats, file size disagrees")
    return np.frombuffer(buf, dtype="<f4", offset=12).reshape(h, w).astype(np.float64)


def import_field(path, kind: str = "scalar", scale: float = U16_MAX):
    """Load an externally computed noise map.

    ``kind="prob"`` returns a HoleProbField (range-checked); ``kind="scalar"``
    returns a ScalarField. PNG values are divided by ``scale``; a stored 0 in a
    scalar PNG means invalid.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    if path.suffix.lower() == ".png":
        raw = read_u16_png(path).astype(np.float64)
        vals = raw / scale
        valid = raw > 0 if kind == "scalar" else np.ones(raw.shape, bool)
    else:
        vals = _read_raw_grid(path)
        valid = np.isfinite(vals)
    if kind == "prob":
        if not valid.all():
            raise ValueError(f"{path}: probability map contains non-finite values")
        if vals.min() < 0 or vals.max() > 1:
            raise ValueError(f"{path}: probabilities outside [0, 1] "
                             f"(min {vals.min():.4g}, max {vals.max():.4g})")
        return HoleProbField(vals)
    if kind != "scalar":
        raise ValueError(f"unknown field kind {kind!r}")
    return ScalarField(vals, valid)


# --- helpers ----------------------------------------------------------------

def _upsample_grid(coarse: np.ndarray, shape: tuple[int, int], cell: float) -> np.ndarray:
    h, w = shape
    yy, xx = np.meshgrid(np.arange(h) / cell, np.arange(w) / cell, indexing="ij")
    return ndimage.map_coordinates(coarse, [yy, xx], order=1, mode="nearest")


def _smooth_random(rng: np.random.Generator, shape: tuple[int, int], cell: float) -> np.ndarray:
    """Unit-Gaussian values on a coarse lattice, bilinearly upsampled."""
    h, w = shape
    gh, gw = int(np.ceil((h - 1) / cell)) + 2, int(np.ceil((w - 1) / cell)) + 2
    return _upsample_grid(rng.standard_normal((gh, gw)), shape, cell)


def _nearest_fill(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Copy each invalid pixel from its nearest valid pixel.

    Ties go to the donor that comes first in row-major order.
    """
    if valid.all():
        return values.copy()
    if not valid.any():
        raise ValueError("cannot fill a map with no valid pixels")
    donors = np.argwhere(valid)  # row-major order
    holes = np.argwhere(~valid)
    tree = cKDTree(donors)
    dist, _ = tree.query(holes, k=1)
    # every donor inside the minimal radius is at exactly that distance
    cands = tree.query_ball_point(holes, r=dist * (1 + 1e-9) + 1e-9)
    best = np.fromiter((min(c) for c in cands), dtype=np.int64, count=len(cands))
    out = values.copy()
    src = donors[best]
    out[holes[:, 0], holes[:, 1]] = values[src[:, 0], src[:, 1]]
    return out


def fill_holes_nearest(d: DepthMap) -> DepthMap:
    if not d.valid.any():
        raise ValueError("cannot fill a fully invalid depth map")
    return DepthMap(_nearest_fill(d.values, d.valid))


# --- hole layers ------------------------------------------------------------

def _check_prob(p: float, name: str = "prob") -> None:
    if not 0 <= p <= 1:
        raise ValueError(f"{name} must be in [0, 1], got {p}")


@dataclass(frozen=True)
class EdgeHoles:
    """Holes along depth discontinuities (stereo matching fails at boundaries)."""
    grad_threshold: float
    dilate_radius: int = 1
    prob: float = 1.0
    kind = "edge"

    def __post_init__(self):
        _check_prob(self.prob)
        if self.grad_threshold < 0 or self.dilate_radius < 0:
            raise ValueError("edge layer: threshold and dilate_radius must be >= 0")

    def apply(self, rgb, disp, rng) -> np.ndarray:
        gy, gx = np.gradient(disp)
        edge = np.hypot(gx, gy) > self.grad_threshold
        if self.dilate_radius > 0 and edge.any():
            k = 2 * self.dilate_radius + 1
            edge = ndimage.binary_dilation(edge, structure=np.ones((k, k), bool))
        return edge * self.prob


@dataclass(frozen=True)
class DarkHoles:
    """Holes on dark surfaces, keyed on luminance."""
    lum_threshold: float
    prob: float = 1.0
    kind = "dark"

    def __post_init__(self):
        _check_prob(self.prob)

    def apply(self, rgb, disp, rng) -> np.ndarray:
        return (luminance(rgb).values < self.lum_threshold) * self.prob


@dataclass(frozen=True)
class SpeckleHoles:
    """Blob-shaped dropouts from a thresholded smooth random field."""
    grid: float
    threshold: float
    prob: float = 1.0
    kind = "speckle"

    def __post_init__(self):
        _check_prob(self.prob)
        if not self.grid > 0:
            raise ValueError("speckle grid must be positive")

    def apply(self, rgb, disp, rng) -> np.ndarray:
        return (_smooth_random(rng, disp.shape, self.grid) > self.threshold) * self.prob


@dataclass(frozen=True)
class BorderBandHoles:
    """Fixed invalid band along one image side (stereo shadow)."""
    side: str
    width: int
    kind = "border_band"

    def __post_init__(self):
        if self.side not in ("left", "right", "top", "bottom"):
            raise ValueError(f"unknown side {self.side!r}")
        if self.width < 1:
            raise ValueError("band width must be >= 1")

    def apply(self, rgb, disp, rng) -> np.ndarray:
        h = np.zeros(disp.shape)
        w = self.width
        if self.side == "left":
            h[:, :w] = 1
        elif self.side == "right":
            h[:, -w:] = 1
        elif self.side == "top":
            h[:w, :] = 1
        else:
            h[-w:, :] = 1
        return h


HOLE_LAYERS = {c.kind: c for c in (EdgeHoles, DarkHoles, SpeckleHoles, BorderBandHoles)}


# --- value stages -----------------------------------------------------------

@dataclass(frozen=True)
class Quantization:
    """Snap stereo disparity (in pixels) to a sub-pixel step."""
    virtual_focal: float
    virtual_baseline: float
    subpixel_step: float
    kind = "quantization"

    def __post_init__(self):
        if min(self.virtual_focal, self.virtual_baseline, self.subpixel_step) <= 0:
            raise ValueError("quantization parameters must be positive")

    def apply(self, z, rng):
        fb = self.virtual_focal * self.virtual_baseline
        q = self.subpixel_step
        d_px = np.floor(fb / z / q + 0.5) * q
        return fb / np.maximum(d_px, q)


@dataclass(frozen=True)
class DepthGaussian:
    """Additive Gaussian depth jitter with std ``sigma0 + sigma1 * z**2``."""
    sigma0: float
    sigma1: float
    kind = "depth_gaussian"

    def __post_init__(self):
        if self.sigma0 < 0 or self.sigma1 < 0:
            raise ValueError("sigmas must be >= 0")

    def apply(self, z, rng):
        n = rng.standard_normal(z.shape)
        return np.maximum(z + n * (self.sigma0 + self.sigma1 * z * z), D_FLOOR)


@dataclass(frozen=True)
class LateralWarp:
    """Resample along smooth random pixel offsets (edge wobble)."""
    amplitude: float
    grid: float
    kind = "lateral_warp"

    def __post_init__(self):
        if self.amplitude < 0 or not self.grid > 0:
            raise ValueError("warp amplitude must be >= 0 and grid > 0")

    def apply(self, z, rng):
        h, w = z.shape
        dy = self.amplitude * _smooth_random(rng, z.shape, self.grid)
        dx = self.amplitude * _smooth_random(rng, z.shape, self.grid)
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        return ndimage.map_coordinates(z, [yy + dy, xx + dx], order=1, mode="nearest")


VALUE_STAGES = {c.kind: c for c in (Quantization, DepthGaussian, LateralWarp)}


def _build(registry: dict, spec: Any, what: str):
    if not isinstance(spec, dict):
        return spec
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in registry:
        raise ValueError(f"unknown {what} kind {kind!r}; expected one of {sorted(registry)}")
    return registry[kind](**spec)


def gen_hole_map(rgb: ImageRGB, gt: DepthMap, layers, rng: np.random.Generator) -> HoleProbField:
    """Combine hole layers as an independent union: H = 1 - prod(1 - h_j)."""
    if rgb.shape != gt.shape:
        raise ValueError(f"rgb {rgb.shape} and depth {gt.shape} differ in size")
    layers = [_build(HOLE_LAYERS, l, "hole layer") for l in layers]
    keep = np.ones(gt.shape)
    if layers:
        disp = _nearest_fill(to_disparity(gt).values, gt.valid) if gt.valid.any() else np.zeros(gt.shape)
        for layer in layers:
            keep *= 1.0 - np.clip(layer.apply(rgb, disp, rng), 0.0, 1.0)
    return HoleProbField(np.clip(1.0 - keep, 0.0, 1.0))


def gen_value_noise(rgb: ImageRGB, gt: DepthMap, stages, rng: np.random.Generator) -> ScalarField:
    """Degrade gt through the value stages in order; returns disparity on gt-valid pixels."""
    if not gt.valid.any():
        raise ValueError("ground truth has no valid pixels")
    stages = [_build(VALUE_STAGES, s, "value stage") for s in stages]
    base = to_disparity(gt)
    if not stages:
        return base
    z = _nearest_fill(gt.values, gt.valid)
    for stage in stages:
        z = stage.apply(z, rng)
    return ScalarField(np.where(gt.valid, 1.0 / z, 0.0), gt.valid)


def add_high_freq_noise(f: ScalarField, amplitude: float, probability: float,
                        rng: np.random.Generator) -> ScalarField:
    """Multiply a random subset of pixels by ``1 + U(-amplitude, amplitude)``."""
    if amplitude < 0:
        raise ValueError("amplitude must be >= 0")
    _check_prob(probability, "probability")
    # draw full arrays regardless of parameters so stream consumption is fixed
    hit = rng.random(f.shape) < probability
    factor = 1.0 + rng.uniform(-amplitude, amplitude, f.shape)
    return ScalarField(np.where(hit & f.valid, f.values * factor, f.values), f.valid)


def compose_camera_depth(value_field: ScalarField, hole: HoleProbField, threshold: float = 0.5,
                         disp_floor: float = D_FLOOR) -> DepthMap:
    """Keep pixels with hole probability strictly below ``threshold``."""
    if value_field.shape != hole.shape:
        raise ValueError(f"shape mismatch: {value_field.shape} vs {hole.shape}")
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    keep = value_field.valid & (hole.prob < threshold)
    return from_disparity(ScalarField(value_field.values, keep), disp_floor)


# --- full pipeline ----------------------------------------------------------

@dataclass(frozen=True)
class HighFreqParams:
    amplitude: float = 0.0
    probability: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        _check_prob(self.probability, "probability")


@dataclass(frozen=True)
class NoisePipelineConfig:
    value_stages: tuple = ()
    rescale: RescaleAugmentParams = field(default_factory=RescaleAugmentParams)
    high_freq: HighFreqParams = field(default_factory=HighFreqParams)
    hole_layers: tuple = ()
    hole_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "value_stages",
                           tuple(_build(VALUE_STAGES, s, "value stage") for s in self.value_stages))
        object.__setattr__(self, "hole_layers",
                           tuple(_build(HOLE_LAYERS, l, "hole layer") for l in self.hole_layers))
        if isinstance(self.rescale, dict):
            r = dict(self.rescale)
            if "radii_pool" in r:
                r["radii_pool"] = tuple(r["radii_pool"])
            object.__setattr__(self, "rescale", RescaleAugmentParams(**r))
        if isinstance(self.high_freq, dict):
            object.__setattr__(self, "high_freq", HighFreqParams(**self.high_freq))
        if not 0 < self.hole_threshold <= 1:
            raise ValueError("hole_threshold must be in (0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "NoisePipelineConfig":
        known = {"value_stages", "rescale", "high_freq", "hole_layers", "hole_threshold", "seed"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown pipeline keys: {sorted(unknown)}")
        d = dict(d)
        d["value_stages"] = tuple(d.get("value_stages") or ())
        d["hole_layers"] = tuple(d.get("hole_layers") or ())
        return cls(**d)

    def to_dict(self) -> dict:
        def stage(s):
            return {"kind": s.kind, **{k: getattr(s, k) for k in s.__dataclass_fields__}}
        return {
            "value_stages": [stage(s) for s in self.value_stages],
            "rescale": {"radii_pool": list(self.rescale.radii_pool), "epsilon": self.rescale.epsilon,
                        "min_valid": self.rescale.min_valid, "seed_tag": self.rescale.seed_tag},
            "high_freq": {"amplitude": self.high_freq.amplitude,
                          "probability": self.high_freq.probability},
            "hole_layers": [stage(l) for l in self.hole_layers],
            "hole_threshold": self.hole_threshold,
            "seed": self.seed,
        }


@dataclass
class SynthesisTrace:
    radius: int
    hole: HoleProbField
    value: ScalarField


def synthesize(rgb: ImageRGB, gt: DepthMap, cfg: NoisePipelineConfig, sample_index: int = 0,
               value_noise: ScalarField | None = None, hole_prob: HoleProbField | None = None,
               trace: bool = False):
    """Turn clean ``gt`` into camera-style depth.

    Order: value noise, guided rescale against gt, high-frequency jitter, holes.
    An imported ``value_noise`` is treated as relative and first mapped back
    to metric scale against ``gt``; an imported ``hole_prob`` replaces the
    procedural hole layers.
    """
    if rgb.shape != gt.shape:
        raise ValueError(f"rgb {rgb.shape} and depth {gt.shape} differ in size")
    seed = cfg.seed
    if value_noise is None:
        v = gen_value_noise(rgb, gt, cfg.value_stages, derive_rng(seed, sample_index, "value"))
    else:
        v = to_disparity(affine_recover(value_noise, gt))
        v = ScalarField(v.values, v.valid & gt.valid)
    v, radius = guided_rescale_augment(v, gt, cfg.rescale,
                                       derive_rng(seed, sample_index, cfg.rescale.seed_tag),
                                       return_radius=True)
    v = ScalarField(v.values, v.valid & gt.valid)
    hf = cfg.high_freq
    v = add_high_freq_noise(v, hf.amplitude, hf.probability, derive_rng(seed, sample_index, "highfreq"))
    if hole_prob is None:
        hole_prob = gen_hole_map(rgb, gt, cfg.hole_layers, derive_rng(seed, sample_index, "hole"))
    elif hole_prob.shape != gt.shape:
        raise ValueError("imported hole map does not match depth size")
    out = compose_camera_depth(v, hole_prob, cfg.hole_threshold)
    if trace:
        return out, SynthesisTrace(radius=radius, hole=hole_prob, value=v)
    return out
