"""Shared depth/image types, PNG and manifest I/O, and seeded RNG streams."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import cv2
import numpy as np
import yaml

DEFAULT_DEPTH_SCALE = 1000.0
U16_MAX = 65535


class DepthIOError(ValueError):
    pass


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class DepthMap:
    """Metric depth in meters. Holes are stored as exact zeros.

    ``valid`` is derived from ``values`` so the two can never disagree.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError(f"depth must be a non-empty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("depth values must be finite and non-negative")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_array(cls, arr) -> "DepthMap":
        """Build from arbitrary floats; NaN, inf and non-positive entries become holes."""
        a = np.array(arr, dtype=np.float64)
        a[~np.isfinite(a) | (a <= 0)] = 0.0
        return cls(a)

    @property
    def valid(self) -> np.ndarray:
        return self.values > 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ScalarField:
    """Per-pixel real values with a validity mask. Invalid entries hold 0."""

    values: np.ndarray
    valid: np.ndarray = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.size == 0:
            raise ValueError(f"field must be a non-empty 2-D array, got shape {v.shape}")
        if self.valid is None:
            m = np.isfinite(v)
        else:
            m = np.array(self.valid, dtype=bool)
            if m.shape != v.shape:
                raise ValueError("mask shape does not match values")
            m &= np.isfinite(v)
        v[~m] = 0.0
        v.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid", m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class ImageRGB:
    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 3 or p.shape[2] != 3:
            raise ValueError(f"expected HxWx3 image, got shape {p.shape}")
        p = p.astype(np.uint8, copy=True)
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    depth_scale: float = DEFAULT_DEPTH_SCALE

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not self.depth_scale > 0:
            raise ValueError("depth_scale must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("resolution must be at least 1x1")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Intrinsics":
        keys = ("fx", "fy", "cx", "cy", "width", "height")
        missing = [k for k in keys if k not in d]
        if missing:
            raise ValueError(f"intrinsics missing keys: {missing}")
        return cls(
            fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]), cy=float(d["cy"]),
            width=int(d["width"]), height=int(d["height"]),
            depth_scale=float(d.get("depth_scale", DEFAULT_DEPTH_SCALE)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height, "depth_scale": self.depth_scale}


def load_intrinsics(path) -> Intrinsics:
    with open(path) as f:
        return Intrinsics.from_dict(json.load(f))


# --- PNG codecs -------------------------------------------------------------

def _read_png(path) -> np.ndarray:
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise DepthIOError(f"no such file: {path}")
    img = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if img is None:
        raise DepthIOError(f"unreadable image: {path}")
    return img


def _write_png(path, img: np.ndarray) -> None:
    path = os.fspath(path)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    # fixed compression level keeps bytes reproducible
    if not cv2.imwrite(path, img, [cv2.IMWRITE_PNG_COMPRESSION, 3]):
        raise DepthIOError(f"failed to write {path}")


def read_u16_png(path) -> np.ndarray:
    img = _read_png(path)
    if img.ndim != 2:
        raise DepthIOError(f"{path}: expected single-channel image, got {img.shape[2]} channels")
    if img.dtype != np.uint16:
        raise DepthIOError(f"{path}: expected 16-bit PNG, got {img.dtype}")
    return img


def write_u16_png(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.dtype != np.uint16 or arr.ndim != 2:
        raise DepthIOError("expected a 2-D uint16 array")
    _write_png(path, arr)


def load_depth(path, depth_scale: float = DEFAULT_DEPTH_SCALE) -> DepthMap:
    if not depth_scale > 0:
        raise ValueError("depth_scale must be positive")
    raw = read_u16_png(path)
    return DepthMap(raw.astype(np.float64) / depth_scale)


def encode_depth(d: DepthMap, depth_scale: float = DEFAULT_DEPTH_SCALE) -> np.ndarray:
    """Quantize to stored integer units (round half up); holes become 0."""
    if not depth_scale > 0:
        raise ValueError("depth_scale must be positive")
    u = np.floor(d.values * depth_scale + 0.5)
    if np.any(u > U16_MAX):
        worst = float(d.values.max())
        raise DepthIOError(f"depth {worst:.3f} m overflows 16 bits at scale {depth_scale}")
    # a tiny valid depth may round to 0 and silently become a hole; keep it at 1 unit
    u[d.valid & (u == 0)] = 1
    return u.astype(np.uint16)


def save_depth(d: DepthMap, path, depth_scale: float = DEFAULT_DEPTH_SCALE) -> None:
    write_u16_png(path, encode_depth(d, depth_scale))


def load_rgb(path) -> ImageRGB:
    img = _read_png(path)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise DepthIOError(f"{path}: expected 8-bit 3-channel image")
    return ImageRGB(cv2.cvtColor(img, cv2.COLOR_BGR2RGB))


def save_rgb(img: ImageRGB, path) -> None:
    _write_png(path, cv2.cvtColor(np.ascontiguousarray(img.pixels), cv2.COLOR_RGB2BGR))


def luminance(img: ImageRGB) -> ScalarField:
    p = img.pixels.astype(np.float64)
    return ScalarField(0.299 * p[..., 0] + 0.587 * p[..., 1] + 0.114 * p[..., 2])


# --- seeding ----------------------------------------------------------------

def _tag_words(tag: str) -> list[int]:
    # hashlib rather than hash(): str hashing is salted per process
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def derive_rng(global_seed: int, sample_index: int, stage_tag: str) -> np.random.Generator:
    """Independent generator keyed on (seed, sample, stage)."""
    seed = int(global_seed) & 0xFFFFFFFFFFFFFFFF
    words = [seed & 0xFFFFFFFF, seed >> 32, int(sample_index) & 0xFFFFFFFF, int(sample_index) >> 32]
    ss = np.random.SeedSequence(words + _tag_words(stage_tag))
    return np.random.Generator(np.random.PCG64(ss))


# --- manifests --------------------------------------------------------------

@dataclass(frozen=True)
class SampleRecord:
    id: str
    rgb_path: Path
    gt_depth_path: Path
    camera_depth_path: Path | None = None
    pred_depth_path: Path | None = None
    intrinsics_ref: str | None = None


@dataclass
class DatasetManifest:
    root: Path
    samples: list[SampleRecord]
    intrinsics: dict[str, Intrinsics] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def intrinsics_for(self, rec: SampleRecord) -> Intrinsics | None:
        if rec.intrinsics_ref is None:
            if len(self.intrinsics) == 1:
                return next(iter(self.intrinsics.values()))
            return None
        return self.intrinsics.get(rec.intrinsics_ref)

    def depth_scale_for(self, rec: SampleRecord) -> float:
        k = self.intrinsics_for(rec)
        return k.depth_scale if k is not None else DEFAULT_DEPTH_SCALE

    def validate(self) -> list[str]:
        problems = []
        for rec in self.samples:
            for label in ("rgb_path", "gt_depth_path", "camera_depth_path", "pred_depth_path"):
                p = getattr(rec, label)
                if p is not None and not p.is_file():
                    problems.append(f"{rec.id}: {label} not found: {p}")
            if rec.intrinsics_ref is not None and rec.intrinsics_ref not in self.intrinsics:
                problems.append(f"{rec.id}: unknown intrinsics '{rec.intrinsics_ref}'")
        self.problems = problems
        return problems


def _opt_path(root: Path, v) -> Path | None:
    return None if v is None else root / str(v)


def load_manifest(path) -> DatasetManifest:
    """Parse a YAML manifest. Missing files are reported in ``problems``, not raised.

    Schema::

        metadata: {scene: kitchen, camera: rgbd0}      # optional, strings
        intrinsics:                                    # name -> dict or JSON path
          cam0: {fx: 600, fy: 600, cx: 320, cy: 240, width: 640, height: 480, depth_scale: 1000}
          other: intrinsics/other.json
        samples:
          - {id: s000, rgb: rgb/s000.png, gt_depth: gt/s000.png,
             camera_depth: raw/s000.png, pred_depth: pred/s000.png, intrinsics: cam0}
    """
    path = Path(path)
    root = path.parent
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ManifestError(f"{path}: malformed manifest: {e}") from e
    except OSError as e:
        raise ManifestError(f"{path}: {e}") from e
    if not isinstance(doc, dict) or not isinstance(doc.get("samples"), list):
        raise ManifestError(f"{path}: manifest needs a 'samples' list")

    intr = {}
    for name, spec in (doc.get("intrinsics") or {}).items():
        try:
            if isinstance(spec, dict):
                intr[str(name)] = Intrinsics.from_dict(spec)
            else:
                intr[str(name)] = load_intrinsics(root / str(spec))
        except (OSError, ValueError) as e:
            raise ManifestError(f"{path}: intrinsics '{name}': {e}") from e

    samples, seen = [], set()
    for i, s in enumerate(doc["samples"]):
        if not isinstance(s, dict) or "id" not in s:
            raise ManifestError(f"{path}: sample #{i} must be a mapping with an 'id'")
        sid = str(s["id"])
        if sid in seen:
            raise ManifestError(f"{path}: duplicate sample id '{sid}'")
        seen.add(sid)
        for key in ("rgb", "gt_depth"):
            if key not in s:
                raise ManifestError(f"{path}: sample '{sid}' missing '{key}'")
        samples.append(SampleRecord(
            id=sid,
            rgb_path=root / str(s["rgb"]),
            gt_depth_path=root / str(s["gt_depth"]),
            camera_depth_path=_opt_path(root, s.get("camera_depth")),
            pred_depth_path=_opt_path(root, s.get("pred_depth")),
            intrinsics_ref=None if s.get("intrinsics") is None else str(s["intrinsics"]),
        ))

    meta = {str(k): str(v) for k, v in (doc.get("metadata") or {}).items()}
    m = DatasetManifest(root=root, samples=samples, intrinsics=intr, metadata=meta)
    m.validate()
    return m
