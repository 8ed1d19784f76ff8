"""Pinhole back-projection and PLY export.

Camera frame is optical: +x right, +y down, +z forward. Pixel (u, v) is the
pixel center at integer coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DepthMap, ImageRGB, Intrinsics


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", p)
        if self.colors is not None:
            c = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if len(c) != len(p):
                raise ValueError("colors and points differ in length")
            object.__setattr__(self, "colors", c)

    def __len__(self):
        return len(self.points)


def _check_dims(shape, k: Intrinsics):
    if shape != (k.height, k.width):
        raise ValueError(f"map is {shape[1]}x{shape[0]} but intrinsics say {k.width}x{k.height}")


def backproject(d: DepthMap, k: Intrinsics, rgb: ImageRGB | None = None) -> PointCloud:
    _check_dims(d.shape, k)
    if rgb is not None and rgb.shape != d.shape:
        raise ValueError("rgb and depth differ in size")
    v, u = np.nonzero(d.valid)
    z = d.values[v, u]
    pts = np.stack([(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z], axis=1)
    colors = rgb.pixels[v, u] if rgb is not None else None
    return PointCloud(pts, colors)


def project(p: PointCloud, k: Intrinsics) -> np.ndarray:
    """Rows of (u, v, z)."""
    x, y, z = p.points.T
    if np.any(z <= 0):
        raise ValueError("cannot project points with non-positive z")
    return np.stack([k.fx * x / z + k.cx, k.fy * y / z + k.cy, z], axis=1)


def _vertex_dtype(colored: bool) -> np.dtype:
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if colored:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    return np.dtype(fields)


def write_ply(p: PointCloud, path, mode: str = "binary") -> None:
    if mode not in ("ascii", "binary"):
        raise ValueError(f"mode must be 'ascii' or 'binary', got {mode!r}")
    colored = p.colors is not None
    fmt = "ascii" if mode == "ascii" else "binary_little_endian"
    header = [f"ply", f"format {fmt} 1.0", f"element vertex {len(p)}",
              "property float x", "property float y", "property float z"]
    if colored:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")

    rec = np.empty(len(p), dtype=_vertex_dtype(colored))
    for i, ax in enumerate("xyz"):
        rec[ax] = p.points[:, i]
    if colored:
        for i, ch in enumerate(("red", "green", "blue")):
            rec[ch] = p.colors[:, i]

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if mode == "binary":
            f.write(rec.tobytes())
            return
        for r in rec:
            # %.9g round-trips float32 exactly
            line = " ".join("%.9g" % r[ax] for ax in "xyz")
            if colored:
                line += " %d %d %d" % (r["red"], r["green"], r["blue"])
            f.write((line + "\n").encode("ascii"))


def read_ply(path) -> PointCloud:
    """Reader for the files ``write_ply`` produces (float xyz, optional uchar rgb)."""
    data = Path(path).read_bytes()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    lines = data[:end].decode("ascii").splitlines()
    if lines[0] != "ply":
        raise ValueError("not a PLY file")
    fmt = lines[1].split()[1]
    n = next(int(l.split()[2]) for l in lines if l.startswith("element vertex"))
    colored = any(l.endswith(" red") for l in lines)
    dt = _vertex_dtype(colored)
    if fmt == "binary_little_endian":
        rec = np.frombuffer(data, dtype=dt, count=n, offset=end)
    elif fmt == "ascii":
        rows = [l.split() for l in data[end:].decode("ascii").splitlines() if l.strip()][:n]
        rec = np.array([tuple(float(v) if i < 3 else int(v) for i, v in enumerate(r)) for r in rows],
                       dtype=dt) if rows else np.empty(0, dt)
    else:
        raise ValueError(f"unsupported PLY format {fmt}")
    pts = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    cols = np.stack([rec["red"], rec["green"], rec["blue"]], axis=1) if colored else None
    return PointCloud(pts, cols)
