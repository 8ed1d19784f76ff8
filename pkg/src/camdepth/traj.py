"""Joint-trajectory smoothness: mean absolute acceleration and RMS jerk."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class JointTrajectory:
    t: np.ndarray
    q: np.ndarray  # (T, J) radians
    names: tuple[str, ...]

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        q = np.asarray(self.q, dtype=np.float64)
        if q.ndim == 1:
            q = q[:, None]
        if t.ndim != 1 or len(t) != len(q):
            raise ValueError("timestamps and positions differ in length")
        if len(t) < 3:
            raise ValueError("a trajectory needs at least 3 samples")
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(q)) or not np.all(np.isfinite(t)):
            raise ValueError("non-finite trajectory values")
        names = tuple(self.names) if self.names else tuple(f"j{i + 1}" for i in range(q.shape[1]))
        if len(names) != q.shape[1]:
            raise ValueError("one name per joint required")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "names", names)

    @classmethod
    def uniform(cls, q, rate: float, names=()) -> "JointTrajectory":
        q = np.asarray(q, dtype=np.float64)
        return cls(np.arange(len(q)) / rate, q, names)


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def load_traj(path, rate: float | None = None) -> JointTrajectory:
    """Read ``t,j1,...,jJ`` CSV, or joint-only rows sampled at ``rate`` Hz.

    With ``rate`` a header row is optional and, if present, names the joints.
    """
    with open(path, newline="") as f:
        rows = [r for r in csv.reader(f) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty trajectory file")
    header = None
    if not all(_is_number(c) for c in rows[0]):
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    width = len(header) if header else len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ValueError(f"{path}: row {i + 1} has {len(r)} columns, expected {width}")
    data = np.array(rows, dtype=np.float64).reshape(len(rows), width)
    if rate is not None:
        return JointTrajectory.uniform(data, rate, header or ())
    if header is None:
        raise ValueError(f"{path}: no header; pass a sampling rate for headerless files")
    return JointTrajectory(data[:, 0], data[:, 1:], header[1:])


def _uniform_step(t: np.ndarray) -> float | None:
    """Common step if the timestamps are uniform up to float noise, else None."""
    h = (t[-1] - t[0]) / (len(t) - 1)
    if np.all(np.abs(np.diff(t) - h) <= 1e-9 * h):
        return h
    return None


def accelerations(traj: JointTrajectory) -> np.ndarray:
    """Central second differences at interior samples, (T-2, J).

    Non-uniform spacing uses the divided-difference form
    2 [(q+ - q)/h2 - (q - q-)/h1] / (h1 + h2).
    """
    t, q = traj.t, traj.q
    h = _uniform_step(t)
    if h is not None:
        return (q[2:] - 2 * q[1:-1] + q[:-2]) / (h * h)
    h1 = (t[1:-1] - t[:-2])[:, None]
    h2 = (t[2:] - t[1:-1])[:, None]
    return 2.0 * ((q[2:] - q[1:-1]) / h2 - (q[1:-1] - q[:-2]) / h1) / (h1 + h2)


def mean_abs_accel(traj: JointTrajectory) -> np.ndarray:
    return np.mean(np.abs(accelerations(traj)), axis=0)


def rms_jerk(traj: JointTrajectory) -> np.ndarray:
    """RMS of first differences of the acceleration samples."""
    if len(traj.t) < 4:
        raise ValueError("RMS jerk needs at least 4 samples")
    a = accelerations(traj)
    h = _uniform_step(traj.t)
    dt = h if h is not None else np.diff(traj.t[1:-1])[:, None]
    j = np.diff(a, axis=0) / dt
    return np.sqrt(np.mean(j * j, axis=0))


def smoothness_table(trajs: dict[str, JointTrajectory]) -> dict[str, dict[str, dict[str, float]]]:
    """{method: {metric: {joint: value}}} for methods sharing the same joints."""
    out = {}
    for method, tr in trajs.items():
        out[method] = {
            "mean_abs_accel": dict(zip(tr.names, map(float, mean_abs_accel(tr)))),
            "rms_jerk": dict(zip(tr.names, map(float, rms_jerk(tr)))) if len(tr.t) >= 4 else {},
        }
    return out


def table_to_csv(table: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    joints = []
    for m in table.values():
        for per_joint in m.values():
            joints += [j for j in per_joint if j not in joints]
    w.writerow(["method", "metric", *joints])
    for method, metrics in table.items():
        for metric, per_joint in metrics.items():
            w.writerow([method, metric, *(repr(per_joint[j]) if j in per_joint else "" for j in joints)])
    return buf.getvalue()
