"""Effect curves and their on-disk format (CSV plus a JSON-lines sidecar)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class EffectCurve:
    """Estimated interventional means on a grid of intervention values.

    ``metadata`` carries everything needed to reproduce the curve: the
    method tag, the adjustment set, boosting iterations and the stopping
    rule that fired (for S-mint), seeds, node-visit counts for the path
    simulators.
    """

    grid: np.ndarray
    estimates: np.ndarray
    x: int
    y: int
    method: str
    adjustment: tuple[int, ...] = ()
    stderr: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.estimates = np.asarray(self.estimates, dtype=float)
        if self.grid.shape != self.estimates.shape or self.grid.ndim != 1:
            raise ValueError("grid and estimates must be 1-d arrays of equal length")
        if not np.all(np.isfinite(self.estimates)):
            raise ValueError("effect curve contains non-finite estimates")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)

    def __len__(self):
        return len(self.grid)

    def slope(self) -> float:
        """Least-squares slope of the estimates against the grid."""
        if len(self.grid) < 2:
            raise ValueError("slope needs at least two grid points")
        return float(np.polyfit(self.grid, self.estimates, 1)[0])

    def sidecar(self) -> dict:
        meta = {
            "method": self.method,
            "x": self.x,
            "y": self.y,
            "adjustment": list(self.adjustment),
        }
        meta.update(self.metadata)
        return meta

    def to_csv(self, path, meta_path=None) -> None:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["x_value", "estimate"]
            if self.stderr is not None:
                header.append("stderr")
            w.writerow(header)
            for i, (v, e) in enumerate(zip(self.grid, self.estimates)):
                row = [repr(float(v)), repr(float(e))]
                if self.stderr is not None:
                    row.append(repr(float(self.stderr[i])))
                w.writerow(row)
        if meta_path is None:
            meta_path = sidecar_path(path)
        with open(meta_path, "w") as fh:
            fh.write(json.dumps(_jsonable(self.sidecar()), sort_keys=True) + "\n")

    @classmethod
    def read_csv(cls, path, meta_path=None) -> "EffectCurve":
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        grid = [float(r["x_value"]) for r in rows]
        est = [float(r["estimate"]) for r in rows]
        stderr = [float(r["stderr"]) for r in rows] if rows and "stderr" in rows[0] else None
        meta_path = Path(meta_path) if meta_path else sidecar_path(path)
        meta = {}
        if meta_path.exists():
            with open(meta_path) as fh:
                meta = json.loads(fh.readline())
        method = meta.pop("method", "unknown")
        x = meta.pop("x", -1)
        y = meta.pop("y", -1)
        adjustment = tuple(meta.pop("adjustment", ()))
        return cls(grid, est, x, y, method, adjustment, stderr, meta)


def sidecar_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".meta.jsonl")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.random.SeedSequence):
        return {"entropy": obj.entropy, "spawn_key": list(obj.spawn_key)}
    return obj


def deciles(x) -> np.ndarray:
    """The nine empirical deciles, interpolating linearly between order statistics.

    The q-quantile sits at (1-based) position ``1 + (n - 1) q`` of the
    sorted sample.
    """
    x = np.sort(np.asarray(x, dtype=float))
    n = len(x)
    if n < 10:
        raise ValueError(f"deciles need at least 10 points, got {n}")
    pos = (n - 1) * np.arange(1, 10) / 10.0
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    frac = pos - lo
    return x[lo] + frac * (x[hi] - x[lo])
