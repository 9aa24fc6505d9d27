"""Trajectory container and the CSV / dataset-directory formats."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

VISIBLE, INTERP_HELDOUT, EXTRAP_HELDOUT = 0, 1, 2
FORMAT_VERSION = 1

__all__ = [
    "VISIBLE",
    "INTERP_HELDOUT",
    "EXTRAP_HELDOUT",
    "Trajectory",
    "write_csv",
    "read_csv",
    "write_dataset",
    "read_dataset",
    "read_manifest",
    "validate_changepoints",
    "extract_sdfs",
]


def validate_changepoints(changepoints: Sequence[int], n: int) -> None:
    """Changepoints are segment-final indices, strictly increasing, in ``[0, n-1)``."""
    prev = -1
    for c in changepoints:
        if c <= prev:
            raise ValueError(f"changepoints must be strictly increasing: {list(changepoints)}")
        if c < 0 or c >= n - 1:
            raise ValueError(f"changepoint {c} outside [0, {n - 1})")
        prev = c


@dataclass
class Trajectory:
    times: np.ndarray
    values: np.ndarray  # (n, dim)
    mask: np.ndarray = None  # per-point VISIBLE / INTERP_HELDOUT / EXTRAP_HELDOUT
    changepoints: list[int] = field(default_factory=list)
    segment_params: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        self.values = values
        if self.mask is None:
            self.mask = np.zeros(len(self.times), dtype=np.int64)
        self.mask = np.asarray(self.mask, dtype=np.int64)
        self.changepoints = [int(c) for c in self.changepoints]
        n = len(self.times)
        if self.values.shape[0] != n or len(self.mask) != n:
            raise ValueError("times, values and mask lengths differ")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        validate_changepoints(self.changepoints, n)

    def __len__(self):
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def segments(self) -> list[tuple[int, int]]:
        """Inclusive ``(start, end)`` index pairs of the labeled segments."""
        bounds = [-1] + self.changepoints + [len(self) - 1]
        return [(a + 1, b) for a, b in zip(bounds[:-1], bounds[1:])]

    def visible(self) -> "Trajectory":
        """The visible points only, with changepoints mapped onto them.

        A true changepoint maps to the last visible index at or before it.
        """
        keep = np.flatnonzero(self.mask == VISIBLE)
        cps = []
        for c in self.changepoints:
            j = int(np.searchsorted(keep, c, side="right")) - 1
            if 0 <= j < len(keep) - 1 and (not cps or j > cps[-1]):
                cps.append(j)
        return Trajectory(self.times[keep], self.values[keep], None, cps,
                          list(self.segment_params))

    def visible_index(self) -> np.ndarray:
        return np.flatnonzero(self.mask == VISIBLE)


def extract_sdfs(traj: Trajectory) -> list[Trajectory]:
    """Split a labeled hybrid trajectory at its changepoints; times are kept as-is."""
    out = []
    for i, (s, e) in enumerate(traj.segments()):
        params = [traj.segment_params[i]] if i < len(traj.segment_params) else []
        out.append(Trajectory(traj.times[s:e + 1], traj.values[s:e + 1],
                              traj.mask[s:e + 1], [], params))
    return out


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(traj: Trajectory, path) -> None:
    path = Path(path)
    cps = set(traj.changepoints)
    header = ["t"] + [f"dim_{d}" for d in range(traj.dim)] + ["mask", "is_changepoint"]
    lines = [",".join(header)]
    for i in range(len(traj)):
        row = [_fmt(traj.times[i])] + [_fmt(v) for v in traj.values[i]]
        row += [str(int(traj.mask[i])), "1" if i in cps else "0"]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def read_csv(path) -> Trajectory:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty trajectory file") from None
        if len(header) < 4 or header[0] != "t" or header[-2:] != ["mask", "is_changepoint"]:
            raise ValueError(f"{path}: unexpected header {header}")
        dims = header[1:-2]
        if dims != [f"dim_{d}" for d in range(len(dims))]:
            raise ValueError(f"{path}: unexpected dimension columns {dims}")
        rows = [r for r in reader if r]
    if not rows:
        raise ValueError(f"{path}: no observations")
    try:
        arr = np.array([[float(x) for x in r[:-2]] for r in rows])
        mask = np.array([int(r[-2]) for r in rows])
        is_cp = np.array([int(r[-1]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from None
    if not np.all(np.isin(mask, (VISIBLE, INTERP_HELDOUT, EXTRAP_HELDOUT))):
        raise ValueError(f"{path}: mask values must be 0, 1 or 2")
    return Trajectory(arr[:, 0], arr[:, 1:], mask, list(np.flatnonzero(is_cp == 1)))


def write_dataset(root, splits: dict[str, Iterable[Trajectory]], manifest: dict) -> Path:
    """Write ``root/<split>/<index>.csv`` files plus ``root/manifest.json``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    counts = {}
    for split, trajs in splits.items():
        d = root / split
        d.mkdir(exist_ok=True)
        n = 0
        for i, traj in enumerate(trajs):
            write_csv(traj, d / f"{i:06d}.csv")
            n += 1
        counts[split] = n
    manifest = dict(manifest)
    manifest["format_version"] = FORMAT_VERSION
    manifest["counts"] = counts
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root


def read_manifest(root) -> dict:
    return json.loads((Path(root) / "manifest.json").read_text())


def read_dataset(root, split: str | None = None) -> list[Trajectory]:
    """Read one split of a dataset directory, or a bare directory of CSV files."""
    d = Path(root) if split is None else Path(root) / split
    if not d.is_dir():
        raise FileNotFoundError(f"no such dataset directory: {d}")
    return [read_csv(p) for p in sorted(d.glob("*.csv"))]
