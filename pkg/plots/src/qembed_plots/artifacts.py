"""Readers for the experiment harness's CSV/JSON artifacts.

Every reader validates before returning: a file that exists but does not
match its declared schema raises ArtifactError naming the file and the
first problem found.  Rendering never writes anything until all of its
inputs have passed through here.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SWEEP_HEADER = "y,mean,std,replications,horizon,seed0"

# slice files share the sweep layout but lead with their two axis columns
_SLICE_TAIL = "mean,std,replications,horizon,seed0"

_SUMMARY_KEYS = ("n_runs", "budget", "best", "avg", "std", "avg_evals")


class ArtifactError(ValueError):
    """An input file is missing, empty, or off-schema."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = Path(path)
        self.reason = reason


def _lines(path):
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(path, "file not found")
    text = path.read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ArtifactError(path, "empty file")
    return lines


def _floats(path, line, lineno, n):
    cells = line.split(",")
    if len(cells) != n:
        raise ArtifactError(path, f"line {lineno}: expected {n} columns, got {len(cells)}")
    try:
        return [float(c) for c in cells]
    except ValueError:
        raise ArtifactError(path, f"line {lineno}: non-numeric cell in {line!r}") from None


@dataclass(frozen=True)
class SweepTable:
    """One curve: grid values with per-point mean and std.

    Exact-curve files use the same layout with std identically 0, so a
    single reader serves both the simulated and the exact inputs.
    """

    path: Path
    y: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    @property
    def label(self):
        return self.path.stem


def read_sweep(path):
    lines = _lines(path)
    if lines[0] != SWEEP_HEADER:
        raise ArtifactError(path, f"expected header {SWEEP_HEADER!r}, got {lines[0]!r}")
    if len(lines) == 1:
        raise ArtifactError(path, "header only, no data rows")
    rows = [_floats(path, ln, i + 2, 6) for i, ln in enumerate(lines[1:])]
    y = np.array([r[0] for r in rows])
    if len(y) > 1 and not np.all(np.diff(y) > 0):
        raise ArtifactError(path, "grid column must be strictly increasing")
    return SweepTable(
        Path(path),
        y,
        np.array([r[1] for r in rows]),
        np.array([r[2] for r in rows]),
    )


@dataclass(frozen=True)
class SliceTable:
    """A rectangular 2D sweep of the objective over one parameter plane."""

    path: Path
    xname: str
    yname: str
    xs: np.ndarray
    ys: np.ndarray
    mean: np.ndarray  # shape (len(ys), len(xs)), row-major in y

    @property
    def label(self):
        return f"{self.xname} vs {self.yname}"


def read_slice(path):
    lines = _lines(path)
    head = lines[0].split(",")
    if len(head) != 7 or ",".join(head[2:]) != _SLICE_TAIL:
        raise ArtifactError(
            path, f"expected header '<a>,<b>,{_SLICE_TAIL}', got {lines[0]!r}"
        )
    if len(lines) == 1:
        raise ArtifactError(path, "header only, no data rows")
    rows = [_floats(path, ln, i + 2, 7) for i, ln in enumerate(lines[1:])]
    xs = np.unique([r[0] for r in rows])
    ys = np.unique([r[1] for r in rows])
    if len(rows) != len(xs) * len(ys):
        raise ArtifactError(
            path,
            f"grid is not rectangular: {len(rows)} rows for "
            f"{len(xs)} x {len(ys)} distinct coordinates",
        )
    mean = np.full((len(ys), len(xs)), np.nan)
    for r in rows:
        i = int(np.searchsorted(ys, r[1]))
        j = int(np.searchsorted(xs, r[0]))
        if not np.isnan(mean[i, j]):
            raise ArtifactError(path, f"duplicate cell ({r[0]!r}, {r[1]!r})")
        mean[i, j] = r[2]
    return SliceTable(Path(path), head[0], head[1], xs, ys, mean)


def read_campaign(path):
    """Campaign summary JSON: per-method best/avg/std/eval-count rows."""
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(path, "file not found")
    text = path.read_text().strip()
    if not text:
        raise ArtifactError(path, "empty file")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArtifactError(path, f"not valid JSON ({exc})") from None
    methods = data.get("methods") if isinstance(data, dict) else None
    if not isinstance(methods, dict) or not methods:
        raise ArtifactError(path, "expected a non-empty 'methods' table")
    for name, row in methods.items():
        missing = [k for k in _SUMMARY_KEYS if k not in row]
        if missing:
            raise ArtifactError(path, f"method {name!r} is missing {missing}")
    return methods
