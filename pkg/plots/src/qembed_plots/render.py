"""Turn harness artifacts into figures.

Four figure kinds cover the repository's outputs:

  band-curve   one sweep CSV, mean line with a mean +- 3 std shaded band,
               optionally overlaid with an exact curve
  multi-panel  several sweep CSVs side by side, shared axes, one band each
  contour      two-parameter objective slices as filled contours; the
               filled levels linearly interpolate between grid cells
  table        a campaign summary JSON as a one-row-per-method table

Rendering is a pure function of the input files.  All inputs are read and
validated first; the output file is written in one shot at the end, so a
failed render leaves nothing behind.  Re-rendering the same inputs with
the same library versions reproduces the output byte for byte (date
metadata is stripped from the vector formats).
"""

import io
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib
from matplotlib.figure import Figure

from .artifacts import ArtifactError, read_campaign, read_slice, read_sweep

KINDS = ("band-curve", "multi-panel", "contour", "table")

_BAND_SIGMAS = 3.0
_DPI = 110

# savefig options that keep each format reproducible across runs
_FORMAT_OPTS = {
    "png": {},
    "svg": {"metadata": {"Date": None}},
    "pdf": {"metadata": {"CreationDate": None}},
}


@dataclass(frozen=True)
class PlotSpec:
    """One figure request: what to read, how to draw it, where to put it."""

    kind: str
    inputs: tuple
    out: Path
    overlays: tuple = ()  # exact-curve CSVs matched to inputs by position
    xlabel: str = None
    ylabel: str = None
    title: str = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; pick one of {KINDS}")
        paths = tuple(Path(p) for p in _as_tuple(self.inputs))
        if not paths:
            raise ValueError("a figure needs at least one input file")
        object.__setattr__(self, "inputs", paths)
        object.__setattr__(
            self, "overlays", tuple(Path(p) for p in _as_tuple(self.overlays))
        )
        out = Path(self.out)
        if out.suffix.lstrip(".").lower() not in _FORMAT_OPTS:
            raise ValueError(
                f"output path {out} needs one of {sorted(_FORMAT_OPTS)} as its suffix"
            )
        object.__setattr__(self, "out", out)


def _as_tuple(value):
    if value is None:
        return ()
    if isinstance(value, (str, Path)):
        return (value,)
    return tuple(value)


def render(spec: PlotSpec) -> Path:
    """Validate every input, draw the figure, write the image in one shot."""
    fig = build(spec)
    fmt = spec.out.suffix.lstrip(".").lower()
    buf = io.BytesIO()
    # fixed hashsalt: the SVG writer otherwise salts element ids per render
    with matplotlib.rc_context({"svg.hashsalt": "qembed-plots"}):
        fig.savefig(buf, format=fmt, dpi=_DPI, **_FORMAT_OPTS[fmt])
    spec.out.parent.mkdir(parents=True, exist_ok=True)
    spec.out.write_bytes(buf.getvalue())
    return spec.out


def build(spec: PlotSpec) -> Figure:
    """Everything render does except writing the file. Exposed for tests."""
    if spec.kind == "band-curve":
        return _build_band(spec)
    if spec.kind == "multi-panel":
        return _build_panels(spec)
    if spec.kind == "contour":
        return _build_contour(spec)
    return _build_table(spec)


# ------------------------------------------------------------------ curves

def _overlay_for(spec, i):
    if i < len(spec.overlays):
        return read_sweep(spec.overlays[i])
    return None


def _draw_band(ax, table, overlay):
    ax.fill_between(
        table.y,
        table.mean - _BAND_SIGMAS * table.std,
        table.mean + _BAND_SIGMAS * table.std,
        alpha=0.3,
        linewidth=0,
        label=f"mean ± {_BAND_SIGMAS:g} std",
    )
    ax.plot(table.y, table.mean, linewidth=1.4, label="simulated mean")
    if overlay is not None:
        ax.plot(
            overlay.y, overlay.mean, "k--", linewidth=1.1, label="exact curve"
        )
    ax.margins(x=0)
    ax.grid(True, alpha=0.25)


def _build_band(spec):
    if len(spec.inputs) != 1:
        raise ArtifactError(spec.inputs[1], "band-curve takes exactly one sweep CSV")
    table = read_sweep(spec.inputs[0])
    overlay = _overlay_for(spec, 0)
    fig = Figure(figsize=(6.4, 4.2))
    ax = fig.subplots()
    _draw_band(ax, table, overlay)
    ax.set_xlabel(spec.xlabel or "target")
    ax.set_ylabel(spec.ylabel or "mean")
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    return fig


def _build_panels(spec):
    tables = [read_sweep(p) for p in spec.inputs]
    overlays = [_overlay_for(spec, i) for i in range(len(tables))]
    n = len(tables)
    ncols = min(3, n)
    nrows = math.ceil(n / ncols)
    fig = Figure(figsize=(3.4 * ncols, 2.9 * nrows))
    axes = fig.subplots(nrows, ncols, sharex=True, sharey=True, squeeze=False)
    for i, (table, overlay) in enumerate(zip(tables, overlays)):
        ax = axes[i // ncols][i % ncols]
        _draw_band(ax, table, overlay)
        ax.set_title(table.label, fontsize=9)
    for j in range(n, nrows * ncols):
        axes[j // ncols][j % ncols].set_visible(False)
    if spec.xlabel:
        for ax in axes[-1]:
            ax.set_xlabel(spec.xlabel)
    if spec.ylabel:
        for row in axes:
            row[0].set_ylabel(spec.ylabel)
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    return fig


# ----------------------------------------------------------------- contour

def _build_contour(spec):
    tables = [read_slice(p) for p in spec.inputs]
    n = len(tables)
    ncols = 2 if n > 1 else 1
    nrows = math.ceil(n / ncols)
    fig = Figure(figsize=(4.6 * ncols, 3.8 * nrows))
    axes = fig.subplots(nrows, ncols, squeeze=False)
    for i, table in enumerate(tables):
        ax = axes[i // ncols][i % ncols]
        cs = ax.contourf(table.xs, table.ys, table.mean, levels=24, cmap="viridis")
        fig.colorbar(cs, ax=ax)
        ax.set_xlabel(table.xname.upper())
        ax.set_ylabel(table.yname.upper())
    for j in range(n, nrows * ncols):
        axes[j // ncols][j % ncols].set_visible(False)
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    return fig


# ------------------------------------------------------------------- table

_COLUMNS = (
    ("best", "best", "{:.4f}"),
    ("avg", "avg", "{:.4f}"),
    ("std", "std", "{:.4f}"),
    ("avg_evals", "avg evals", "{:.1f}"),
    ("n_runs", "runs", "{:d}"),
    ("budget", "budget", "{:d}"),
)


def _build_table(spec):
    if len(spec.inputs) != 1:
        raise ArtifactError(spec.inputs[1], "table takes exactly one summary JSON")
    methods = read_campaign(spec.inputs[0])
    cells = [
        [fmt.format(row[key]) for key, _, fmt in _COLUMNS]
        for row in methods.values()
    ]
    fig = Figure(figsize=(1.6 + 1.1 * len(_COLUMNS), 0.6 + 0.4 * len(methods)))
    ax = fig.subplots()
    ax.axis("off")
    tab = ax.table(
        cellText=cells,
        rowLabels=list(methods),
        colLabels=[label for _, label, _ in _COLUMNS],
        loc="center",
    )
    tab.auto_set_font_size(False)
    tab.set_fontsize(9)
    tab.scale(1.0, 1.3)
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    return fig
