"""Figure rendering for the experiment harness's CSV/JSON artifacts.

This package is read-only over artifacts: it never recomputes statistics
and never imports the simulation code, so the simulation suite stands
alone and the figures depend only on the files they are given.
"""

from .artifacts import ArtifactError, read_campaign, read_slice, read_sweep
from .render import KINDS, PlotSpec, build, render

__all__ = [
    "ArtifactError",
    "KINDS",
    "PlotSpec",
    "build",
    "read_campaign",
    "read_slice",
    "read_sweep",
    "render",
]
