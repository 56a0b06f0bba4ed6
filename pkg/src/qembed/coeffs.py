"""Stochastic interpolation coefficients over integer parameter lattices.

A continuous target y inside an integer domain [lo, hi] is represented
by a small stencil of neighboring lattice points and one probability
weight per stencil point.  The weights sum to one, collapse to a unit
mass when y is itself an integer, and vary continuously in y.  Drawing
a fresh lattice value from the weights every simulation slot makes
long-run averages interpolate between the integer-parameter systems.

The weight template is controlled by a stencil half width N, a spread
exponent r > 0 and a skew exponent s != 0.  For s=1, r=1 the weight of
stencil point k is the normalized product of distances from y to the
other stencil points.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

#: Targets closer than this to an integer are treated as exactly on the
#: lattice.  Prevents spurious wide stencils from floating-point drift.
LATTICE_SNAP = 1e-9


class DomainError(ValueError):
    """A continuous target lies outside its parameter domain."""


def _snap(y: float):
    """Return the lattice point y rounds to, or None if y is not on it."""
    k = round(y)
    if abs(y - k) <= LATTICE_SNAP:
        return int(k)
    return None


@dataclass(frozen=True)
class DiscreteDomain:
    """Consecutive integer range {lo, ..., hi} of a system parameter."""

    lo: int
    hi: int

    def __post_init__(self):
        if int(self.lo) != self.lo or int(self.hi) != self.hi:
            raise ValueError("domain bounds must be integers")
        if self.lo > self.hi:
            raise ValueError(f"empty domain [{self.lo}, {self.hi}]")

    def check(self, y: float) -> None:
        if not (self.lo - LATTICE_SNAP <= y <= self.hi + LATTICE_SNAP):
            raise DomainError(f"target {y} outside [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class CoeffTemplate:
    """Weight-template settings: stencil half width, spread r, skew s."""

    half_width: int = 1
    spread: float = 1.0
    skew: float = 1.0

    def __post_init__(self):
        if self.half_width < 1:
            raise ValueError("half_width must be >= 1")
        if not self.spread > 0:
            raise ValueError("spread must be > 0")
        if self.skew == 0:
            raise ValueError("skew must be nonzero")


@dataclass(frozen=True)
class CoeffVector:
    """Stencil points and their probabilities, aligned by position."""

    support: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.support) != len(self.weights):
            raise ValueError("support/weights length mismatch")
        if any(w < 0.0 or w > 1.0 for w in self.weights):
            raise ValueError("weights must lie in [0, 1]")
        if abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.weights))


def stencil(y: float, domain: DiscreteDomain, half_width: int) -> tuple:
    """Lattice points eligible to represent target y.

    An integer target (within the snap tolerance) maps to itself.  A
    fractional target maps to the up-to-2N consecutive integers centered
    on its cell, truncated by intersection with the domain so boundary
    integers keep their exact unit mass.
    """
    domain.check(y)
    k = _snap(y)
    if k is not None:
        return (int(min(max(k, domain.lo), domain.hi)),)
    lo = math.floor(y) - half_width + 1
    hi = math.ceil(y) + half_width - 1
    return tuple(range(max(lo, domain.lo), min(hi, domain.hi) + 1))


def coeff_l(k: int, y: float, stencil_pts, s: float, r: float) -> float:
    """Unnormalized weight of stencil point k for target y.

    Product over the other stencil points j of |(y-m+1)^s - (j-m+1)^s|^r
    with m the smallest stencil point.  For s=1 the shift cancels and
    the plain distance product is used, which is also the exact
    reduction of the template.
    """
    pts = tuple(stencil_pts)
    if k not in pts:
        raise ValueError(f"{k} not in stencil {pts}")
    m = min(pts)
    if s == 1.0:
        out = 1.0
        for j in pts:
            if j != k:
                out *= abs(y - j) ** r
        return out
    base = y - m + 1.0
    assert base >= 1.0 - 1e-12, "stencil shift must keep bases >= 1"
    ys = base ** s
    out = 1.0
    for j in pts:
        if j != k:
            out *= abs(ys - float(j - m + 1) ** s) ** r
    return out


def alphas(y: float, domain: DiscreteDomain, template: CoeffTemplate) -> CoeffVector:
    """Probability weights of the stencil points for target y."""
    pts = stencil(y, domain, template.half_width)
    if len(pts) == 1:
        return CoeffVector(pts, (1.0,))
    raw = [coeff_l(k, y, pts, template.skew, template.spread) for k in pts]
    total = math.fsum(raw)
    if not total > 0.0:
        # Distinct stencil points cannot all produce zero weight.
        raise ArithmeticError(f"degenerate weight normalization at y={y}")
    return CoeffVector(pts, tuple(v / total for v in raw))


@dataclass(frozen=True)
class RandomizedParam:
    """A parameter held at continuous target y via per-slot lattice draws.

    The weight vector is computed once at construction; per-slot work is
    a single uniform draw and a scan over at most 2N weights.
    """

    domain: DiscreteDomain
    target: float
    template: CoeffTemplate
    cached: CoeffVector = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "cached", alphas(self.target, self.domain, self.template)
        )

    @property
    def is_lattice(self) -> bool:
        return len(self.cached.support) == 1

    def retarget(self, y: float) -> "RandomizedParam":
        return RandomizedParam(self.domain, y, self.template)


def sample_gamma(param: RandomizedParam, rng) -> int:
    """Draw this slot's lattice value for the parameter.

    Consumes exactly one uniform draw when the support has more than one
    point and none when the target sits on the lattice, so integer
    targets add zero per-slot cost and leave the caller's random stream
    untouched.
    """
    support = param.cached.support
    if len(support) == 1:
        return support[0]
    u = rng.random()
    acc = 0.0
    for x, w in zip(support, param.cached.weights):
        acc += w
        if u < acc:
            return x
    return support[-1]


def beta_weights(targets) -> dict:
    """Joint probability of each lattice combination of the parameters.

    Keys are tuples with one lattice value per parameter (in input
    order); the probability is the product of the per-parameter weights.
    Degenerates to a single unit-mass entry when every target is on the
    lattice.
    """
    axes = [list(zip(p.cached.support, p.cached.weights)) for p in targets]
    out = {}
    for combo in itertools.product(*axes):
        point = tuple(x for x, _ in combo)
        weight = 1.0
        for _, w in combo:
            weight *= w
        out[point] = weight
    return out
