"""Derivative-free optimizers over the continuous parameter box.

Three methods share one run-record shape: simultaneous-perturbation
stochastic approximation (continuous, and a variant whose evaluations
are restricted to the integer lattice) and a linear-approximation
trust-region method in the COBYLA family.  A campaign runner repeats a
method from a shared set of random starts with pre-assigned seed
streams and aggregates the results.

Every objective call hits a point inside the box; the discrete SPSA
variant additionally rounds each probe to the lattice.  Run records
report the final continuous point, its rounding (half-integer ties can
be broken by a caller-supplied score), and the objective re-evaluated
at the rounded point; that closing evaluation is bookkept outside the
budget.  Wall times are carried in the records but excluded from
equality so that equal seeds mean equal results.
"""

import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned search region with per-dimension bounds."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lo and hi must be nonempty and the same length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("each lo must be strictly below its hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return len(self.lo)

    def clip(self, x):
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def contains(self, x, tol=1e-12):
        x = np.asarray(x, dtype=float)
        return bool(
            x.shape == (self.dim,)
            and (x >= np.array(self.lo) - tol).all()
            and (x <= np.array(self.hi) + tol).all()
        )


def initial_points(n, box, seed=None):
    """n uniform starts in the box; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    lo = np.array(box.lo)
    hi = np.array(box.hi)
    return lo + rng.random((n, box.dim)) * (hi - lo)


def round_to_lattice(x, tie_break=None):
    """Nearest integer point, with a pluggable rule for half-integers.

    Coordinates ending in exactly .5 round up by default; when
    `tie_break` is given, every combination of the tied coordinates'
    two neighbors is scored on the full point and the lowest score
    wins (ties on the score fall back to the lexicographically
    smallest point, keeping the result deterministic).
    """
    options = []
    for v in x:
        v = float(v)
        fl = math.floor(v)
        frac = v - fl
        if abs(frac - 0.5) <= 1e-9:
            options.append((fl, fl + 1))
        elif frac > 0.5:
            options.append((fl + 1,))
        else:
            options.append((fl,))
    if tie_break is None:
        return tuple(o[-1] for o in options)
    best = None
    for cand in itertools.product(*options):
        key = (tie_break(cand), cand)
        if best is None or key < best:
            best = key
    return best[1]


@dataclass(frozen=True)
class RunRecord:
    """One optimization run; `seconds` is informational, not compared."""

    x0: tuple
    x_final: tuple
    x_rounded: tuple
    f_rounded: float
    evals: int
    seconds: float = field(compare=False)
    diag: dict = field(default_factory=dict)


def gradient_estimate(f, x, c, delta, box, project=None):
    """Two-sided simultaneous-perturbation gradient estimate.

    Probes x +- c*delta are clipped into the box (and optionally
    projected, e.g. onto the lattice) before evaluation; the divisor
    stays the nominal 2*c*delta so the estimator is the standard one
    away from the boundary.
    """
    x = np.asarray(x, dtype=float)
    delta = np.asarray(delta, dtype=float)
    up = box.clip(x + c * delta)
    dn = box.clip(x - c * delta)
    if project is not None:
        up = project(up)
        dn = project(dn)
    return (f(up) - f(dn)) / (2.0 * c * delta)


@dataclass(frozen=True)
class SpsaConfig:
    """Gain schedules a/(k+1+A)^alpha and c/(k+1)^gamma plus a budget.

    `a=None` self-calibrates from the first gradient estimate so the
    first step has sup-norm 0.5; `stability=None` uses A = 0.1*budget.
    `mode="integer"` rounds every probe to the lattice before
    evaluating it.
    """

    budget: int
    a: float = None
    c: float = 1.0
    alpha: float = 0.602
    gamma: float = 0.101
    stability: float = None
    mode: str = "continuous"

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if self.a is not None and self.a <= 0:
            raise ValueError("a must be positive")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if not 0.0 < self.gamma < self.alpha <= 1.0:
            raise ValueError(
                f"need 0 < gamma < alpha <= 1, got gamma={self.gamma} alpha={self.alpha}"
            )
        if self.stability is not None and self.stability < 0:
            raise ValueError("stability must be nonnegative")
        if self.mode not in ("continuous", "integer"):
            raise ValueError(f"unknown mode {self.mode!r}")


def _finish(f, x0, x, evals, t0, tie_break, diag):
    xr = round_to_lattice(x, tie_break)
    fr = float(f(np.asarray(xr, dtype=float)))
    return RunRecord(
        x0=tuple(float(v) for v in x0),
        x_final=tuple(float(v) for v in x),
        x_rounded=tuple(int(v) for v in xr),
        f_rounded=fr,
        evals=evals,
        seconds=time.perf_counter() - t0,
        diag=diag,
    )


def spsa(f, x0, box, cfg, rng=None, tie_break=None):
    """Minimize f over the box by simultaneous perturbation.

    Each iteration spends two evaluations at x +- c_k*delta with
    Rademacher delta, updates x_{k+1} = clip(x_k - a_k * g_hat), and
    stops when another iteration would exceed the budget.  The final
    iterate (not a best-so-far) is rounded and re-evaluated for the
    record, mirroring how a noisy objective is actually deployed.
    """
    x0 = np.asarray(x0, dtype=float)
    if not box.contains(x0):
        raise ValueError(f"x0 {tuple(x0)} is outside the box")
    t0 = time.perf_counter()
    rng = np.random.default_rng(rng)
    big_a = cfg.stability if cfg.stability is not None else 0.1 * cfg.budget
    a = cfg.a
    project = None
    if cfg.mode == "integer":
        project = lambda p: np.asarray(round_to_lattice(p), dtype=float)
    x = x0.copy()
    evals = 0
    k = 0
    while evals + 2 <= cfg.budget:
        ck = cfg.c / (k + 1) ** cfg.gamma
        delta = rng.integers(0, 2, size=box.dim) * 2 - 1
        g = gradient_estimate(f, x, ck, delta, box, project=project)
        evals += 2
        if a is None:
            gmax = float(np.max(np.abs(g)))
            # first-step calibration: ||a_0 * g_0||_inf = 0.5
            a = 0.5 * (big_a + 1.0) ** cfg.alpha / gmax if gmax > 0 else 1.0
        x = box.clip(x - (a / (k + 1 + big_a) ** cfg.alpha) * g)
        k += 1
    diag = {"mode": cfg.mode, "a": a, "iterations": k}
    return _finish(f, x0, x, evals, t0, tie_break, diag)


@dataclass(frozen=True)
class TrustRegionConfig:
    budget: int
    rho_beg: float = 5.0
    rho_end: float = 0.1

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if not self.rho_beg > self.rho_end > 0:
            raise ValueError(
                f"need rho_beg > rho_end > 0, got {self.rho_beg}, {self.rho_end}"
            )


def cobyla_style(f, x0, box, cfg, rng=None, tie_break=None):
    """Linear-approximation trust-region minimization of f over the box.

    Keeps an (n+1)-vertex simplex, fits the linear interpolant through
    the vertex values, and steps from the best vertex to the model
    minimizer within radius rho (projected into the box).  A step that
    fails to beat the best vertex halves rho and rebuilds an
    axis-aligned simplex at the new scale around the best point; the
    same rebuild repairs a degenerate simplex.  Terminates when rho
    falls below rho_end or the budget runs out, returning the best
    point evaluated.  Deterministic; `rng` is accepted only for
    interface symmetry with `spsa`.
    """
    x0 = np.asarray(x0, dtype=float)
    if not box.contains(x0):
        raise ValueError(f"x0 {tuple(x0)} is outside the box")
    t0 = time.perf_counter()
    n = box.dim
    evals = 0
    best = {"x": x0.copy(), "y": math.inf}

    def ev(p):
        nonlocal evals
        y = float(f(p))
        evals += 1
        if y < best["y"]:
            best["x"], best["y"] = p.copy(), y
        return y

    def axis_vertex(center, i, r):
        # step outward along axis i, flipping direction at the wall
        v = center.copy()
        v[i] = v[i] + r if v[i] + r <= box.hi[i] + 1e-12 else v[i] - r
        return box.clip(v)

    def build_simplex(center, base_val, r):
        verts, vals = [center.copy()], [base_val]
        for i in range(n):
            if evals >= cfg.budget:
                break
            v = axis_vertex(center, i, r)
            verts.append(v)
            vals.append(ev(v))
        return verts, vals

    rho = cfg.rho_beg
    rho_trace = [rho]
    rebuilds = 0
    verts, vals = build_simplex(x0, ev(x0), rho) if cfg.budget else ([], [])
    while evals < cfg.budget and len(verts) == n + 1:
        b = int(np.argmin(vals))
        D = np.array([verts[i] - verts[b] for i in range(n + 1) if i != b])
        r = np.array([vals[i] - vals[b] for i in range(n + 1) if i != b])
        g = None
        try:
            if np.isfinite(np.linalg.cond(D)) and np.linalg.cond(D) < 1e10:
                g = np.linalg.solve(D, r)
        except np.linalg.LinAlgError:
            g = None
        if g is None:
            rebuilds += 1
            verts, vals = build_simplex(verts[b], vals[b], rho)
            continue
        gn = float(np.linalg.norm(g))
        cand = box.clip(verts[b] - (rho / gn) * g) if gn > 0 else verts[b]
        improved = False
        if float(np.max(np.abs(cand - verts[b]))) > 1e-12 and evals < cfg.budget:
            yc = ev(cand)
            w = int(np.argmax(vals))
            if yc < vals[w] and w != b:
                verts[w], vals[w] = cand, yc
            improved = yc < vals[b]
        if not improved:
            rho *= 0.5
            rho_trace.append(rho)
            if rho < cfg.rho_end:
                break
            rebuilds += 1
            bb = int(np.argmin(vals))
            verts, vals = build_simplex(verts[bb], vals[bb], rho)
    diag = {"rho_final": rho, "rho_trace": rho_trace, "rebuilds": rebuilds}
    return _finish(f, x0, best["x"], evals, t0, tie_break, diag)


@dataclass(frozen=True)
class CampaignResult:
    """Aggregate over repeated runs; timing excluded from equality."""

    method: str
    n_runs: int
    budget: int
    records: tuple
    best: float
    avg: float
    std: float
    avg_evals: float
    avg_seconds: float = field(compare=False)


_METHODS = ("spsa", "spsa-discrete", "cobyla")


def campaign(method, objective, n_runs=100, budget=1000, seed=None, x0s=None,
             box=None, tie_break=None, spsa_cfg=None, tr_cfg=None):
    """Run `method` from `n_runs` shared random starts and aggregate.

    `objective(x, seed) -> float` must be deterministic given the seed;
    each run owns a spawned seed stream that feeds both the method's
    internal randomness and the per-evaluation simulation seeds, so a
    campaign is reproducible end to end.  The start set depends only on
    `seed` (or an explicit `x0s`), never on the method, which makes
    starts comparable across methods.  Aggregates summarize the
    objective re-evaluated at each run's rounded point.
    """
    if method not in _METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {_METHODS}")
    if box is None:
        box = Box((1.0,) * 7, (10.0,) * 7)
    pts_ss, runs_ss = np.random.SeedSequence(seed).spawn(2)
    if x0s is None:
        x0s = initial_points(n_runs, box, pts_ss)
    x0s = np.asarray(x0s, dtype=float)
    if x0s.shape != (n_runs, box.dim):
        raise ValueError(f"x0s must have shape {(n_runs, box.dim)}, got {x0s.shape}")
    records = []
    for child, x0 in zip(runs_ss.spawn(n_runs), x0s):
        run_rng = np.random.default_rng(child)

        def noisy(x, _rng=run_rng):
            return float(objective(x, int(_rng.integers(0, 2 ** 63))))

        if method == "cobyla":
            cfg = tr_cfg if tr_cfg is not None else TrustRegionConfig(budget=budget)
            rec = cobyla_style(noisy, x0, box, cfg, rng=run_rng, tie_break=tie_break)
        else:
            mode = "integer" if method == "spsa-discrete" else "continuous"
            cfg = spsa_cfg if spsa_cfg is not None else SpsaConfig(budget=budget, mode=mode)
            rec = spsa(noisy, x0, box, cfg, rng=run_rng, tie_break=tie_break)
        records.append(rec)
    vals = [r.f_rounded for r in records]
    return CampaignResult(
        method=method,
        n_runs=n_runs,
        budget=budget,
        records=tuple(records),
        best=float(min(vals)),
        avg=float(np.mean(vals)),
        std=float(np.std(vals, ddof=1)) if n_runs > 1 else 0.0,
        avg_evals=float(np.mean([r.evals for r in records])),
        avg_seconds=float(np.mean([r.seconds for r in records])),
    )


def summary_dict(result):
    return {
        "method": result.method,
        "n_runs": result.n_runs,
        "budget": result.budget,
        "best": result.best,
        "avg": result.avg,
        "std": result.std,
        "avg_evals": result.avg_evals,
        "avg_seconds": result.avg_seconds,
    }


def write_records_jsonl(path, result):
    with open(path, "w") as fh:
        for rec in result.records:
            fh.write(json.dumps(asdict(rec)) + "\n")


def write_summary_json(path, result):
    with open(path, "w") as fh:
        json.dump(summary_dict(result), fh, indent=2)
        fh.write("\n")
