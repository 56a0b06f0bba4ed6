"""Slot-accurate discrete-time queues with per-slot parameter draws.

Within one slot the order is fixed: draw the slot's parameter value,
then the arrival, then service progress, with departures at the slot
end.  The queue length S_t is read at the end of the slot and drives
admission in the next slot (admit iff S_{t-1} < C_t).  An arriving job
may receive service in its arrival slot; a deterministic server that
completes at the end of slot t starts its next job in slot t+1.

Five variants share this skeleton:

  gg1c  capacity C, one geometric server (success prob q)
  gd1c  capacity C, one deterministic server (T slots)
  ggk   no capacity, K geometric servers behind one dispatcher
  gdk   no capacity, K deterministic servers (T slots)
  gd1t  no capacity, one deterministic server, T is the drawn parameter

The ``_resolve_*`` functions below are the single source of truth for
the slot semantics; the simulator feeds them realized draws and the
exact-chain builder feeds them every draw combination with its
probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coeffs import DomainError, RandomizedParam, sample_gamma

VARIANT_AXIS = {"gg1c": "C", "gd1c": "C", "ggk": "K", "gdk": "K", "gd1t": "T"}

#: variants whose embedded axis is a capacity (admission control applies)
CAPACITY_VARIANTS = ("gg1c", "gd1c")


@dataclass(frozen=True)
class SlotModel:
    """One queue variant plus its parameter sources.

    The embedded axis parameter (C, K or T depending on the variant)
    must appear in exactly one of ``randomized`` / ``fixed``; the other
    service constant (q or T) is a plain field.
    """

    variant: str
    arrival_p: float
    q: float | None = None
    T: int | None = None
    randomized: dict = field(default_factory=dict)
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANT_AXIS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not 0.0 <= self.arrival_p <= 1.0:
            raise ValueError("arrival_p must lie in [0, 1]")
        if self.variant in ("gg1c", "ggk"):
            if self.q is None or not 0.0 <= self.q <= 1.0:
                raise ValueError("geometric service needs q in [0, 1]")
            if self.T is not None:
                raise ValueError("T is not a parameter of this variant")
        elif self.variant in ("gd1c", "gdk"):
            if self.T is None or int(self.T) != self.T or self.T < 1:
                raise ValueError("deterministic service needs integer T >= 1")
            if self.q is not None:
                raise ValueError("q is not a parameter of this variant")
        else:  # gd1t: T is the embedded axis, no extra service constant
            if self.q is not None or self.T is not None:
                raise ValueError("gd1t takes its T through randomized/fixed")
        axis = self.axis
        sources = (axis in self.randomized) + (axis in self.fixed)
        if sources != 1:
            raise ValueError(f"parameter {axis!r} needs exactly one source")
        for name in (*self.randomized, *self.fixed):
            if name != axis:
                raise ValueError(f"unknown parameter {name!r} for {self.variant}")
        if axis in self.fixed:
            val = self.fixed[axis]
            if int(val) != val or val < 1:
                raise ValueError(f"fixed {axis} must be an integer >= 1")

    @property
    def axis(self) -> str:
        return VARIANT_AXIS[self.variant]

    def with_target(self, y: float) -> "SlotModel":
        """Same model with the embedded axis re-targeted to y."""
        param = self.randomized.get(self.axis)
        if param is None:
            raise ValueError("model has no randomized axis to re-target")
        return SlotModel(
            self.variant,
            self.arrival_p,
            q=self.q,
            T=self.T,
            randomized={self.axis: param.retarget(y)},
        )


@dataclass(frozen=True)
class SlotState:
    t: int
    queue_len: int
    in_service: tuple
    inst_params: dict


@dataclass(frozen=True)
class RunMetrics:
    slots: int
    offered: int
    blocked: int
    departures: int
    area: int
    blocking_prob: float
    avg_jobs: float
    throughput: float
    end_queue_len: int

    @property
    def entered(self) -> int:
        return self.offered - self.blocked


def initial_state(model: SlotModel) -> SlotState:
    return SlotState(0, 0, (), {})


# --------------------------------------------------------------- semantics
#
# Each resolver maps (pre-slot state, slot parameter, realized draws) to
# (post-slot state, (arrivals, blocked, departures, mid_occupancy)).
# Mid occupancy counts the jobs present after admission and before the
# slot-end departures; its time average is the jobs-in-system metric.

def _resolve_gg1c(S, C, a, srv):
    adm = 1 if (a and S < C) else 0
    M = S + adm
    d = srv if M >= 1 else 0
    return M - d, (a, a - adm, d, M)


def _resolve_gd1(S, e, C, T, a):
    # Single deterministic server; C is None for an unbounded queue.
    # e is the in-service job's completed slots at the previous slot end.
    adm = 1 if (a and (C is None or S < C)) else 0
    M = S + adm
    if e > 0:
        es = e + 1
    elif M >= 1:
        es = 1
    else:
        es = 0
    if es >= T and es >= 1:
        return (M - 1, 0), (a, a - adm, 1, M)
    return (M, es), (a, a - adm, 0, M)


def _resolve_ggk(S, v, K, a, d):
    # d geometric completions among the jobs in service after assignment.
    M = S + a
    va = v if v >= K else (M if M < K else K)
    return (M - d, va - d), (a, 0, d, M)


def _assigned_ggk(S, v, K, a):
    M = S + a
    return v if v >= K else (M if M < K else K)


def _resolve_gdk(S, counts, K, T, a):
    # counts[e-1] is the number of in-service jobs with e completed
    # slots at the previous slot end (e in 1..T-1).
    M = S + a
    busy = sum(counts)
    free = K - busy
    if free < 0:
        free = 0
    waiting = M - busy
    n_new = waiting if waiting < free else free
    if T == 1:
        return (M - n_new, counts), (a, 0, n_new, M)
    d = counts[T - 2]
    return (M - d, (n_new,) + counts[: T - 2]), (a, 0, d, M)


def _make_stepper(model: SlotModel):
    """Bind a variant-specific slot function (core, inst, rng) -> result."""
    p = model.arrival_p
    variant = model.variant
    if variant == "gg1c":
        q = model.q

        def run(core, C, rng):
            a = 1 if rng.random() < p else 0
            M = core + (1 if (a and core < C) else 0)
            srv = (1 if rng.random() < q else 0) if M >= 1 else 0
            return _resolve_gg1c(core, C, a, srv)

    elif variant == "gd1c":
        T = model.T

        def run(core, C, rng):
            a = 1 if rng.random() < p else 0
            return _resolve_gd1(core[0], core[1], C, T, a)

    elif variant == "gd1t":

        def run(core, T, rng):
            a = 1 if rng.random() < p else 0
            return _resolve_gd1(core[0], core[1], None, T, a)

    elif variant == "ggk":
        q = model.q

        def run(core, K, rng):
            a = 1 if rng.random() < p else 0
            va = _assigned_ggk(core[0], core[1], K, a)
            d = int(rng.binomial(va, q)) if va >= 1 else 0
            return _resolve_ggk(core[0], core[1], K, a, d)

    else:  # gdk
        T = model.T

        def run(core, K, rng):
            a = 1 if rng.random() < p else 0
            return _resolve_gdk(core[0], core[1], K, T, a)

    return run


def _initial_core(model: SlotModel):
    v = model.variant
    if v == "gg1c":
        return 0
    if v in ("gd1c", "gd1t"):
        return (0, 0)
    if v == "ggk":
        return (0, 0)
    return (0, (0,) * (model.T - 1))


def _core_from_state(model: SlotModel, state: SlotState):
    v = model.variant
    S = state.queue_len
    if v == "gg1c":
        return S
    if v in ("gd1c", "gd1t"):
        return (S, state.in_service[0] if state.in_service else 0)
    if v == "ggk":
        return (S, len(state.in_service))
    counts = [0] * (model.T - 1)
    for e in state.in_service:
        counts[e - 1] += 1
    return (S, tuple(counts))


def _service_view(model: SlotModel, core):
    v = model.variant
    if v == "gg1c":
        return ()
    if v in ("gd1c", "gd1t"):
        return (core[1],) if core[1] > 0 else ()
    if v == "ggk":
        return (0,) * core[1]
    out = []
    for e, n in enumerate(core[1], start=1):
        out.extend([e] * n)
    return tuple(out)


def _queue_of(model: SlotModel, core):
    return core if model.variant == "gg1c" else core[0]


def step(model: SlotModel, state: SlotState, rng) -> SlotState:
    """Advance one slot and return the new public state."""
    core = _core_from_state(model, state)
    axis = model.axis
    param = model.randomized.get(axis)
    inst = sample_gamma(param, rng) if param is not None else model.fixed[axis]
    run = _make_stepper(model)
    core, _ = run(core, inst, rng)
    return SlotState(
        state.t + 1, _queue_of(model, core), _service_view(model, core), {axis: inst}
    )


def simulate(model: SlotModel, horizon: int, warmup: int = 0, seed=None) -> RunMetrics:
    """Run warmup+horizon slots from empty; accumulate after warmup."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if warmup < 0:
        raise ValueError("warmup must be >= 0")
    rng = np.random.default_rng(seed)
    axis = model.axis
    param = model.randomized.get(axis)
    fixed_val = model.fixed.get(axis)
    run = _make_stepper(model)
    core = _initial_core(model)
    offered = blocked = departures = area = 0
    for t in range(warmup + horizon):
        inst = sample_gamma(param, rng) if param is not None else fixed_val
        core, (a, b, d, M) = run(core, inst, rng)
        if t >= warmup:
            offered += a
            blocked += b
            departures += d
            area += M
    return RunMetrics(
        slots=horizon,
        offered=offered,
        blocked=blocked,
        departures=departures,
        area=area,
        blocking_prob=blocked / offered if offered else 0.0,
        avg_jobs=area / horizon,
        throughput=departures / horizon,
        end_queue_len=_queue_of(model, core),
    )


# ------------------------------------------------------------ enumeration

def outcome_distribution(model: SlotModel, core, inst):
    """All slot outcomes as (next core, slot stats, probability) triples.

    Feeds the exact-chain construction with the very same resolvers the
    simulator uses, with the slot's axis parameter held at ``inst``.
    Stats are the per-slot counters (arrivals, blocked, departures,
    mid-slot occupancy).  Zero-probability branches are dropped;
    duplicate (state, stats) branches are merged.
    """
    p = model.arrival_p
    arrivals = [(a, pa) for a, pa in ((1, p), (0, 1.0 - p)) if pa > 0.0]
    acc = {}

    def add(branch, prob):
        acc[branch] = acc.get(branch, 0.0) + prob

    variant = model.variant
    if variant == "gg1c":
        q = model.q
        for a, pa in arrivals:
            M = core + (1 if (a and core < inst) else 0)
            if M >= 1:
                for srv, ps in ((1, q), (0, 1.0 - q)):
                    if ps > 0.0:
                        add(_resolve_gg1c(core, inst, a, srv), pa * ps)
            else:
                add(_resolve_gg1c(core, inst, a, 0), pa)
    elif variant in ("gd1c", "gd1t"):
        C = inst if variant == "gd1c" else None
        T = model.T if variant == "gd1c" else inst
        for a, pa in arrivals:
            add(_resolve_gd1(core[0], core[1], C, T, a), pa)
    elif variant == "ggk":
        q = model.q
        for a, pa in arrivals:
            va = _assigned_ggk(core[0], core[1], inst, a)
            if va == 0:
                add(_resolve_ggk(core[0], core[1], inst, a, 0), pa)
                continue
            for d in range(va + 1):
                pd = math.comb(va, d) * q**d * (1.0 - q) ** (va - d)
                if pd > 0.0:
                    add(_resolve_ggk(core[0], core[1], inst, a, d), pa * pd)
    else:  # gdk
        for a, pa in arrivals:
            add(_resolve_gdk(core[0], core[1], inst, model.T, a), pa)
    return [(nxt, stats, prob) for (nxt, stats), prob in acc.items()]


# ------------------------------------------------------------------ sweep

@dataclass(frozen=True)
class SweepRow:
    y: float
    mean: float
    std: float
    replications: int
    horizon: int
    seed0: int


def default_metric(model: SlotModel) -> str:
    """Natural summary for the variant: loss for capacity queues, load else."""
    return "blocking_prob" if model.variant in CAPACITY_VARIANTS else "avg_jobs"


def _metric_for(model: SlotModel, metric):
    return metric if metric is not None else default_metric(model)


def sweep_point(model, y, replications, base_seed, horizon, warmup=0, metric=None):
    """One grid point of a sweep: replicated runs at target y."""
    metric = _metric_for(model, metric)
    target = model.with_target(float(y))
    vals = [
        getattr(simulate(target, horizon, warmup, base_seed + i), metric)
        for i in range(replications)
    ]
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return SweepRow(float(y), float(np.mean(vals)), std, replications, horizon, base_seed)


def sweep(model, axis, grid, replications, base_seed, horizon, warmup=0, metric=None):
    """Replicated simulations over a target grid; one row per point.

    Every grid point reuses the seed block base_seed..base_seed+n-1, so
    curves across grid points share their random streams.
    """
    if axis != model.axis:
        raise ValueError(f"{model.variant} embeds {model.axis!r}, not {axis!r}")
    param = model.randomized.get(model.axis)
    if param is None:
        raise ValueError("sweep needs a randomized axis parameter")
    for y in grid:
        param.domain.check(float(y))
    return [
        sweep_point(model, y, replications, base_seed, horizon, warmup, metric)
        for y in grid
    ]


def write_sweep_csv(path, rows) -> None:
    """Sweep/oracle table contract: full-precision CSV, one row per y."""
    with open(path, "w") as fh:
        fh.write("y,mean,std,replications,horizon,seed0\n")
        for r in rows:
            fh.write(
                f"{r.y!r},{r.mean!r},{r.std!r},{r.replications},{r.horizon},{r.seed0}\n"
            )
