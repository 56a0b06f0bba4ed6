"""Exact stationary analysis of the slot queues.

Builds the finite Markov chain of each queue variant on a shared,
truncated state enumeration, forms the per-slot randomized mixture as a
convex combination of the per-lattice-value transition matrices, solves
pi P = pi by a direct linear solve (robust to periodic and transient
states), and evaluates long-run average metrics as pi . c with per-state
expected slot costs.  The chain rows are generated by the very same slot
resolvers the simulator executes, so both implementations encode one
convention.

Unbounded variants are finitized by a queue bound B: arrivals are
suppressed in states at the bound, and every solve is audited for tail
mass near the bound; the bound grows geometrically until the clipped
tail is negligible.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .queues import (
    CAPACITY_VARIANTS,
    SlotModel,
    _initial_core,
    _metric_for,
    _queue_of,
    outcome_distribution,
)

DEFAULT_TRUNCATION = 200

# audited ceiling on stationary mass within this margin of the bound
_TAIL_TOL = 1e-9
_TAIL_WINDOW = 10
_MAX_STATES = 20000

# index into the per-slot stats tuple (arrivals, blocked, departures, mid)
_STAT_INDEX = {"blocking_prob": 1, "throughput": 2, "avg_jobs": 3}


@dataclass(frozen=True, eq=False)
class ChainSpec:
    states: tuple
    matrix: np.ndarray
    truncation: int | None


@dataclass(frozen=True, eq=False)
class StationaryDist:
    pi: np.ndarray
    residual: float


@dataclass(frozen=True)
class OracleRow:
    y: float
    exact: float


def _lattice_values(model: SlotModel):
    param = model.randomized.get(model.axis)
    if param is None:
        return (model.fixed[model.axis],)
    return tuple(range(param.domain.lo, param.domain.hi + 1))


def _enumerate_states(model: SlotModel, B: int):
    """States reachable from empty under any lattice value of the axis.

    All per-value chains of one model share this enumeration, so states
    another parameter value can reach appear in every chain (transient
    where the active value cannot revisit them).
    """
    values = _lattice_values(model)
    no_arrival = _clipped(model)
    start = _initial_core(model)
    seen = {start}
    frontier = [start]
    while frontier:
        s = frontier.pop()
        for v in values:
            for nxt, _, _ in _branches(model, no_arrival, s, v, B):
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
    return tuple(sorted(seen))


def _branches(model: SlotModel, no_arrival: SlotModel, core, value, B):
    # Finitization: a state at the queue bound accepts no new arrival.
    if no_arrival is not None and _queue_of(model, core) >= B:
        return outcome_distribution(no_arrival, core, value)
    return outcome_distribution(model, core, value)


def _clipped(model: SlotModel):
    if model.variant in CAPACITY_VARIANTS:
        return None
    return dataclasses.replace(model, arrival_p=0.0)


def build_chain(model: SlotModel, value, truncation: int = DEFAULT_TRUNCATION):
    """One-slot transition matrix with the axis parameter held at value."""
    value = int(value)
    if value < 1:
        raise ValueError("lattice value must be a positive integer")
    if model.variant in CAPACITY_VARIANTS:
        ceiling = max(_lattice_values(model))
        if truncation < ceiling:
            raise ValueError(
                f"truncation {truncation} cannot hold capacity {ceiling}"
            )
    states = _enumerate_states(model, truncation)
    index = {s: i for i, s in enumerate(states)}
    no_arrival = _clipped(model)
    P = np.zeros((len(states), len(states)))
    for i, s in enumerate(states):
        for nxt, _, prob in _branches(model, no_arrival, s, value, truncation):
            P[i, index[nxt]] += prob
    return ChainSpec(states, P, truncation)


def mix_chains(chains, weights) -> ChainSpec:
    """Convex combination of per-lattice-value chains."""
    ws = list(weights.values()) if isinstance(weights, dict) else list(weights)
    if len(ws) != len(chains):
        raise ValueError("one weight per chain required")
    if abs(math.fsum(ws) - 1.0) > 1e-12:
        raise ValueError("mixture weights must sum to 1")
    base = chains[0]
    for c in chains[1:]:
        if c.states != base.states:
            raise ValueError("chains do not share a state enumeration")
    matrix = ws[0] * base.matrix
    for w, c in zip(ws[1:], chains[1:]):
        matrix = matrix + w * c.matrix
    return ChainSpec(base.states, matrix, base.truncation)


def closed_classes(chain: ChainSpec):
    """Strongly connected components with no outgoing edge, as index tuples."""
    adj = sp.csr_matrix(chain.matrix > 0)
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    closed = set(range(n_comp))
    coo = adj.tocoo()
    for i, j in zip(coo.row, coo.col):
        if labels[i] != labels[j]:
            closed.discard(labels[i])
    return [tuple(np.flatnonzero(labels == c)) for c in sorted(closed)]


def stationary(chain: ChainSpec) -> StationaryDist:
    """Solve pi P = pi, sum pi = 1 directly.

    Works for periodic chains and zeroes out transient states exactly.
    Requires exactly one closed communicating class.
    """
    P = np.asarray(chain.matrix, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("transition matrix must be square")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12 or P.min() < 0.0:
        raise ValueError("matrix rows must be probability distributions")
    classes = closed_classes(chain)
    if len(classes) != 1:
        raise ArithmeticError(
            f"{len(classes)} closed classes: stationary distribution not unique"
        )
    closed = classes[0]
    n = P.shape[0]
    A = P.T - np.eye(n)
    # replace one balance equation (inside the closed class) by sum = 1
    r = closed[0]
    A[r, :] = 1.0
    b = np.zeros(n)
    b[r] = 1.0
    pi = np.linalg.solve(A, b)
    mask = np.zeros(n, dtype=bool)
    mask[list(closed)] = True
    pi[~mask] = 0.0
    if pi.min() < -1e-10:
        raise ArithmeticError("solver returned significantly negative mass")
    pi[pi < 0.0] = 0.0
    pi /= pi.sum()
    residual = float(np.max(np.abs(pi @ P - pi)))
    if residual > 1e-10:
        raise ArithmeticError(f"stationary residual {residual:.3e} too large")
    return StationaryDist(pi, residual)


def cost_vector(model: SlotModel, chain: ChainSpec, weights, metric=None):
    """Per-state expected slot cost under the mixture weights.

    For each state the exact one-slot expectation of the metric's
    counter (blocked arrivals, departures, or mid-slot occupancy) is
    accumulated over lattice values and outcome branches.  Blocking is
    normalized by the offered rate so that pi . c is the blocked
    fraction of offered jobs.
    """
    metric = _metric_for(model, metric)
    k = _STAT_INDEX[metric]
    no_arrival = _clipped(model)
    B = chain.truncation
    c = np.zeros(len(chain.states))
    for key, w in weights.items():
        value = key[0] if isinstance(key, tuple) else key
        for i, s in enumerate(chain.states):
            for _, stats, prob in _branches(model, no_arrival, s, value, B):
                c[i] += w * prob * stats[k]
    if metric == "blocking_prob":
        p = model.arrival_p
        return c / p if p > 0.0 else np.zeros_like(c)
    return c


def exact_value(chain: ChainSpec, cost, dist: StationaryDist | None = None):
    """Long-run average cost pi . c."""
    cost = np.asarray(cost, dtype=float)
    if cost.shape != (len(chain.states),):
        raise ValueError("cost vector length must match the state count")
    if dist is None:
        dist = stationary(chain)
    return float(dist.pi @ cost)


class _Pipeline:
    """Chain cache plus the tail-audited solve for one model and metric."""

    def __init__(self, model, metric=None, truncation=DEFAULT_TRUNCATION):
        self.model = model
        self.metric = _metric_for(model, metric)
        self.truncation = truncation
        self._chains = {}
        self._queue_lens = None

    def _chain(self, value):
        if value not in self._chains:
            self._chains[value] = build_chain(self.model, value, self.truncation)
        return self._chains[value]

    def _weights_at(self, y):
        param = self.model.randomized.get(self.model.axis)
        if param is None:
            if y is not None:
                raise ValueError("model has no randomized axis to re-target")
            return {self.model.fixed[self.model.axis]: 1.0}
        if y is not None:
            param = param.retarget(float(y))
        vec = param.cached
        return dict(zip(vec.support, vec.weights))

    def _grow(self):
        new_B = math.ceil(self.truncation * 1.5)
        probe = len(_enumerate_states(self.model, new_B))
        if probe > _MAX_STATES:
            raise RuntimeError(
                f"queue bound {new_B} needs {probe} states; "
                "the configuration is too heavy-tailed to finitize"
            )
        self.truncation = new_B
        self._chains.clear()
        self._queue_lens = None

    def value_at(self, y=None):
        bounded = self.model.variant in CAPACITY_VARIANTS
        while True:
            w = self._weights_at(y)
            mixed = mix_chains([self._chain(v) for v in w], list(w.values()))
            dist = stationary(mixed)
            if bounded:
                # capacity caps the reachable queue; nothing is clipped
                return exact_value(
                    mixed, cost_vector(self.model, mixed, w, self.metric), dist
                )
            if self._queue_lens is None:
                self._queue_lens = np.array(
                    [_queue_of(self.model, s) for s in mixed.states]
                )
            tail = float(
                dist.pi[self._queue_lens >= self.truncation - _TAIL_WINDOW].sum()
            )
            if tail <= _TAIL_TOL:
                cost = cost_vector(self.model, mixed, w, self.metric)
                return exact_value(mixed, cost, dist)
            self._grow()


def oracle_value(model, y=None, metric=None, truncation=DEFAULT_TRUNCATION):
    """Exact metric value at target y (or at the model's own parameter)."""
    return _Pipeline(model, metric, truncation).value_at(y)


def interpolation_curve(model, grid, metric=None, truncation=DEFAULT_TRUNCATION):
    """Exact metric curve over continuous targets, one row per grid point."""
    param = model.randomized.get(model.axis)
    if param is None:
        raise ValueError("curve needs a randomized axis parameter")
    for y in grid:
        param.domain.check(float(y))
    pipe = _Pipeline(model, metric, truncation)
    return [OracleRow(float(y), pipe.value_at(float(y))) for y in grid]


def write_oracle_csv(path, rows) -> None:
    """Exact curves in the sweep-table layout so overlays line up.

    std is identically 0; the replication bookkeeping columns carry 0
    because no random stream was involved.
    """
    with open(path, "w") as fh:
        fh.write("y,mean,std,replications,horizon,seed0\n")
        for r in rows:
            fh.write(f"{r.y!r},{r.exact!r},0.0,0,0,0\n")
