"""Tests for the three-node network simulator.

Hand traces drive the slot loop through scripted uniforms and pin the
phase order (node 3, node 2, node 1, external arrivals), the committed
routing draw, stall-and-retry behavior, the fault draw at completion,
and the one-slot cooldown of a server that has just handed off a held
job.  Batch tests cover conservation, determinism, the lattice/fixed
equivalence, and the compiled kernel against its pure-Python twin.
"""

import math

import numpy as np
import pytest

from qembed.coeffs import CoeffTemplate, DiscreteDomain, DomainError, RandomizedParam
from qembed.network import (
    DEFAULT_TEMPLATES,
    MAX_COST,
    PARAM_DOMAIN,
    PARAM_ORDER,
    NetworkConfig,
    NetworkParams,
    _as_metrics,
    _kernel,
    _pick_value,
    _stream_next,
    _tables,
    cost,
    objective,
    overhead_params,
    simulate_network,
)


class ScriptRng:
    """Replays scripted uniforms for the structural draws.

    Parameter picks do not pass through here; they come from the
    side stream, whose values a test can predict via _stream_next.
    """

    def __init__(self, uniforms=()):
        self.uniforms = list(uniforms)

    def random(self):
        return self.uniforms.pop(0)


def _raw(params, horizon, rng, p=0.5, q2=0.1, pstate=0):
    # Pure-Python twin of the compiled kernel; accepts the script rng.
    # The stream arithmetic wraps on purpose, so silence the numpy
    # scalar overflow warning that the unjitted path would emit.
    sup, wgt, slen = _tables(params)
    with np.errstate(over="ignore"):
        return _kernel.py_func(
            sup, wgt, slen, horizon, p, q2, rng, np.uint64(pstate)
        )


def _run_scripted(params, horizon, uniforms, p=0.5, pstate=0):
    rng = ScriptRng(uniforms)
    m = _as_metrics(_raw(params, horizon, rng, p=p, pstate=pstate), horizon)
    assert not rng.uniforms, f"{len(rng.uniforms)} scripted draws left over"
    return m


def _stream_uniforms(pstate, count):
    state = pstate
    out = []
    for _ in range(count):
        state, u = _stream_next(np.uint64(state))
        out.append(u)
    return out


# ------------------------------------------------------------ hand traces

def test_trace_single_job_through_fast_path():
    # One arrival, served at node 1 in the next slot, routed to node 2
    # (u < 0.5), completed there one slot later on a lucky service draw.
    params = NetworkParams(2, 2, 2, 1, 1, 1, 1)
    m = _run_scripted(params, 3, [0.1, 0.3, 0.9, 0.05, 0.9])
    assert m.offered == 1 and m.lost == 0
    assert m.completed == 1 and m.faulty == 0
    assert m.stall_slots1 == 0 and m.stall_slots3 == 0
    assert (m.end_occ1, m.end_occ2, m.end_occ3) == (0, 0, 0)
    assert m.avg_occ1 == pytest.approx(1 / 3)
    assert m.avg_occ2 == pytest.approx(1 / 3)
    assert m.throughput == pytest.approx(1 / 3)


def test_trace_routing_stall_holds_until_space():
    # Second job routes to node 3 while the first is still in service
    # there (C3=1, T3=3): the node-1 server stalls two slots on its
    # committed destination, then delivers in the same slot node 3
    # frees space (node 3 is processed first).
    params = NetworkParams(3, 1, 1, 1, 3, 1, 1)
    m = _run_scripted(
        params, 6, [0.1, 0.7, 0.1, 0.7, 0.9, 0.9, 0.9, 0.9, 0.9]
    )
    assert m.offered == 2 and m.lost == 0
    assert m.completed == 1 and m.faulty == 0
    assert m.stall_slots1 == 2 and m.stall_slots3 == 0
    assert (m.end_occ1, m.end_occ2, m.end_occ3) == (0, 0, 1)
    assert m.avg_occ3 == pytest.approx(5 / 6)
    assert m.entered == m.completed + m.end_occ1 + m.end_occ2 + m.end_occ3


def test_trace_faulty_completion_recirculates():
    # T3=1 makes every node-3 completion faulty.  The faulty job finds
    # node 1 full (C1=1), stalls one slot, is delivered once node 1
    # drains, and is re-served as a fresh job.
    params = NetworkParams(1, 5, 5, 1, 1, 1, 1)
    m = _run_scripted(
        params, 4, [0.1, 0.7, 0.1, 0.2, 0.3, 0.9, 0.5, 0.6, 0.9]
    )
    assert m.offered == 2 and m.lost == 0
    assert m.completed == 0 and m.faulty == 1
    assert m.stall_slots1 == 0 and m.stall_slots3 == 1
    assert (m.end_occ1, m.end_occ2, m.end_occ3) == (0, 1, 1)
    assert m.avg_occ3 == pytest.approx(3 / 4)
    assert m.entered == 2


def test_trace_freed_server_waits_one_slot():
    # A node-3 server that delivers its held job counts against K3 for
    # the rest of the slot, so the waiting job is not assigned until
    # the next slot.  A same-slot assignment would consume a fault draw
    # one slot early and derail the script.
    params = NetworkParams(1, 5, 5, 1, 1, 1, 1)
    m = _run_scripted(
        params,
        5,
        [0.1, 0.7, 0.1, 0.2, 0.7, 0.9, 0.2, 0.9, 0.3, 0.05, 0.6, 0.9],
    )
    assert m.offered == 2 and m.lost == 0
    assert m.completed == 1 and m.faulty == 2
    assert m.stall_slots3 == 1 and m.stall_slots1 == 0
    assert (m.end_occ1, m.end_occ2, m.end_occ3) == (0, 0, 1)


def test_trace_capacity_redrawn_each_slot():
    # C1 randomized at 1.5 with flat weights: the admission decision
    # tracks the per-slot pick, which precedes all node phases and the
    # arrival draw.  The picks are replayed from the side stream, the
    # admission outcome folded by hand, and the two must agree.
    c1 = RandomizedParam(PARAM_DOMAIN, 1.5, CoeffTemplate(1, 1.0, 1.0))
    params = NetworkParams(c1, 10, 10, 9, 10, 10, 10)
    horizon = 8
    picks = [1 if u < 0.5 else 2 for u in _stream_uniforms(7, horizon)]
    assert len(set(picks)) == 2, "seed must exercise both capacity values"
    occ = lost = 0
    for c in picks:
        if occ < c:
            occ += 1
        else:
            lost += 1
    m = _run_scripted(params, horizon, [0.0] * horizon, p=1.0, pstate=7)
    assert m.offered == horizon and m.lost == lost
    assert m.end_occ1 == occ and m.completed == 0


def test_trace_slot_draw_uses_coefficient_weights():
    # C1 at 2.5 under its default template puts mass 7/27 on 2, so the
    # pick threshold sits at 0.259...: a 0.25 uniform picks 2 and a
    # 0.26 uniform picks 3.  A wider row walks cumulative weights.
    c1 = RandomizedParam(PARAM_DOMAIN, 2.5, DEFAULT_TEMPLATES["C1"])
    assert c1.cached.support == (2, 3)
    assert c1.cached.weights == pytest.approx((7 / 27, 20 / 27), abs=1e-12)
    sup, wgt, slen = _tables(NetworkParams(c1, 10, 10, 9, 10, 10, 10))
    assert slen[0] == 2
    assert _pick_value(sup, wgt, 0, 2, 0.25) == 2
    assert _pick_value(sup, wgt, 0, 2, 0.26) == 3
    sup3 = np.array([[4, 5, 6]], dtype=np.int64)
    wgt3 = np.array([[0.2, 0.3, 0.5]])
    assert _pick_value(sup3, wgt3, 0, 3, 0.19) == 4
    assert _pick_value(sup3, wgt3, 0, 3, 0.20) == 5
    assert _pick_value(sup3, wgt3, 0, 3, 0.49) == 5
    assert _pick_value(sup3, wgt3, 0, 3, 0.999) == 6


def test_parameter_stream_is_deterministic_and_uniform():
    a = _stream_uniforms(123, 4000)
    assert a == _stream_uniforms(123, 4000)
    assert a != _stream_uniforms(124, 4000)
    assert all(0.0 <= u < 1.0 for u in a)
    assert abs(float(np.mean(a)) - 0.5) < 0.02


# ------------------------------------------------------------ kernel plumbing

def test_tables_layout():
    sup, wgt, slen = _tables(overhead_params(3))
    assert sup.dtype == np.int64 and slen.dtype == np.int64
    assert wgt.dtype == np.float64
    assert list(slen) == [2, 2, 2, 1, 1, 1, 1]
    assert list(sup[0, :2]) == [5, 6]
    assert wgt[0, :2].sum() == pytest.approx(1.0, abs=1e-12)
    for i in range(3, 7):
        assert sup[i, 0] == 5 and wgt[i, 0] == 1.0


def test_integer_point_needs_no_slot_draws():
    _, _, slen = _tables(NetworkParams.from_point((5,) * 7))
    assert list(slen) == [1] * 7


def test_kernel_matches_python_twin():
    params = NetworkParams.from_point((2.5, 3.0, 4.5, 1.5, 9.0, 2.5, 7.0))
    sup, wgt, slen = _tables(params)
    st = np.uint64(31)
    a = _kernel(sup, wgt, slen, 600, 0.5, 0.1, np.random.default_rng(99), st)
    with np.errstate(over="ignore"):
        b = _kernel.py_func(
            sup, wgt, slen, 600, 0.5, 0.1, np.random.default_rng(99), st
        )
    assert np.array_equal(a, b)


def test_lattice_targets_match_fixed_values():
    point = (2.0, 3.0, 4.0, 2.0, 9.0, 3.0, 6.0)
    randomized = NetworkParams.from_point(point)
    fixed = NetworkParams(2, 3, 4, 2, 9, 3, 6)
    a = simulate_network(randomized, 2500, seed=123)
    b = simulate_network(fixed, 2500, seed=123)
    assert a == b


def test_determinism_under_fixed_seed():
    params = overhead_params(7)
    a = simulate_network(params, 1500, seed=42)
    b = simulate_network(params, 1500, seed=42)
    c = simulate_network(params, 1500, seed=43)
    assert a == b
    assert a != c


# ------------------------------------------------------------ invariants

CONSERVATION_CASES = [
    (NetworkParams(10, 10, 10, 1, 10, 10, 10), 20000, 1),
    (overhead_params(7), 3000, 2),
    (NetworkParams(1, 1, 1, 1, 1, 1, 1), 2000, 3),
    (NetworkParams(3, 2, 2, 2, 3, 2, 2), 5000, 4),
    (NetworkParams.from_point((2.5, 3.5, 4.5, 1.5, 9.5, 2.5, 7.5)), 4000, 5),
]


@pytest.mark.parametrize("params,horizon,seed", CONSERVATION_CASES)
def test_conservation_and_bounds(params, horizon, seed):
    m = simulate_network(params, horizon, seed=seed)
    assert m.entered == m.offered - m.lost
    assert m.entered == m.completed + m.end_occ1 + m.end_occ2 + m.end_occ3
    assert 0 <= m.completed <= m.entered
    assert m.offered <= horizon
    assert 0.0 <= m.throughput <= 1.0
    assert 0.0 <= m.loss_prob <= 1.0
    assert min(m.avg_occ1, m.avg_occ2, m.avg_occ3) >= 0.0


def test_wide_open_network_throughput_tracks_offered_load():
    # Ample capacity everywhere and a fast first stage: nearly every
    # arrival is eventually served, so per-slot throughput sits near
    # the arrival rate.  The upper bound holds in expectation only, so
    # it is checked against the binomial noise of the arrival stream.
    m = simulate_network(NetworkParams(10, 10, 10, 1, 10, 10, 10), 20000, seed=7)
    sigma = math.sqrt(0.25 / 20000)
    assert m.throughput <= 0.5 + 4 * sigma
    assert m.throughput >= 0.40
    assert m.lost == 0


def test_stall_diagnostics_activate_under_tight_capacity():
    # C1=C3=1 with T3=1 (every completion faulty) keeps both stall
    # paths busy: node 1 stalls routing into the occupied node 3, and
    # node 3 stalls returning faulty jobs into the full node 1.
    m = simulate_network(NetworkParams(1, 8, 1, 1, 1, 1, 1), 400, seed=5)
    assert m.stall_slots1 > 0
    assert m.stall_slots3 > 0
    assert m.faulty > 0


def test_no_arrivals_means_no_flow():
    m = simulate_network(
        NetworkParams(5, 5, 5, 5, 5, 5, 5),
        50,
        seed=0,
        config=NetworkConfig(arrival_p=0.0),
    )
    assert m.offered == 0 and m.lost == 0 and m.completed == 0
    assert m.loss_prob == 0.0 and m.throughput == 0.0


# ------------------------------------------------------------ cost and objective

def test_cost_corner_values():
    assert cost((1, 1, 1, 10, 10, 1, 1)) == pytest.approx(107.0, abs=1e-12)
    assert cost((5, 5, 5, 5, 5, 5, 5)) == pytest.approx(539.0, abs=1e-12)
    assert cost((10, 10, 10, 1, 1, 10, 10)) == pytest.approx(1250.0, abs=1e-12)
    assert MAX_COST == 1250.0


def test_cost_accepts_params_objects():
    x = (2.5, 3.5, 4.5, 1.5, 9.5, 2.5, 7.5)
    assert cost(NetworkParams.from_point(x)) == pytest.approx(cost(x), abs=1e-12)
    assert cost(NetworkParams(1, 1, 1, 10, 10, 1, 1)) == pytest.approx(107.0)


def test_cost_rejects_wrong_length():
    with pytest.raises(ValueError):
        cost((1, 2, 3))


def test_objective_is_cost_minus_scaled_throughput():
    x = (2.5, 3.0, 4.0, 1.5, 9.5, 2.0, 7.0)
    v = objective(x, horizon=800, seed=11)
    m = simulate_network(NetworkParams.from_point(x), 800, seed=11)
    assert v == pytest.approx(cost(x) / MAX_COST - m.throughput / 0.5, abs=1e-15)


def test_objective_rejects_points_outside_the_box():
    with pytest.raises(DomainError):
        objective((0.5, 5, 5, 5, 5, 5, 5), horizon=10, seed=0)
    with pytest.raises(DomainError):
        objective((5, 5, 5, 5, 5, 5, 10.3), horizon=10, seed=0)


def test_objective_needs_positive_arrival_rate():
    with pytest.raises(ValueError):
        objective((5,) * 7, horizon=10, seed=0, config=NetworkConfig(arrival_p=0.0))


# ------------------------------------------------------------ construction

def test_overhead_params_randomizes_a_prefix():
    base = overhead_params(0)
    assert all(base.value(n) == 5 for n in PARAM_ORDER)
    mixed = overhead_params(3)
    for i, name in enumerate(PARAM_ORDER):
        v = mixed.value(name)
        if i < 3:
            assert isinstance(v, RandomizedParam)
            assert v.target == 5.5
            assert v.template is DEFAULT_TEMPLATES[name]
        else:
            assert v == 5
    full = overhead_params(7)
    assert all(isinstance(full.value(n), RandomizedParam) for n in PARAM_ORDER)
    for bad in (-1, 8):
        with pytest.raises(ValueError):
            overhead_params(bad)


def test_from_point_round_trips_targets():
    x = (2.5, 3.0, 4.5, 1.5, 9.0, 2.5, 7.0)
    assert NetworkParams.from_point(x).targets() == pytest.approx(x)
    with pytest.raises(ValueError):
        NetworkParams.from_point((5, 5, 5))


def test_params_validation():
    with pytest.raises(ValueError):
        NetworkParams(0, 5, 5, 5, 5, 5, 5)
    with pytest.raises(ValueError):
        NetworkParams(5, 5, 5, 5, 5, 5, 11)
    with pytest.raises(TypeError):
        NetworkParams(True, 5, 5, 5, 5, 5, 5)
    with pytest.raises(TypeError):
        NetworkParams("5", 5, 5, 5, 5, 5, 5)
    wide = RandomizedParam(DiscreteDomain(1, 12), 11.5, CoeffTemplate(1, 1.0, 1.0))
    with pytest.raises(ValueError):
        NetworkParams(5, 5, 5, 5, 5, 5, wide)


def test_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig(arrival_p=1.2)
    with pytest.raises(ValueError):
        NetworkConfig(q2=0.0)
    assert NetworkConfig(q2=1.0).q2 == 1.0


def test_simulate_rejects_bad_horizon():
    with pytest.raises(ValueError):
        simulate_network(NetworkParams(5, 5, 5, 5, 5, 5, 5), 0)


def test_default_templates_cover_every_parameter():
    assert set(DEFAULT_TEMPLATES) == set(PARAM_ORDER)
    assert all(t.half_width == 1 for t in DEFAULT_TEMPLATES.values())
    assert DEFAULT_TEMPLATES["C1"].skew == -2.0
    assert DEFAULT_TEMPLATES["K2"].skew == 4.0
    assert all(t.spread == 1.0 for t in DEFAULT_TEMPLATES.values())
