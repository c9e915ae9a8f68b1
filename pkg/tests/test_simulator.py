import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_graph
from gdplace.errors import ContractError, ParseError
from gdplace.graph import gen_family
from gdplace.simulator import (
    COLOCATION,
    OUT_OF_MEMORY,
    DeviceTopology,
    critical_path_bound,
    oracle_simulate,
    serial_time,
    simulate,
    topology_from_json,
    topology_to_json,
    uniform_topology,
)
from simcases import all_cases


def test_spec_examples():
    chain = make_graph(3, [(0, 1), (1, 2)], costs=[1, 2, 3])
    assert simulate(chain, [0, 0, 0], uniform_topology(1)).makespan == 6
    pair = make_graph(2, [], costs=[5, 5])
    assert simulate(pair, [0, 1], uniform_topology(2)).makespan == 5


def test_diamond_hand_trace():
    # Unit costs, transfer time 2 each way: A:[0,1] B:[1,2] C:[3,4] D:[6,7].
    g = make_graph(4, [(0, 1), (0, 2), (1, 3), (2, 3)], out_bytes=[2, 2, 2, 2])
    topo = uniform_topology(2, bandwidth=1.0)
    r = simulate(g, [0, 0, 1, 0], topo)
    assert r.valid and r.makespan == 7.0
    assert r.per_device_busy == (3.0, 1.0)
    assert r.cross_device_bytes == 4
    assert oracle_simulate(g, [0, 0, 1, 0], topo) == r


def test_out_of_memory_and_colocation_verdicts():
    g = make_graph(2, [(0, 1)], mem=[6, 6])
    r = simulate(g, [0, 0], uniform_topology(2, mem_capacity=10))
    assert not r.valid and r.violation == OUT_OF_MEMORY
    assert simulate(g, [0, 1], uniform_topology(2, mem_capacity=10)).valid
    grouped = make_graph(2, [(0, 1)], groups=[1, 1])
    bad = simulate(grouped, [0, 1], uniform_topology(2))
    assert not bad.valid and bad.violation == COLOCATION
    assert bad.makespan > 0


def test_malformed_inputs_raise():
    g = make_graph(2, [(0, 1)])
    with pytest.raises(ContractError):
        simulate(g, [0], uniform_topology(2))
    with pytest.raises(ContractError):
        simulate(g, [0, 2], uniform_topology(2))
    with pytest.raises(ContractError):
        simulate(make_graph(2, [(0, 1), (1, 0)]), [0, 0], uniform_topology(1))


def test_report_invariants_on_exhaustive_suite():
    for _, _, g, topo, a in all_cases():
        r = simulate(g, a, topo)
        assert r.valid == (r.violation is None)
        if r.valid:
            assert r.makespan >= max(r.per_device_busy)


def test_oracle_small_examples():
    single = make_graph(1, [], costs=[2.5])
    assert oracle_simulate(single, [1], uniform_topology(2, speed=(1.0, 2.0))).makespan == 5.0
    g = make_graph(4, [(0, 1), (0, 2), (1, 3)], costs=[1, 2, 3, 4], out_bytes=[9, 9, 9, 9])
    assert oracle_simulate(g, [0] * 4, uniform_topology(2)).makespan == 10.0
    with pytest.raises(ContractError):
        oracle_simulate(make_graph(13, []), [0] * 13, uniform_topology(1))


def test_zero_cross_edges_ignore_bandwidth():
    g = make_graph(4, [(0, 1), (2, 3)], costs=[1, 2, 3, 1], out_bytes=[5, 5, 5, 5])
    slow = simulate(g, [0, 0, 1, 1], uniform_topology(2, bandwidth=1e-3))
    fast = simulate(g, [0, 0, 1, 1], uniform_topology(2, bandwidth=1e9))
    assert slow == fast and slow.cross_device_bytes == 0


def random_instance(seed, n_max=14):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.3]
    g = make_graph(n, edges, costs=list(rng.uniform(0, 3, n)),
                   out_bytes=list(rng.integers(0, 10, n)), mem=list(rng.integers(0, 5, n)))
    d = int(rng.integers(1, 4))
    topo = uniform_topology(d, bandwidth=float(rng.uniform(0.5, 4)),
                            latency=float(rng.uniform(0, 1)),
                            speed=tuple(rng.uniform(0.5, 2, d)))
    return g, list(rng.integers(0, d, n)), topo


def test_critical_path_examples():
    chain = make_graph(3, [(0, 1), (1, 2)], costs=[1, 2, 3])
    assert critical_path_bound(chain, uniform_topology(1)) == 6
    diamond = make_graph(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
    assert critical_path_bound(diamond, uniform_topology(2)) == 3


def test_critical_path_bounds_1000_random_pairs():
    for seed in range(1000):
        g, a, topo = random_instance(seed)
        r = simulate(g, a, topo)
        transfers = sum(topo.transfer_time(g.nodes[u].output_bytes, a[u], a[v])
                        for u, v in g.edges if a[u] != a[v])
        durations = sum(g.nodes[v].compute_cost * topo.speed[a[v]] for v in range(g.num_nodes))
        assert critical_path_bound(g, topo) <= r.makespan + 1e-12
        assert r.makespan <= durations + transfers + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_engine_matches_oracle_on_random_instances(seed):
    g, a, topo = random_instance(seed, n_max=10)
    assert simulate(g, a, topo) == oracle_simulate(g, a, topo)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_single_device_is_serial_sum(seed):
    g, _, topo = random_instance(seed)
    r = simulate(g, [0] * g.num_nodes, topo)
    # Summation order differs (schedule order vs id order), so allow rounding.
    assert r.makespan == pytest.approx(serial_time(g, topo), rel=1e-12)
    assert r.cross_device_bytes == 0
    ints = make_graph(g.num_nodes, g.edges, costs=[float(i % 4) for i in range(g.num_nodes)])
    assert simulate(ints, [0] * g.num_nodes, uniform_topology(2)).makespan == \
        sum(i % 4 for i in range(g.num_nodes))


@pytest.mark.parametrize("k", [0.5, 2.0, 4.0])
def test_scaling_costs_scales_makespan(k):
    g = gen_family("multibranch", {"blocks": 2}, seed=1)
    scaled = make_graph(g.num_nodes, g.edges, costs=[n.compute_cost * k for n in g.nodes])
    base = make_graph(g.num_nodes, g.edges, costs=[n.compute_cost for n in g.nodes])
    a = list(np.random.default_rng(0).integers(0, 3, g.num_nodes))
    topo = uniform_topology(3)
    assert simulate(scaled, a, topo).makespan == pytest.approx(k * simulate(base, a, topo).makespan,
                                                               rel=1e-12)


def test_deterministic():
    g = gen_family("encoder_decoder", {}, seed=0)
    a = list(np.random.default_rng(1).integers(0, 3, g.num_nodes))
    topo = uniform_topology(3, bandwidth=1e8, latency=1e-4)
    assert simulate(g, a, topo) == simulate(g, a, topo)


def test_memory_liveness_peaks():
    # 0 -> 1 on one device: output of 0 (5 bytes) lives until 1 finishes.
    g = make_graph(2, [(0, 1)], out_bytes=[5, 3], mem=[1, 2])
    r = simulate(g, [0, 0], uniform_topology(1))
    assert r.per_device_peak_mem == (1 + 2 + 5 + 3,)
    cross = simulate(g, [0, 1], uniform_topology(2, bandwidth=1.0))
    assert cross.per_device_peak_mem == (1 + 5, 2 + 5 + 3)


def test_topology_validation_and_json():
    topo = DeviceTopology(2, (10.0, math.inf), (1.0, 1.5), ((math.inf, 2.0), (2.0, math.inf)),
                          ((0.0, 0.1), (0.1, 0.0)))
    assert topology_from_json(topology_to_json(topo)) == topo
    with pytest.raises(ContractError):
        DeviceTopology(2, (1.0, 1.0), (1.0, 1.0), ((math.inf, 2.0), (3.0, math.inf)),
                       ((0.0, 0.0), (0.0, 0.0)))
    with pytest.raises(ContractError):
        uniform_topology(2, latency=-1.0)
    with pytest.raises(ParseError):
        topology_from_json('{"version": 1}')
