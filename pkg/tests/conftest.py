import numpy as np
import pytest

from gdplace.graph import DataflowGraph, OpNode
from gdplace.numerics import ParamStore, Tape, backward


def fd_check(build, shapes, seed=0, step=1e-5, low=-2.0, high=2.0):
    """Max relative error between tape gradients and central differences.

    ``build(params)`` must return a scalar Tensor computed from the named
    parameters in ``params``; ``shapes`` maps name -> shape.
    """
    rng = np.random.default_rng(seed)
    store = ParamStore()
    for name, shape in shapes.items():
        store.create(name, rng.uniform(low, high, size=shape))
    return fd_check_store(build, store, step)


def fd_check_store(build, store, step=1e-5, names=None, max_coords=None, seed=0):
    with Tape() as tape:
        loss = build(store)
    grads = backward(loss, tape, store)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in names or list(store):
        p = store[name]
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + step
            up = build(store).item()
            flat[i] = orig - step
            down = build(store).item()
            flat[i] = orig
            num = (up - down) / (2 * step)
            ana = grads[name].reshape(-1)[i]
            err = abs(num - ana) / max(1.0, abs(num), abs(ana))
            worst = max(worst, err)
    return worst


def make_graph(n, edges, costs=None, out_bytes=None, mem=None, groups=None, name="g"):
    costs = costs or [1.0] * n
    out_bytes = out_bytes or [0] * n
    mem = mem or [0] * n
    groups = groups or [None] * n
    nodes = tuple(OpNode(i, "Op", float(costs[i]), int(out_bytes[i]), int(mem[i]), groups[i])
                  for i in range(n))
    return DataflowGraph(nodes, tuple(edges), name)


@pytest.fixture
def diamond():
    return make_graph(4, [(0, 1), (0, 2), (1, 3), (2, 3)], costs=[1, 2, 3, 1],
                      out_bytes=[1, 1, 1, 1], mem=[1, 1, 1, 1])
