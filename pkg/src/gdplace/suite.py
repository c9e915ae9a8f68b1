"""The desk-scale benchmark suite and the baseline numbers it is judged against."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Any

from gdplace.baselines import min_cut, random_placement, single_device, topo_blocks
from gdplace.graph import gen_family
from gdplace.simulator import simulate, uniform_topology
from gdplace.trainer import Workload

DESK_BANDWIDTH = 2e8
RANDOM_SAMPLES = 100


@dataclass(frozen=True)
class FamilySpec:
    family: str
    params: dict[str, Any] = field(default_factory=dict)
    devices: int = 2


# Recurrent layers share weights across time steps, hence colocate_layers.
DESK_FAMILIES = (
    FamilySpec("rnn_grid", {"layers": 4, "steps": 40, "colocate_layers": True}, 2),
    FamilySpec("multibranch", {}, 4),
    FamilySpec("dilated_stack", {}, 2),
    FamilySpec("encoder_decoder", {"steps": 16}, 3),
    FamilySpec("layered_random", {}, 3),
)


def workload(spec: FamilySpec, seed: int = 0, bandwidth: float = DESK_BANDWIDTH) -> Workload:
    graph = gen_family(spec.family, spec.params, seed)
    return Workload(spec.family, graph, uniform_topology(spec.devices, bandwidth=bandwidth))


def desk_suite(seed: int = 0, bandwidth: float = DESK_BANDWIDTH) -> list[Workload]:
    """One workload per family; graph generation is seeded by ``seed``."""
    return [workload(spec, seed, bandwidth) for spec in DESK_FAMILIES]


def random_median(w: Workload, samples: int = RANDOM_SAMPLES, seed: int = 0) -> float:
    """Median makespan of uniformly random placements (invalid ones count as infinite)."""
    spans = []
    for s in range(samples):
        report = simulate(w.graph, random_placement(w.graph, w.topology, seed + s), w.topology)
        spans.append(report.makespan if report.valid else float("inf"))
    return statistics.median(spans)


def baseline_makespans(w: Workload) -> dict[str, float]:
    """Makespans of the heuristic placers on ``w`` (``inf`` when a placement is invalid)."""
    out = {"random": random_median(w)}
    for name, placer in (("single_device", single_device), ("topo_blocks", topo_blocks),
                         ("min_cut", min_cut)):
        report = simulate(w.graph, placer(w.graph, w.topology), w.topology)
        out[name] = report.makespan if report.valid else float("inf")
    return out
