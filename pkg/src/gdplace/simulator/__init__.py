from gdplace.simulator.engine import (
    COLOCATION,
    OUT_OF_MEMORY,
    SimReport,
    critical_path_bound,
    respects_colocation,
    serial_time,
    simulate,
)
from gdplace.simulator.oracle import oracle_simulate
from gdplace.simulator.topology import (
    DeviceTopology,
    topology_from_dict,
    topology_from_json,
    topology_to_dict,
    topology_to_json,
    uniform_topology,
)

__all__ = [
    "COLOCATION",
    "OUT_OF_MEMORY",
    "DeviceTopology",
    "SimReport",
    "critical_path_bound",
    "oracle_simulate",
    "respects_colocation",
    "serial_time",
    "simulate",
    "topology_from_dict",
    "topology_from_json",
    "topology_to_dict",
    "topology_to_json",
    "uniform_topology",
]
