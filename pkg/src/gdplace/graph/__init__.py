from gdplace.graph.features import DEFAULT_BUCKETS, encode_features, op_bucket
from gdplace.graph.generators import FAMILIES, gen_family, stress_graph
from gdplace.graph.model import DataflowGraph, OpNode, Violation, relabel, topo_order, validate
from gdplace.graph.serialize import from_dict, from_json, to_dict, to_json

__all__ = [
    "DEFAULT_BUCKETS",
    "FAMILIES",
    "DataflowGraph",
    "OpNode",
    "Violation",
    "encode_features",
    "from_dict",
    "from_json",
    "gen_family",
    "op_bucket",
    "relabel",
    "stress_graph",
    "to_dict",
    "to_json",
    "topo_order",
    "validate",
]
