"""Versioned JSON form of :class:`DataflowGraph`.

Schema (version 1)::

    {"version": 1, "name": str,
     "nodes": [{"id", "op_type", "compute_cost", "output_bytes",
                "memory_bytes", "colocation_group"?}, ...],
     "edges": [[u, v], ...]}

Unknown keys are ignored with a ``UserWarning``.
"""

from __future__ import annotations

import json
import warnings

from gdplace.errors import ParseError
from gdplace.graph.model import DataflowGraph, OpNode

SCHEMA_VERSION = 1
_TOP_KEYS = {"version", "name", "nodes", "edges"}
_NODE_KEYS = {"id", "op_type", "compute_cost", "output_bytes", "memory_bytes", "colocation_group"}


def to_dict(graph: DataflowGraph) -> dict:
    nodes = []
    for n in graph.nodes:
        d = {"id": n.id, "op_type": n.op_type, "compute_cost": n.compute_cost,
             "output_bytes": n.output_bytes, "memory_bytes": n.memory_bytes}
        if n.colocation_group is not None:
            d["colocation_group"] = n.colocation_group
        nodes.append(d)
    return {"version": SCHEMA_VERSION, "name": graph.name, "nodes": nodes,
            "edges": [[u, v] for u, v in graph.edges]}


def to_json(graph: DataflowGraph) -> str:
    return json.dumps(to_dict(graph), indent=1)


def _require(obj: dict, key: str, loc: str):
    if key not in obj:
        raise ParseError(f"missing field {key!r}", loc or "$")
    return obj[key]


def _number(val, loc: str, integer: bool = False):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ParseError(f"expected a number, got {val!r}", loc)
    if integer:
        if isinstance(val, float) and not val.is_integer():
            raise ParseError(f"expected an integer, got {val!r}", loc)
        return int(val)
    return float(val)


def from_dict(data) -> DataflowGraph:
    if not isinstance(data, dict):
        raise ParseError("top level must be an object", "$")
    version = _require(data, "version", "")
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema version {version!r}", "$.version")
    extra = set(data) - _TOP_KEYS
    if extra:
        warnings.warn(f"ignoring unknown graph fields {sorted(extra)}", UserWarning, stacklevel=3)
    raw_nodes = _require(data, "nodes", "")
    raw_edges = _require(data, "edges", "")
    if not isinstance(raw_nodes, list):
        raise ParseError("expected a list", "$.nodes")
    if not isinstance(raw_edges, list):
        raise ParseError("expected a list", "$.edges")
    nodes = []
    for i, rn in enumerate(raw_nodes):
        loc = f"$.nodes[{i}]"
        if not isinstance(rn, dict):
            raise ParseError("expected an object", loc)
        extra = set(rn) - _NODE_KEYS
        if extra:
            warnings.warn(f"{loc}: ignoring unknown fields {sorted(extra)}", UserWarning,
                          stacklevel=3)
        op_type = _require(rn, "op_type", loc)
        if not isinstance(op_type, str):
            raise ParseError("op_type must be a string", f"{loc}.op_type")
        group = rn.get("colocation_group")
        nodes.append(OpNode(
            id=_number(_require(rn, "id", loc), f"{loc}.id", integer=True),
            op_type=op_type,
            compute_cost=_number(_require(rn, "compute_cost", loc), f"{loc}.compute_cost"),
            output_bytes=_number(_require(rn, "output_bytes", loc), f"{loc}.output_bytes", True),
            memory_bytes=_number(_require(rn, "memory_bytes", loc), f"{loc}.memory_bytes", True),
            colocation_group=None if group is None else _number(
                group, f"{loc}.colocation_group", integer=True),
        ))
    edges = []
    for i, e in enumerate(raw_edges):
        loc = f"$.edges[{i}]"
        if not isinstance(e, list) or len(e) != 2:
            raise ParseError("edge must be a [producer, consumer] pair", loc)
        edges.append((_number(e[0], f"{loc}[0]", True), _number(e[1], f"{loc}[1]", True)))
    name = data.get("name", "graph")
    if not isinstance(name, str):
        raise ParseError("name must be a string", "$.name")
    return DataflowGraph(tuple(nodes), tuple(edges), name)


def from_json(text: str) -> DataflowGraph:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    return from_dict(data)
