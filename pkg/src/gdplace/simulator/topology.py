"""Device topology and its JSON form.

JSON (version 1)::

    {"version": 1, "num_devices": d, "mem_capacity": [bytes | null, ...],
     "speed": [...], "bandwidth": [[null | bytes_per_unit, ...], ...],
     "latency": [[...], ...]}

``null`` stands for infinity (unlimited memory, the bandwidth diagonal).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from gdplace.errors import ContractError, ParseError

TOPOLOGY_VERSION = 1


@dataclass(frozen=True)
class DeviceTopology:
    num_devices: int
    mem_capacity: tuple[float, ...]
    speed: tuple[float, ...]
    bandwidth: tuple[tuple[float, ...], ...]
    latency: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        d = self.num_devices
        object.__setattr__(self, "mem_capacity", tuple(float(x) for x in self.mem_capacity))
        object.__setattr__(self, "speed", tuple(float(x) for x in self.speed))
        object.__setattr__(self, "bandwidth", tuple(tuple(float(x) for x in r) for r in self.bandwidth))
        object.__setattr__(self, "latency", tuple(tuple(float(x) for x in r) for r in self.latency))
        if d < 1:
            raise ContractError("num_devices must be positive")
        if len(self.mem_capacity) != d or len(self.speed) != d:
            raise ContractError("mem_capacity and speed need one entry per device")
        if len(self.bandwidth) != d or any(len(r) != d for r in self.bandwidth):
            raise ContractError("bandwidth must be d x d")
        if len(self.latency) != d or any(len(r) != d for r in self.latency):
            raise ContractError("latency must be d x d")
        if any(not s > 0 or math.isinf(s) for s in self.speed):
            raise ContractError("speed multipliers must be positive and finite")
        if any(m < 0 for m in self.mem_capacity):
            raise ContractError("mem_capacity must be non-negative")
        for a in range(d):
            if self.latency[a][a] != 0:
                raise ContractError("latency diagonal must be 0")
            for b in range(d):
                if self.latency[a][b] < 0:
                    raise ContractError("latency must be non-negative")
                if a != b:
                    if not self.bandwidth[a][b] > 0:
                        raise ContractError("off-diagonal bandwidth must be positive")
                    if self.bandwidth[a][b] != self.bandwidth[b][a]:
                        raise ContractError("bandwidth must be symmetric")

    def transfer_time(self, nbytes: int, src: int, dst: int) -> float:
        return nbytes / self.bandwidth[src][dst] + self.latency[src][dst]


def uniform_topology(num_devices: int, mem_capacity: float = math.inf,
                     bandwidth: float = 1e9, latency: float = 0.0,
                     speed: float | tuple = 1.0) -> DeviceTopology:
    d = num_devices
    speeds = tuple(speed) if isinstance(speed, (tuple, list)) else (speed,) * d
    bw = tuple(tuple(math.inf if a == b else bandwidth for b in range(d)) for a in range(d))
    lat = tuple(tuple(0.0 if a == b else latency for b in range(d)) for a in range(d))
    return DeviceTopology(d, (mem_capacity,) * d, speeds, bw, lat)


def _enc(x: float):
    return None if math.isinf(x) else x


def _dec(x, loc: str) -> float:
    if x is None:
        return math.inf
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ParseError(f"expected a number or null, got {x!r}", loc)
    return float(x)


def topology_to_dict(topo: DeviceTopology) -> dict:
    return {
        "version": TOPOLOGY_VERSION,
        "num_devices": topo.num_devices,
        "mem_capacity": [_enc(m) for m in topo.mem_capacity],
        "speed": list(topo.speed),
        "bandwidth": [[_enc(x) for x in row] for row in topo.bandwidth],
        "latency": [list(row) for row in topo.latency],
    }


def topology_to_json(topo: DeviceTopology) -> str:
    return json.dumps(topology_to_dict(topo), indent=1)


def topology_from_dict(data) -> DeviceTopology:
    if not isinstance(data, dict):
        raise ParseError("top level must be an object", "$")
    if data.get("version") != TOPOLOGY_VERSION:
        raise ParseError(f"unsupported topology version {data.get('version')!r}", "$.version")
    for key in ("num_devices", "mem_capacity", "speed", "bandwidth", "latency"):
        if key not in data:
            raise ParseError(f"missing field {key!r}", "$")
    try:
        return DeviceTopology(
            int(data["num_devices"]),
            tuple(_dec(x, f"$.mem_capacity[{i}]") for i, x in enumerate(data["mem_capacity"])),
            tuple(_dec(x, f"$.speed[{i}]") for i, x in enumerate(data["speed"])),
            tuple(tuple(_dec(x, f"$.bandwidth[{a}][{b}]") for b, x in enumerate(row))
                  for a, row in enumerate(data["bandwidth"])),
            tuple(tuple(_dec(x, f"$.latency[{a}][{b}]") for b, x in enumerate(row))
                  for a, row in enumerate(data["latency"])),
        )
    except ContractError as exc:
        raise ParseError(str(exc), "$") from None
    except TypeError as exc:
        raise ParseError(str(exc), "$") from None


def topology_from_json(text: str) -> DeviceTopology:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    return topology_from_dict(data)
