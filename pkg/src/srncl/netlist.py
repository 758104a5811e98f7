"""Annotated gate netlists, their JSON form, and area proxies."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .ncl import INV, GateSpec, NetlistError, lookup_gate

ROLES = ("CL_MSU", "CL_LSU", "ISC", "REG", "CD", "MERGE")
COPIES = ("a", "b", "shared")
ARCHS = ("ncl", "dmr", "sr")

# Static CMOS NCL cells, transistors per gate.
DEFAULT_COSTS: dict[str, int] = {
    "TH12": 6,
    "TH13": 8,
    "TH14": 10,
    "TH22": 12,
    "TH23": 18,
    "TH33": 16, "TH33w2": 16,
    "TH44": 18,
    "TH23w2": 14,
    "TH34w2": 22,
    "INV": 2,
    "ISC1": 16,
    "ISC0": 16,
}


@dataclass(frozen=True)
class PartitionSpec:
    n: int
    l: int

    def __post_init__(self):
        if not 0 < self.l < self.n:
            raise NetlistError(f"invalid partition {self.n - self.l}|{self.l}: need 0 < L < N")

    @property
    def msu_width(self) -> int:
        return self.n - self.l

    def __str__(self):
        return f"{self.msu_width}|{self.l}"


@dataclass(frozen=True)
class Gate:
    id: int
    kind: str
    m: int
    weights: tuple[int, ...]
    inputs: tuple[int, ...]
    output: int
    stage: int
    role: str
    copy: str
    bit: int | None = None
    name: str = ""

    @property
    def spec(self) -> GateSpec:
        return GateSpec(self.kind, len(self.inputs), self.m, self.weights)


@dataclass
class Netlist:
    """Gates plus nets; ``ports`` locates the handshake interface for the simulator.

    ``ports`` keys: ``inputs`` (dual-rail pairs, a bits, b bits, carry-in),
    ``outputs`` (per copy: sum bits then carry-out), ``ack`` (per copy, the
    first rank's completion output), ``req`` (per copy, environment-driven
    request into the last rank), ``ranks`` (per rank, per copy, the monitored
    register-side signals) and ``cd`` (per rank, per copy, completion nets).
    """

    arch: str
    width: int
    partition: PartitionSpec | None
    stages: int
    gates: list[Gate]
    net_names: list[str]
    drivers: list[int | None]
    ports: dict[str, Any]
    isc_force: int = 0
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def copies(self) -> list[str]:
        return sorted(self.ports["outputs"])

    @property
    def primary_inputs(self) -> dict[str, list]:
        pis = self.ports["inputs"]
        n = self.width
        return {"a": pis[:n], "b": pis[n:2 * n], "cin": pis[2 * n]}

    @property
    def primary_outputs(self) -> dict[str, list]:
        outs = self.ports["outputs"]["a"]
        return {"sum": outs[:-1], "cout": outs[-1]}

    def fanout(self) -> list[list[int]]:
        fo: list[list[int]] = [[] for _ in self.net_names]
        for g in self.gates:
            for i in g.inputs:
                if g.id not in fo[i]:
                    fo[i].append(g.id)
        return fo

    def validate(self) -> None:
        seen = [None] * len(self.net_names)
        for g in self.gates:
            lookup_gate(g.kind)
            if g.role not in ROLES or g.copy not in COPIES:
                raise NetlistError(f"gate {g.id}: bad annotation {g.role}/{g.copy}")
            if seen[g.output] is not None:
                raise NetlistError(f"net {self.net_names[g.output]} has two drivers")
            seen[g.output] = g.id
            if any(not 0 <= i < len(self.net_names) for i in g.inputs):
                raise NetlistError(f"gate {g.id}: dangling input")
            g.spec  # noqa: B018  (raises on malformed weights)
        if seen != list(self.drivers):
            raise NetlistError("driver table out of sync with gates")
        self._check_cycles()

    def _check_cycles(self) -> None:
        # Only hysteresis-free gates (inverters) may not sit on loops; threshold
        # gates hold state, so every cycle must pass through one.
        inv = {g.output: g for g in self.gates if g.kind == INV}
        state = {}

        def visit(net: int) -> None:
            state[net] = 1
            g = inv.get(net)
            if g is not None:
                for i in g.inputs:
                    if state.get(i) == 1:
                        raise NetlistError("combinational cycle through inverters")
                    if i not in state:
                        visit(i)
            state[net] = 2

        for net in inv:
            if net not in state:
                visit(net)

    def to_dict(self) -> dict[str, Any]:
        return {
            "arch": self.arch,
            "width": self.width,
            "partition": None if self.partition is None else {"n": self.partition.n, "l": self.partition.l},
            "stages": self.stages,
            "isc_force": self.isc_force,
            "gates": [
                {
                    "id": g.id, "kind": g.kind, "m": g.m, "weights": list(g.weights),
                    "inputs": list(g.inputs), "output": g.output, "stage": g.stage,
                    "role": g.role, "copy": g.copy, "bit": g.bit, "name": g.name,
                }
                for g in self.gates
            ],
            "nets": [{"id": i, "name": n, "driver": d} for i, (n, d) in enumerate(zip(self.net_names, self.drivers))],
            "primary_inputs": self.primary_inputs,
            "primary_outputs": self.primary_outputs,
            "ports": self.ports,
            "meta": self.meta,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Netlist":
        try:
            part = d.get("partition")
            gates = [
                Gate(g["id"], g["kind"], g["m"], tuple(g["weights"]), tuple(g["inputs"]), g["output"],
                     g["stage"], g["role"], g["copy"], g.get("bit"), g.get("name", ""))
                for g in d["gates"]
            ]
            nets = sorted(d["nets"], key=lambda n: n["id"])
            nl = cls(
                arch=d["arch"], width=d["width"],
                partition=None if part is None else PartitionSpec(part["n"], part["l"]),
                stages=d["stages"], gates=gates,
                net_names=[n["name"] for n in nets], drivers=[n["driver"] for n in nets],
                ports=d["ports"], isc_force=d.get("isc_force", 0), meta=d.get("meta", {}),
            )
        except (KeyError, TypeError) as e:
            raise NetlistError(f"malformed netlist JSON: {e}") from e
        nl.validate()
        return nl

    @classmethod
    def from_json(cls, text: str) -> "Netlist":
        return cls.from_dict(json.loads(text))

    def find(self, role: str | None = None, copy: str | None = None, stage: int | None = None) -> list[Gate]:
        return [
            g for g in self.gates
            if (role is None or g.role == role)
            and (copy is None or g.copy == copy)
            and (stage is None or g.stage == stage)
        ]


def count_gates(netlist: Netlist | None) -> Counter:
    if netlist is None:
        return Counter()
    return Counter(g.kind for g in netlist.gates)


def estimate_transistors(netlist: Netlist | None, costs: Mapping[str, int] = DEFAULT_COSTS) -> int:
    total = 0
    for kind, n in count_gates(netlist).items():
        if kind not in costs:
            raise NetlistError(f"cost table has no entry for {kind}")
        total += n * costs[kind]
    return total


def load_costs(path) -> dict[str, int]:
    with open(path) as f:
        raw = json.load(f)
    costs = dict(DEFAULT_COSTS)
    for k, v in raw.items():
        if not isinstance(v, int) or v <= 0:
            raise NetlistError(f"cost for {k} must be a positive integer")
        costs[k] = v
    return costs


def role_histogram(netlist: Netlist) -> dict[str, int]:
    return dict(Counter(f"{g.role}.{g.copy}" for g in netlist.gates))


def slices(gates: Iterable[Gate]) -> set[int]:
    return {g.bit for g in gates if g.bit is not None}
