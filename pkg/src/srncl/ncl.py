"""Dual-rail values and NCL threshold gates with hysteresis."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence


class NetlistError(ValueError):
    """Malformed gate, invalid builder parameter, or illegal netlist."""


class DualRailValue(enum.IntEnum):
    """A dual-rail signal, numbered as the two-bit word ``d1 d0``."""

    NULL = 0b00
    DATA0 = 0b01
    DATA1 = 0b10
    ILLEGAL = 0b11

    @classmethod
    def from_rails(cls, d1: int, d0: int) -> "DualRailValue":
        return cls(((d1 & 1) << 1) | (d0 & 1))

    @property
    def d1(self) -> int:
        return (self.value >> 1) & 1

    @property
    def d0(self) -> int:
        return self.value & 1

    @property
    def is_data(self) -> bool:
        return self in (DualRailValue.DATA0, DualRailValue.DATA1)


NULL = DualRailValue.NULL
DATA0 = DualRailValue.DATA0
DATA1 = DualRailValue.DATA1
ILLEGAL = DualRailValue.ILLEGAL


def encode_bit(b: int) -> DualRailValue:
    if b not in (0, 1):
        raise ValueError(f"not a bit: {b!r}")
    return DATA1 if b else DATA0


def decode(v: DualRailValue) -> int | str:
    """Classify a dual-rail value as 0, 1, ``"null"`` or ``"illegal"``."""
    v = DualRailValue(v)
    if v is DATA0:
        return 0
    if v is DATA1:
        return 1
    return "null" if v is NULL else "illegal"


# Gate kinds with behaviour beyond a plain weighted threshold.
INV = "INV"
ISC1 = "ISC1"
ISC0 = "ISC0"


@dataclass(frozen=True)
class GateSpec:
    kind: str
    n: int
    m: int
    weights: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not self.weights:
            object.__setattr__(self, "weights", (1,) * self.n)
        if len(self.weights) != self.n:
            raise NetlistError(f"{self.kind}: {len(self.weights)} weights for {self.n} inputs")
        if self.kind in (INV, ISC1, ISC0):
            return
        if any(w < 1 for w in self.weights):
            raise NetlistError(f"{self.kind}: weights must be positive")
        if not 1 <= self.m <= sum(self.weights):
            raise NetlistError(f"{self.kind}: threshold {self.m} outside [1, {sum(self.weights)}]")

    @property
    def unit_weights(self) -> bool:
        return all(w == 1 for w in self.weights)

    @property
    def has_hysteresis(self) -> bool:
        """True for threshold gates that hold their output on partial input sets."""
        if self.kind in (INV, ISC1, ISC0):
            return False
        return self.m > 1


def threshold(m: int, n: int, weights: Sequence[int] = ()) -> GateSpec:
    """Make a THmn spec, naming weighted variants the usual way (TH34w2, TH54w32, ...)."""
    kind = f"TH{m}{n}"
    weights = tuple(weights)
    if weights and any(w != 1 for w in weights):
        kind += "w" + "".join(str(w) for w in weights if w != 1)
    return GateSpec(kind, n, m, weights)


# ISC rail gates take (d1, d0, ki_a, ki_b, other_rail_out).
_ISC_N = 5

GATE_LIBRARY: dict[str, GateSpec] = {
    "TH12": threshold(1, 2),
    "TH13": threshold(1, 3),
    "TH14": threshold(1, 4),
    "TH22": threshold(2, 2),
    "TH23": threshold(2, 3),
    "TH33": threshold(3, 3),
    "TH44": threshold(4, 4),
    "TH23w2": threshold(2, 3, (2, 1, 1)),
    "TH33w2": threshold(3, 3, (2, 1, 1)),
    "TH34w2": threshold(3, 4, (2, 1, 1, 1)),
    INV: GateSpec(INV, 1, 1),
    ISC1: GateSpec(ISC1, _ISC_N, 1),
    ISC0: GateSpec(ISC0, _ISC_N, 1),
}


def register_gate(spec: GateSpec) -> None:
    GATE_LIBRARY[spec.kind] = spec


def lookup_gate(kind: str) -> GateSpec:
    try:
        return GATE_LIBRARY[kind]
    except KeyError:
        raise NetlistError(f"unknown gate kind {kind!r}") from None


@dataclass
class GateState:
    current_output: int = 0


def isc_next_output(rail: int, prev: int, inputs: Sequence[int], force_to: int = 0) -> int:
    """Next output of one rail of an illegal-state-correction unit.

    Requests both rfd: a rail asserts on the matching legal DATA input (an
    ILLEGAL input counts as DATA``force_to``) while the other output rail is
    low, so the unit never emits 11 and keeps the first value it passed.
    Requests both rfn: reset once the input is NULL, never pass new DATA.
    Requests disagreeing (one completion copy is wrong): follow the input,
    passing DATA into a NULL output and resetting on a NULL input.
    """
    d1, d0, ka, kb, other = inputs
    if not d1 and not d0:
        return prev if ka and kb else 0
    if not ka and not kb:
        return prev
    if other:
        return prev
    if d1 and d0:
        return 1 if rail == force_to else prev
    return 1 if (d1 if rail == 1 else d0) else prev


def gate_next_output(spec: GateSpec, prev: int, inputs: Sequence[int], isc_force: int = 0) -> int:
    """Evaluate one gate: THmn set at s >= m, reset at s == 0, hold otherwise."""
    if len(inputs) != spec.n:
        raise NetlistError(f"{spec.kind} expects {spec.n} inputs, got {len(inputs)}")
    if spec.kind == INV:
        return 1 - inputs[0]
    if spec.kind == ISC1:
        return isc_next_output(1, prev, inputs, isc_force)
    if spec.kind == ISC0:
        return isc_next_output(0, prev, inputs, isc_force)
    s = sum(w * x for w, x in zip(spec.weights, inputs))
    if s >= spec.m:
        return 1
    if s == 0:
        return 0
    return prev
