"""Discrete-event simulation of NCL netlists with a four-phase handshake environment."""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field
from operator import itemgetter, mul
from typing import Callable, Iterable, Sequence

from .ncl import INV, ISC0, ISC1, NetlistError, gate_next_output, isc_next_output
from .netlist import Netlist

THRESH, WEIGHTED, NOT, ISC_1, ISC_0 = range(5)

PROGRESSING = "progressing"
DEADLOCKED = "deadlocked"
COMPLETED = "completed"
TIMEOUT = "timeout"


@dataclass(frozen=True)
class DelayModel:
    mode: str = "unit"  # unit | fixed | random
    d_min: int = 1
    d_max: int = 1
    seed: int = 0
    fixed: tuple[int, ...] = ()

    def __post_init__(self):
        if self.mode not in ("unit", "fixed", "random"):
            raise ValueError(f"unknown delay mode {self.mode!r}")
        if not 1 <= self.d_min <= self.d_max:
            raise ValueError("delay bounds need 1 <= d_min <= d_max")

    @classmethod
    def unit(cls) -> "DelayModel":
        return cls("unit")

    @classmethod
    def random(cls, seed: int, d_min: int = 1, d_max: int = 8) -> "DelayModel":
        return cls("random", d_min, d_max, seed)

    def assign(self, n_gates: int) -> list[int]:
        if self.mode == "unit":
            return [1] * n_gates
        if self.mode == "fixed":
            if len(self.fixed) != n_gates:
                raise ValueError("fixed delay table does not match gate count")
            return list(self.fixed)
        rng = random.Random(self.seed)
        return [rng.randint(self.d_min, self.d_max) for _ in range(n_gates)]

    @property
    def max_delay(self) -> int:
        return max(self.fixed) if self.mode == "fixed" else (1 if self.mode == "unit" else self.d_max)


@dataclass
class Marker:
    time: int
    rank: int
    event: str  # DATA-start, DATA-complete, NULL-start, NULL-complete
    count: int  # how many times this rank has seen this event before


@dataclass
class Trace:
    records: list[tuple[int, int, int]] = field(default_factory=list)
    markers: list[Marker] = field(default_factory=list)

    def to_text(self) -> str:
        return "".join(f"{t} {n} {v}\n" for t, n, v in self.records)

    def final_values(self, initial: Sequence[int]) -> list[int]:
        vals = list(initial)
        for _, n, v in self.records:
            vals[n] = v
        return vals


class Simulator:
    """Event-driven simulation state for one netlist.

    Events at the same time commit in insertion order; every gate that sees an
    input change is then evaluated once, and any change of its (projected)
    output is scheduled after that gate's delay.
    """

    def __init__(self, netlist: Netlist, delay: DelayModel | None = None, record: bool = False):
        self.netlist = netlist
        self.delay = delay or DelayModel.unit()
        self.record = record
        gates = netlist.gates
        self.delays = self.delay.assign(len(gates))
        self.out = [g.output for g in gates]
        self.code = []
        self.getter = []
        self.weights = []
        self.m = [g.m for g in gates]
        self.first_in = [g.inputs[0] for g in gates]
        isc_code = {ISC1: ISC_1, ISC0: ISC_0}
        driver = {g.output: i for i, g in enumerate(gates)}
        # the two rails of an ISC form one cell: each reads its sibling's state, not the delayed net
        self.isc_sibling = {i: driver[g.inputs[4]] for i, g in enumerate(gates) if g.kind in isc_code}
        for g in gates:
            if g.kind == INV:
                self.code.append(NOT)
            elif g.kind in isc_code:
                self.code.append(isc_code[g.kind])
            elif all(w == 1 for w in g.weights):
                self.code.append(THRESH)
            else:
                self.code.append(WEIGHTED)
            ins = g.inputs[:4] if g.kind in isc_code else g.inputs
            self.getter.append(itemgetter(*ins) if len(ins) > 1 else (lambda v, i=ins[0]: (v[i],)))
            self.weights.append(g.weights)
        self.fanout = [tuple(f) for f in netlist.fanout()]
        self.isc_force = netlist.isc_force
        self.watch: dict[int, list] = {}
        self.reset()

    # -- state ------------------------------------------------------------

    def reset(self) -> None:
        nl = self.netlist
        self.time = 0
        self.vals = [0] * len(nl.net_names)
        self.gstate = [0] * len(nl.gates)
        for net in nl.ports.get("req", {}).values():
            self.vals[net] = 1
        # zero-delay fixed point from all-low: inverters and request merges go high
        changed = True
        while changed:
            changed = False
            for gid, g in enumerate(nl.gates):
                v = gate_next_output(g.spec, self.gstate[gid], [self.vals[i] for i in g.inputs], nl.isc_force)
                if v != self.gstate[gid]:
                    self.gstate[gid] = self.vals[self.out[gid]] = v
                    changed = True
        self.buckets: dict[int, list[tuple[int, int]]] = {}
        self.times: list[int] = []
        self.specials: dict[int, list[Callable[[], None]]] = {}
        self.forced: dict[int, int] = {}  # net -> shadow value while forced
        self.trace = Trace()
        self.initial = list(self.vals)
        self.transitions = 0
        self.stamp = [0] * len(nl.gates)
        self.step_no = 0
        self._pending_dirty: list[int] = []

    def pending(self) -> bool:
        return bool(self.times)

    def schedule(self, t: int, net: int, value: int) -> None:
        if t < self.time:
            raise ValueError("cannot schedule into the past")
        b = self.buckets.get(t)
        if b is None:
            self.buckets[t] = [(net, value)]
            heapq.heappush(self.times, t)
        else:
            b.append((net, value))

    def at(self, t: int, action: Callable[[], None]) -> None:
        """Run ``action`` at the start of time step ``t``."""
        if t < self.time:
            raise ValueError("cannot schedule into the past")
        if t not in self.buckets:
            self.buckets[t] = []
            heapq.heappush(self.times, t)
        self.specials.setdefault(t, []).append(action)

    def observe(self, nets: Iterable[int], owner) -> None:
        """Call ``owner.update(net)`` per changed net, then ``owner.after_step(t)`` once per step."""
        for n in nets:
            self.watch.setdefault(n, []).append(owner)

    # -- fault primitives ---------------------------------------------------

    def force_net(self, net: int, value: int, duration: int, at: int | None = None) -> None:
        """Hold ``net`` at ``value`` for ``duration`` units, then let its driver take over."""
        if not 0 <= net < len(self.vals):
            raise KeyError(f"unknown net {net}")
        if duration < 1:
            raise ValueError("force duration must be at least 1")
        start = self.time if at is None else at
        self.at(start, lambda: self._force_now(net, lambda v: value, duration))

    def invert_output(self, gate_id: int, duration: int, at: int | None = None) -> None:
        """Output-invert SEU: the gate's output net reads inverted for ``duration`` units."""
        if duration < 1:
            raise ValueError("force duration must be at least 1")
        start = self.time if at is None else at
        self.at(start, lambda: self._force_now(self.out[gate_id], lambda v: 1 - v, duration))

    def _force_now(self, net: int, value_of: Callable[[int], int], duration: int) -> None:
        if net in self.forced:
            return
        self.forced[net] = self.vals[net]
        self._set(net, value_of(self.vals[net]))

        def release():
            shadow = self.forced.pop(net, None)
            if shadow is not None:
                self._set(net, shadow)

        self.at(self.time + duration, release)

    def flip_state(self, gate_id: int, at: int | None = None) -> None:
        """State-flip SEU: invert the gate's held state, then let it re-evaluate."""
        def apply():
            self.gstate[gate_id] ^= 1
            self.schedule(self.time, self.out[gate_id], self.gstate[gate_id])
            self._pending_dirty.append(gate_id)

        self.at(self.time if at is None else at, apply)

    # -- kernel -------------------------------------------------------------

    def _set(self, net: int, value: int) -> None:
        # direct change inside a special action; picked up by the current step
        if self.vals[net] != value:
            self.vals[net] = value
            self._changed.append(net)
            if self.record:
                self.trace.records.append((self.time, net, value))

    def step(self) -> list[int]:
        """Commit the earliest time step; return nets that changed."""
        t = heapq.heappop(self.times)
        self.time = t
        self.step_no += 1
        stamp_id = self.step_no
        self._changed = changed = []
        specials = self.specials.pop(t, None)
        if specials:
            for fn in specials:
                fn()
        vals = self.vals
        forced = self.forced
        record = self.record
        recs = self.trace.records
        batch = self.buckets.pop(t)
        i = 0
        while i < len(batch):  # specials may append to this bucket
            net, v = batch[i]
            i += 1
            if forced and net in forced:
                forced[net] = v
                continue
            if vals[net] != v:
                vals[net] = v
                changed.append(net)
                if record:
                    recs.append((t, net, v))
        self.transitions += len(changed)

        fanout = self.fanout
        stamp = self.stamp
        dirty = []
        if self._pending_dirty:
            for g in self._pending_dirty:
                stamp[g] = stamp_id
                dirty.append(g)
            self._pending_dirty = []
        for net in changed:
            for g in fanout[net]:
                if stamp[g] != stamp_id:
                    stamp[g] = stamp_id
                    dirty.append(g)

        code, getter, m, gstate, out, delays = self.code, self.getter, self.m, self.gstate, self.out, self.delays
        buckets, times, weights = self.buckets, self.times, self.weights
        for g in dirty:
            c = code[g]
            prev = gstate[g]
            if c == THRESH:
                s = sum(getter[g](vals))
                new = 1 if s >= m[g] else (0 if s == 0 else prev)
            elif c == NOT:
                new = 1 - vals[self.first_in[g]]
            elif c == WEIGHTED:
                s = sum(map(mul, weights[g], getter[g](vals)))
                new = 1 if s >= m[g] else (0 if s == 0 else prev)
            else:
                new = isc_next_output(1 if c == ISC_1 else 0, prev, getter[g](vals) + (gstate[self.isc_sibling[g]],),
                                      self.isc_force)
            if new != prev:
                gstate[g] = new
                when = t + delays[g]  # inlined schedule()
                b = buckets.get(when)
                if b is None:
                    buckets[when] = [(out[g], new)]
                    heapq.heappush(times, when)
                else:
                    b.append((out[g], new))

        watch = self.watch
        if watch:
            owners = []
            for net in changed:
                obs = watch.get(net)
                if obs:
                    for o in obs:
                        o.update(net)
                        if o not in owners:
                            owners.append(o)
            for o in owners:
                o.after_step(t)
        return changed

    def run(self, max_time: int, stop: Callable[[], bool] | None = None) -> str:
        while self.times:
            if self.times[0] > max_time:
                return TIMEOUT
            self.step()
            if stop is not None and stop():
                return COMPLETED
        return COMPLETED if stop is None or stop() else DEADLOCKED

    def settle(self, max_time: int = 100_000) -> None:
        if self.run(self.time + max_time) == TIMEOUT:
            raise RuntimeError("netlist did not settle")

    def drive(self, assignments: dict[int, int], delay: int = 0) -> None:
        for net, v in assignments.items():
            self.schedule(self.time + delay, net, v)

    def signal(self, sig: Sequence[int]) -> int:
        """Dual-rail value (as the ``d1 d0`` word) currently on a signal."""
        return (self.vals[sig[0]] << 1) | self.vals[sig[1]]


def init_reset(netlist: Netlist, delay: DelayModel | None = None, record: bool = False) -> Simulator:
    """All dual-rail nets NULL, completion outputs rfd, empty queue at time 0."""
    netlist.validate()
    sim = Simulator(netlist, delay, record)
    # the reset state must already be stable
    for gid, g in enumerate(netlist.gates):
        c = sim.code[gid]
        inp = tuple(sim.vals[i] for i in g.inputs)
        if c == NOT:
            want = 1 - inp[0]
        elif c in (ISC_1, ISC_0):
            want = isc_next_output(1 if c == ISC_1 else 0, 0, inp, netlist.isc_force)
        else:
            s = sum(w * x for w, x in zip(g.weights, inp))
            want = 1 if s >= g.m else 0
        if want != sim.gstate[gid]:
            raise NetlistError(f"reset state unstable at gate {g.name or g.id}")
    return sim


# -- handshake environment -------------------------------------------------------

def operand_rails(width: int, a: int, b: int, cin: int = 0) -> list[int]:
    bits = [(a >> i) & 1 for i in range(width)] + [(b >> i) & 1 for i in range(width)] + [cin & 1]
    return bits


class RankMonitor:
    """Tracks one register rank's occupancy and emits wavefront markers."""

    def __init__(self, env: "PipelineEnv", rank: int, sigs: Sequence[Sequence[int]]):
        self.env = env
        self.rank = rank
        self.sigs = [tuple(s) for s in sigs]
        self.index = {}
        for i, (r1, r0) in enumerate(self.sigs):
            self.index[r1] = i
            self.index[r0] = i
        self.word = [0] * len(self.sigs)
        self.nonnull = 0
        self.state = "NULL"  # NULL, filling, DATA, draining
        self.counts = {"DATA-start": 0, "DATA-complete": 0, "NULL-start": 0, "NULL-complete": 0}
        self.touched = False

    def update(self, net: int) -> None:
        i = self.index[net]
        vals = self.env.sim.vals
        r1, r0 = self.sigs[i]
        w = (vals[r1] << 1) | vals[r0]
        old = self.word[i]
        if (old != 0) != (w != 0):
            self.nonnull += 1 if w else -1
        self.word[i] = w
        self.touched = True

    def after_step(self, t: int) -> None:
        if not self.touched:
            return
        self.touched = False
        n, full = self.nonnull, len(self.sigs)
        st = self.state
        if st == "NULL" and n > 0:
            self._mark(t, "DATA-start")
            st = "filling"
        if st == "filling" and n == full:
            self._mark(t, "DATA-complete")
            st = "DATA"
        if st == "DATA" and n < full:
            self._mark(t, "NULL-start")
            st = "draining"
        if st == "draining" and n == 0:
            self._mark(t, "NULL-complete")
            st = "NULL"
        self.state = st

    def _mark(self, t: int, event: str) -> None:
        k = self.counts[event]
        self.counts[event] = k + 1
        self.env.sim.trace.markers.append(Marker(t, self.rank, event, k))
        for action in self.env.triggers.pop((self.rank, event, k), ()):
            action(t)


class PipelineEnv:
    """Ideal producer and consumer closing the handshake around a pipeline netlist.

    The producer offers the next wavefront only once every first-rank
    completion copy requests it. The consumer C-element-merges the output
    copies, samples a token when every merged signal is DATA, then requests
    NULL on all last-rank request lines.
    """

    def __init__(self, sim: Simulator, operands: Sequence[Sequence[int]], env_delay: int = 1):
        nl = sim.netlist
        if "ack" not in nl.ports:
            raise NetlistError("netlist has no pipeline handshake ports")
        self.sim = sim
        self.env_delay = env_delay
        self.width = nl.width
        self.ops = [tuple(op) + (0,) * (3 - len(op)) for op in operands]
        lim = 1 << nl.width
        for a, b, c in self.ops:
            if not (0 <= a < lim and 0 <= b < lim and c in (0, 1)):
                raise ValueError(f"operands {(a, b, c)} do not fit width {nl.width}")
        self.pis = [tuple(s) for s in nl.ports["inputs"]]
        self.acks = list(nl.ports["ack"].values())
        self.reqs = list(nl.ports["req"].values())
        outs = nl.ports["outputs"]
        self.copies = sorted(outs)
        self.out_sigs = {c: [tuple(s) for s in outs[c]] for c in self.copies}
        self.n_out = len(self.out_sigs[self.copies[0]])
        self.triggers: dict[tuple[int, str, int], list[Callable[[int], None]]] = {}

        self.sent = 0
        self.p_phase = "data"
        self.merged = [0] * self.n_out
        self.merged_nonnull = 0
        self.c_phase = "data"
        self.tokens: list[int | None] = []
        self.raw: list[list[int]] = []
        self.token_times: list[int] = []
        self._out_index = {}
        for c in self.copies:
            for i, (r1, r0) in enumerate(self.out_sigs[c]):
                self._out_index[r1] = i
                self._out_index[r0] = i
        self._out_dirty: list[int] = []

        self.monitors = [RankMonitor(self, r, ranks["a"]) for r, ranks in enumerate(nl.ports["ranks"])]
        for mon in self.monitors:
            sim.observe(mon.index, mon)
        sim.observe(self.acks, _Producer(self))
        sim.observe(self._out_index, _Consumer(self))
        self._offer(0)

    def when(self, rank: int, event: str, count: int, action: Callable[[int], None]) -> None:
        """Run ``action(t)`` the ``count``-th time (from 0) ``rank`` emits ``event``."""
        self.triggers.setdefault((rank, event, count), []).append(action)

    def _offer(self, t: int) -> None:
        vals = self.sim.vals
        if self.p_phase == "data":
            if self.sent < len(self.ops) and all(vals[n] for n in self.acks):
                bits = operand_rails(self.width, *self.ops[self.sent])
                when = t + self.env_delay
                for (r1, r0), bit in zip(self.pis, bits):
                    self.sim.schedule(when, r1 if bit else r0, 1)
                self.p_phase = "null"
        elif not any(vals[n] for n in self.acks):
            when = t + self.env_delay
            for r1, r0 in self.pis:
                self.sim.schedule(when, r1, 0)
                self.sim.schedule(when, r0, 0)
            self.p_phase = "data"
            self.sent += 1

    def _consume(self, t: int) -> None:
        vals = self.sim.vals
        for i in self._out_dirty:
            old = self.merged[i]
            new = 0
            for bit in (1, 0):
                rails = [vals[self.out_sigs[c][i][1 - bit]] for c in self.copies]
                if all(rails):
                    new |= 1 << bit
                elif any(rails):
                    new |= old & (1 << bit)
            if (old != 0) != (new != 0):
                self.merged_nonnull += 1 if new else -1
            self.merged[i] = new
        self._out_dirty = []
        if self.c_phase == "data" and self.merged_nonnull == self.n_out:
            self.tokens.append(self._decode(self.merged))
            self.raw.append(list(self.merged))
            self.token_times.append(t)
            for n in self.reqs:
                self.sim.schedule(t + self.env_delay, n, 0)
            self.c_phase = "null"
        elif self.c_phase == "null" and self.merged_nonnull == 0:
            for n in self.reqs:
                self.sim.schedule(t + self.env_delay, n, 1)
            self.c_phase = "data"

    @staticmethod
    def _decode(words: Sequence[int]) -> int | None:
        value = 0
        for i, w in enumerate(words):
            if w == 0b11 or w == 0:
                return None
            if w == 0b10:
                value |= 1 << i
        return value

    @property
    def done(self) -> bool:
        return len(self.tokens) >= len(self.ops)


class _Producer:
    def __init__(self, env):
        self.env = env

    def update(self, net):
        pass

    def after_step(self, t):
        self.env._offer(t)


class _Consumer:
    def __init__(self, env):
        self.env = env

    def update(self, net):
        self.env._out_dirty.append(self.env._out_index[net])

    def after_step(self, t):
        self.env._consume(t)


@dataclass
class PipelineResult:
    tokens: list[int | None]
    status: str
    t_dd_avg: float | None
    token_times: list[int]
    transitions: int
    end_time: int
    trace: Trace
    raw: list[list[int]] = field(default_factory=list)

    def summary(self) -> dict:
        return {"tokens": self.tokens, "t_dd_avg": self.t_dd_avg, "status": self.status}

    def to_json(self) -> str:
        return json.dumps(self.summary())


def oracle_sum(a: int, b: int, cin: int = 0) -> int:
    return a + b + cin


def default_max_time(delay: DelayModel, n_tokens: int) -> int:
    return 10_000 * delay.max_delay * max(1, n_tokens)


def run_pipeline(sim: Simulator | Netlist, operands: Sequence[Sequence[int]], delay: DelayModel | None = None,
                 max_time: int | None = None, env_delay: int = 1, record: bool = False,
                 setup: Callable[[PipelineEnv], None] | None = None) -> PipelineResult:
    """Stream operand tokens through a pipeline netlist and collect the result tokens.

    ``setup`` receives the environment before the run starts, which is where
    fault injections hook onto wavefront markers.
    """
    if isinstance(sim, Netlist):
        sim = Simulator(sim, delay, record)
    elif delay is not None and delay != sim.delay:
        raise ValueError("simulator was built with a different delay model")
    env = PipelineEnv(sim, operands, env_delay)
    if setup is not None:
        setup(env)
    if max_time is None:
        max_time = default_max_time(sim.delay, len(env.ops))
    status = sim.run(max_time)
    if status != TIMEOUT:
        status = detect_deadlock(sim, len(env.ops), env)
    times = env.token_times
    t_dd = (times[-1] - times[0]) / (len(times) - 1) if len(times) > 1 else None
    return PipelineResult(env.tokens, status, t_dd, times, sim.transitions, sim.time, sim.trace, env.raw)


def detect_deadlock(sim: Simulator, expected: int, env: PipelineEnv) -> str:
    if sim.pending():
        return PROGRESSING
    return COMPLETED if len(env.tokens) >= expected else DEADLOCKED
