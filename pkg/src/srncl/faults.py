"""Single-event-upset injection, outcome classification and fault campaigns."""

from __future__ import annotations

import csv
import io
import json
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .ncl import lookup_gate
from .netlist import Gate, Netlist, PartitionSpec
from .sim import COMPLETED, DEADLOCKED, TIMEOUT, DelayModel, PipelineEnv, Simulator, oracle_sum, run_pipeline

PHASES = ("DATA", "NULL")

CASE_I = "S1-CaseI"
CASE_II = "S1-CaseII"
CASE_III = "S1-CaseIII"
S2 = "S2"
CONTROL = "ControlPath"
SCENARIOS = (CASE_I, CASE_II, CASE_III, S2, CONTROL)

EXACT = "ExactRecovery"
APPROX = "LegalApproximate"
ILLEGAL = "IllegalEscape"
DEADLOCK = "Deadlock"
TIMEOUT_OUT = "Timeout"
SKIPPED = "Skipped"
OUTCOMES = (EXACT, APPROX, ILLEGAL, DEADLOCK, TIMEOUT_OUT)

CSV_COLUMNS = ["site_id", "role", "copy", "phase", "scenario", "seed", "operand_a", "operand_b",
               "outcome", "error_magnitude", "time_to_recover"]


@dataclass(frozen=True)
class FaultSpec:
    """One SEU. ``model`` is ``invert`` (output held inverted for ``duration``) or ``flip``.

    The trigger is either an absolute ``time`` or a wavefront: the ``token``-th
    time register rank ``stage`` starts its ``phase`` (DATA or NULL).
    """

    gate: int
    model: str = "invert"
    duration: int = 1
    time: int | None = None
    stage: int | None = None
    phase: str | None = None
    token: int = 1

    def __post_init__(self):
        if self.model not in ("invert", "flip"):
            raise ValueError(f"unknown SEU model {self.model!r}")
        if self.model == "invert" and self.duration < 1:
            raise ValueError("output-invert duration must be at least 1")
        if (self.time is None) == (self.phase is None):
            raise ValueError("give exactly one of an absolute time or a phase trigger")
        if self.phase is not None and self.phase not in PHASES:
            raise ValueError(f"phase must be DATA or NULL, not {self.phase!r}")


@dataclass
class Outcome:
    kind: str
    error: int = 0
    tokens: list = field(default_factory=list)
    expected: list = field(default_factory=list)
    injected_at: int | None = None
    time_to_recover: int | None = None
    status: str = COMPLETED

    @property
    def evidence(self) -> dict:
        return {"tokens": self.tokens, "expected": self.expected, "injected_at": self.injected_at,
                "status": self.status}


@dataclass(frozen=True)
class Site:
    gate: int
    phase: str
    scenario: str
    role: str
    copy: str
    stage: int


def scenario_tag(gate: Gate, phase: str) -> str:
    if gate.role == "CD":
        return CONTROL
    if phase == "NULL":
        return S2
    if gate.role == "CL_LSU" or gate.copy == "shared":
        return CASE_II
    if gate.role == "ISC":
        return CASE_III
    return CASE_I


def enumerate_sites(netlist: Netlist, roles: Iterable[str] | None = None, copies: Iterable[str] | None = None,
                    phases: Iterable[str] | None = None, scenarios: Iterable[str] | None = None) -> list[Site]:
    roles = None if roles is None else set(roles)
    copies = None if copies is None else set(copies)
    phases = PHASES if phases is None else tuple(phases)
    scenarios = None if scenarios is None else set(scenarios)
    sites = []
    for g in netlist.gates:
        if not g.role or not g.copy:
            raise ValueError(f"gate {g.id} is not role-annotated")
        if roles is not None and g.role not in roles:
            continue
        if copies is not None and g.copy not in copies:
            continue
        for ph in phases:
            tag = scenario_tag(g, ph)
            if scenarios is None or tag in scenarios:
                sites.append(Site(g.id, ph, tag, g.role, g.copy, g.stage))
    return sites


def error_bound(partition: PartitionSpec) -> int:
    """Worst-case |approximate - exact| when all LSU sum bits and the LSU carry are wrong."""
    return (1 << (partition.l + 1)) - 1


def allowed(scenario: str, outcome: Outcome, bound: int | None) -> bool:
    if outcome.kind == EXACT:
        return True
    if scenario == CASE_II and outcome.kind == APPROX:
        return bound is not None and outcome.error <= bound
    return False


def classify(tokens: Sequence, expected: Sequence[int], status: str) -> tuple[str, int]:
    if status == TIMEOUT:
        return TIMEOUT_OUT, 0
    if status == DEADLOCKED or len(tokens) < len(expected):
        return DEADLOCK, 0
    if any(t is None for t in tokens):
        return ILLEGAL, 0
    err = max(abs(t - e) for t, e in zip(tokens, expected))
    return (EXACT, 0) if err == 0 else (APPROX, err)


def inject(env: PipelineEnv, fault: FaultSpec, record: dict) -> None:
    """Arm ``fault`` on a live pipeline environment; ``record['at']`` gets the injection time."""
    sim = env.sim

    def fire(t: int) -> None:
        record["at"] = t
        if fault.model == "invert":
            sim.invert_output(fault.gate, fault.duration, at=t)
        else:
            sim.flip_state(fault.gate, at=t)

    if fault.time is not None:
        sim.at(fault.time, lambda: fire(fault.time))
    else:
        event = "DATA-start" if fault.phase == "DATA" else "NULL-start"
        env.when(fault.stage, event, fault.token, lambda t: fire(t + 1))


def run_single_fault_experiment(netlist: Netlist, operands: Sequence[Sequence[int]], fault: FaultSpec | None,
                                delay: DelayModel | None = None, max_time: int | None = None,
                                env_delay: int = 1) -> Outcome:
    ops = [tuple(op) + (0,) * (3 - len(op)) for op in operands]
    expected = [oracle_sum(*op) for op in ops]
    record: dict = {}
    setup = None if fault is None else (lambda env: inject(env, fault, record))
    res = run_pipeline(Simulator(netlist, delay), ops, max_time=max_time, env_delay=env_delay, setup=setup)
    if fault is not None and "at" not in record:
        return Outcome(SKIPPED, tokens=res.tokens, expected=expected, status=res.status)
    kind, err = classify(res.tokens, expected, res.status)
    at = record.get("at")
    ttr = None
    if at is not None:
        after = [t for t in res.token_times if t >= at]
        ttr = after[0] - at if after else None
    return Outcome(kind, err, res.tokens, expected, at, ttr, res.status)


@dataclass
class ScenarioStats:
    sites: int = 0
    outcomes: Counter = field(default_factory=Counter)
    max_error: int = 0
    violations: list = field(default_factory=list)

    def merge(self, other: "ScenarioStats") -> "ScenarioStats":
        return ScenarioStats(self.sites + other.sites, self.outcomes + other.outcomes,
                             max(self.max_error, other.max_error), sorted(self.violations + other.violations))


@dataclass
class CampaignReport:
    per_scenario: dict[str, ScenarioStats] = field(default_factory=dict)
    rows: list[dict] = field(default_factory=list)
    control_failures: list = field(default_factory=list)
    skipped: int = 0

    @property
    def violations(self) -> list:
        return [v for s in self.per_scenario.values() for v in s.violations]

    @property
    def total_sites(self) -> int:
        return sum(s.sites for s in self.per_scenario.values())

    def histogram(self) -> Counter:
        total = Counter()
        for s in self.per_scenario.values():
            total += s.outcomes
        return total

    def merge(self, other: "CampaignReport") -> "CampaignReport":
        keys = set(self.per_scenario) | set(other.per_scenario)
        merged = {k: self.per_scenario.get(k, ScenarioStats()).merge(other.per_scenario.get(k, ScenarioStats()))
                  for k in keys}
        rows = sorted(self.rows + other.rows, key=_row_key)
        return CampaignReport(merged, rows, sorted(self.control_failures + other.control_failures),
                              self.skipped + other.skipped)

    def summary(self) -> dict:
        return {
            "total_sites": self.total_sites,
            "skipped": self.skipped,
            "control_failures": self.control_failures,
            "scenarios": {
                k: {"sites": s.sites, "outcomes": dict(sorted(s.outcomes.items())), "max_error": s.max_error,
                    "violations": s.violations}
                for k, s in sorted(self.per_scenario.items())
            },
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: r[k] for k in CSV_COLUMNS})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _row_key(r: dict):
    return (r["site_id"], r["phase"], r["model"], r["seed"] if r["seed"] is not None else -1,
            r["operand_a"], r["operand_b"], r["cin"])


def experiment_tokens(operands: Sequence[Sequence[int]], j: int) -> list[tuple]:
    """Token window around operand ``j``: one token before it and two after."""
    n = len(operands)
    return [tuple(operands[(j + d) % n]) for d in (-1, 0, 1, 2)]


def _delay_for(seed, d_max: int) -> DelayModel:
    return DelayModel.unit() if seed is None else DelayModel.random(seed, 1, d_max)


def run_campaign(netlist: Netlist, operands: Sequence[Sequence[int]], sites: Sequence[Site] | None = None,
                 seeds: Sequence[int | None] = (None,), models: Sequence[str] = ("invert", "flip"),
                 duration: tuple[int, int] = (1, 3), d_max: int = 8, rng_seed: int = 0) -> CampaignReport:
    """Every site x operand x delay seed, once per SEU model (state flips only on hysteresis gates).

    ``None`` in ``seeds`` means unit delays. Each experiment streams four
    tokens and injects on the second one, so the report also shows that the
    pipeline flushes the upset before the two following tokens.
    """
    if not operands:
        raise ValueError("campaign needs at least one operand")
    ops = [tuple(op) + (0,) * (3 - len(op)) for op in operands]
    if sites is None:
        sites = enumerate_sites(netlist)
    bound = error_bound(netlist.partition) if netlist.partition is not None else None
    report = CampaignReport()
    for s in {s.scenario for s in sites}:
        report.per_scenario[s] = ScenarioStats()
    for s in sites:
        report.per_scenario[s.scenario].sites += 1

    for seed in seeds:
        delay = _delay_for(seed, d_max)
        for j, op in enumerate(ops):
            ctl = run_single_fault_experiment(netlist, experiment_tokens(ops, j), None, delay)
            if ctl.kind != EXACT:
                report.control_failures.append((seed if seed is not None else -1, list(op), ctl.kind))

    for site in sites:
        gate = netlist.gates[site.gate]
        site_models = [m for m in models if m == "invert" or lookup_gate(gate.kind).has_hysteresis]
        stats = report.per_scenario[site.scenario]
        for seed in seeds:
            delay = _delay_for(seed, d_max)
            for j, op in enumerate(ops):
                rng = random.Random(f"{rng_seed}/{site.gate}/{site.phase}/{seed}/{j}")
                for model in site_models:
                    fault = FaultSpec(site.gate, model, rng.randint(*duration), stage=gate.stage, phase=site.phase)
                    out = run_single_fault_experiment(netlist, experiment_tokens(ops, j), fault, delay)
                    if out.kind == SKIPPED:
                        report.skipped += 1
                        continue
                    stats.outcomes[out.kind] += 1
                    if out.kind == APPROX:
                        stats.max_error = max(stats.max_error, out.error)
                    if not allowed(site.scenario, out, bound):
                        stats.violations.append((site.gate, site.phase, model, seed if seed is not None else -1,
                                                 list(op), out.kind, out.error))
                    report.rows.append({
                        "site_id": site.gate, "role": site.role, "copy": site.copy, "phase": site.phase,
                        "scenario": site.scenario, "seed": seed, "model": model, "operand_a": op[0],
                        "operand_b": op[1], "cin": op[2], "outcome": out.kind, "error_magnitude": out.error,
                        "time_to_recover": out.time_to_recover,
                    })
    report.rows.sort(key=_row_key)
    return report


def invert_carry_rail(netlist: Netlist) -> Netlist:
    """Copy of an SR netlist whose LSU carry reaches both ISC banks with its rails swapped.

    This is a standing inversion of the carry Q between LSU and MSU, the
    gate-level counterpart of ``metrics.approximate_add(..., corrupt_carry=True)``.
    """
    if netlist.arch != "sr":
        raise ValueError("carry-rail inversion needs an sr netlist")
    gates = []
    hit = 0
    for g in netlist.gates:
        if g.role == "ISC" and g.name.split(".")[2:3] == ["q"]:
            g = replace(g, inputs=(g.inputs[1], g.inputs[0]) + g.inputs[2:])
            hit += 1
        gates.append(g)
    if hit != 2 * len(netlist.copies):
        raise ValueError("netlist has no recognisable carry ISC gates")
    return replace(netlist, gates=gates, meta={**netlist.meta, "fault": "carry-rail-inverted"})
