"""srncl command line: gen, sim, campaign, compare, image.

Settings come from built-in defaults, then an optional JSON ``--config`` file
(top-level keys, or a section named after the command), then flags. The
effective settings are echoed into every JSON the command writes.

Exit codes: 0 ok, 2 invalid config, 3 oracle mismatch, 4 deadlock, 5 timeout,
6 campaign violations.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .build import build_pipeline
from .faults import PHASES, SCENARIOS, CampaignReport, enumerate_sites, run_campaign
from .metrics import (PARTITIONS, InvalidInput, compare_designs, image_study, load_test_images, pgm_bytes, read_pgm,
                      rows_to_csv, rows_to_json)
from .ncl import NetlistError
from .netlist import ROLES, Netlist, count_gates, estimate_transistors
from .sim import COMPLETED, TIMEOUT, DelayModel, oracle_sum, run_pipeline

log = logging.getLogger("srncl")

EXIT_OK, EXIT_CONFIG, EXIT_MISMATCH, EXIT_DEADLOCK, EXIT_TIMEOUT, EXIT_VIOLATIONS = 0, 2, 3, 4, 5, 6
OUT_ENV = "SRNCL_OUT_DIR"
EXHAUSTIVE_CAP = 8

DEFAULTS = {
    "gen": {"arch": "sr", "width": 8, "lsu": None, "stages": 2, "group": 4, "lsu_group": 3, "isc_force": 0,
            "output": None},
    "sim": {"netlist": None, "operands": None, "random": 100, "exhaustive": False, "allow_large": False,
            "seed": 0, "delay": "unit", "delay_seed": 0, "d_min": 1, "d_max": 8, "max_time": None,
            "trace": None, "output": None},
    "campaign": {"netlist": None, "role": None, "copy": None, "phase": None, "scenario": None, "random": 5,
                 "operands": None, "seed": 0, "delay_seeds": None, "d_max": 8, "models": "invert,flip",
                 "jobs": 1, "output": None},
    "compare": {"design": None, "random": 50, "seed": 0, "output": None},
    "image": {"image_a": None, "image_b": None, "partitions": ",".join(map(str, PARTITIONS)), "p": 1.0,
              "seed": 0, "output": None},
}


class ConfigError(Exception):
    pass


# -- plumbing ---------------------------------------------------------------------

def atomic_write(path: Path, data: str | bytes) -> None:
    """Write-temp-then-rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def out_dir(args) -> Path:
    return Path(args.out_dir or os.environ.get(OUT_ENV) or ".")


def out_path(args, cfg, default_name: str) -> Path:
    return Path(cfg["output"]) if cfg.get("output") else out_dir(args) / default_name


def effective_config(command: str, args) -> dict:
    cfg = dict(DEFAULTS[command])
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
        layered = {k: v for k, v in raw.items() if k in cfg}
        layered.update({k: v for k, v in raw.get(command, {}).items() if k in cfg})
        unknown = set(raw.get(command, {})) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown {command} settings in config: {sorted(unknown)}")
        cfg.update(layered)
    for k in cfg:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def load_netlist(path) -> Netlist:
    if not path:
        raise ConfigError("--netlist is required")
    try:
        return Netlist.from_json(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read netlist: {e}") from None


def parse_operands(text: str, width: int) -> list[tuple[int, int, int]]:
    """``a+b`` or ``a+b+cin`` items separated by commas."""
    ops = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            parts = [int(p, 0) for p in item.split("+")]
        except ValueError:
            raise ConfigError(f"bad operand {item!r}") from None
        if len(parts) not in (2, 3):
            raise ConfigError(f"operand {item!r} should be a+b or a+b+cin")
        a, b, c = (parts + [0])[:3]
        if not (0 <= a < 1 << width and 0 <= b < 1 << width and c in (0, 1)):
            raise ConfigError(f"operand {item!r} out of range for width {width}")
        ops.append((a, b, c))
    if not ops:
        raise ConfigError("empty operand list")
    return ops


def operand_source(cfg, width: int) -> tuple[list[tuple[int, int, int]], dict]:
    if cfg.get("operands"):
        return parse_operands(cfg["operands"], width), {"source": "explicit"}
    if cfg.get("exhaustive"):
        if width > EXHAUSTIVE_CAP and not cfg.get("allow_large"):
            raise ConfigError(f"exhaustive operands capped at width {EXHAUSTIVE_CAP}; pass --allow-large")
        return [(a, b, c) for a in range(1 << width) for b in range(1 << width) for c in (0, 1)], \
            {"source": "exhaustive"}
    n = int(cfg["random"])
    if n < 1:
        raise ConfigError("--random needs a positive count")
    rng = random.Random(cfg["seed"])
    ops = [(rng.randrange(1 << width), rng.randrange(1 << width), 0) for _ in range(n)]
    return ops, {"source": "random", "count": n, "seed": cfg["seed"]}


def delay_model(cfg) -> DelayModel:
    if cfg["delay"] == "unit":
        return DelayModel.unit()
    if cfg["delay"] == "random":
        return DelayModel.random(cfg["delay_seed"], cfg["d_min"], cfg["d_max"])
    raise ConfigError(f"unknown delay model {cfg['delay']!r}")


def parse_design(text: str) -> tuple[str, Netlist]:
    """``dmr8``, ``ncl16``, ``sr8:3`` (LSU width) or a netlist JSON path, optionally ``label=...``."""
    label, _, spec = text.rpartition("=")
    spec = spec.strip()
    if spec.endswith(".json") or os.path.sep in spec:
        nl = load_netlist(spec)
        return label or Path(spec).stem, nl
    arch = spec.rstrip("0123456789:").lower()
    rest = spec[len(arch):]
    width, _, lsu = rest.partition(":")
    if arch not in ("ncl", "dmr", "sr") or not width.isdigit():
        raise ConfigError(f"bad design {text!r}; use e.g. dmr8, sr8:3 or a netlist path")
    return label or spec, build_pipeline(arch, int(width), int(lsu) if lsu else None)


# -- commands ------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = effective_config("gen", args)
    nl = build_pipeline(cfg["arch"], cfg["width"], cfg["lsu"], cfg["stages"], cfg["group"], cfg["isc_force"],
                        cfg["lsu_group"])
    nl.meta["config"] = {k: v for k, v in cfg.items() if k != "output"}
    name = f"{cfg['arch']}{cfg['width']}" + (f"_l{cfg['lsu']}" if cfg["lsu"] else "") + ".json"
    path = out_path(args, cfg, name)
    atomic_write(path, nl.to_json(indent=1) + "\n")
    hist = count_gates(nl)
    print(f"{path}: {len(nl.gates)} gates, ~{estimate_transistors(nl)} transistors"
          + (f", partition {nl.partition}" if nl.partition else ""))
    for kind, n in sorted(hist.items()):
        print(f"  {kind:8s} {n}")
    return EXIT_OK


def cmd_sim(args) -> int:
    cfg = effective_config("sim", args)
    nl = load_netlist(cfg["netlist"])
    ops, src = operand_source(cfg, nl.width)
    delay = delay_model(cfg)
    res = run_pipeline(nl, ops, delay=delay, max_time=cfg["max_time"], record=bool(cfg["trace"]))
    expected = [oracle_sum(*op) for op in ops]
    mismatches = sum(1 for t, e in zip(res.tokens, expected) if t != e)
    doc = {
        "config": {k: v for k, v in cfg.items() if k not in ("output", "trace")},
        "operands": src, "status": res.status, "tokens": res.tokens, "expected": expected,
        "mismatches": mismatches, "t_dd_avg": res.t_dd_avg, "transitions": res.transitions,
        "end_time": res.end_time,
    }
    path = out_path(args, cfg, "tokens.json")
    atomic_write(path, dump_json(doc))
    if cfg["trace"]:
        atomic_write(Path(cfg["trace"]), res.trace.to_text())
    print(f"{path}: {len(res.tokens)}/{len(ops)} tokens, status {res.status}, {mismatches} mismatches")
    if res.status == TIMEOUT:
        return EXIT_TIMEOUT
    if res.status != COMPLETED:
        return EXIT_DEADLOCK
    return EXIT_MISMATCH if mismatches or len(res.tokens) != len(ops) else EXIT_OK


def _campaign_chunk(job):
    nl_json, ops, sites, seeds, models, d_max, seed = job
    return run_campaign(Netlist.from_json(nl_json), ops, sites, seeds=seeds, models=models, d_max=d_max,
                        rng_seed=seed)


def cmd_campaign(args) -> int:
    cfg = effective_config("campaign", args)
    nl = load_netlist(cfg["netlist"])
    ops, src = operand_source(cfg, nl.width)
    split = lambda v: None if not v else [x.strip() for x in (v.split(",") if isinstance(v, str) else v)]
    sites = enumerate_sites(nl, roles=split(cfg["role"]), copies=split(cfg["copy"]), phases=split(cfg["phase"]),
                            scenarios=split(cfg["scenario"]))
    if not sites:
        raise ConfigError("the filters select no fault sites")
    seeds = [None] if not cfg["delay_seeds"] else [int(s) for s in split(str(cfg["delay_seeds"]))]
    models = tuple(split(cfg["models"]))
    if not set(models) <= {"invert", "flip"}:
        raise ConfigError(f"unknown fault models {models}")
    jobs = max(1, int(cfg["jobs"]))
    if jobs == 1:
        report = run_campaign(nl, ops, sites, seeds=seeds, models=models, d_max=cfg["d_max"], rng_seed=cfg["seed"])
    else:
        chunks = [sites[i::jobs] for i in range(jobs)]
        text = nl.to_json()
        work = [(text, ops, c, seeds, models, cfg["d_max"], cfg["seed"]) for c in chunks if c]
        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_campaign_chunk, work))
        report = CampaignReport()
        for p in parts:
            report = report.merge(p)
        # every chunk replays the fault-free controls; keep one copy
        report.control_failures = sorted({tuple(map(str, f)) for f in report.control_failures})
    base = out_dir(args) if not cfg["output"] else Path(cfg["output"])
    summary = report.summary()
    summary["config"] = {k: v for k, v in cfg.items() if k != "output"}
    summary["operands"] = src
    summary["violation_count"] = len(report.violations)
    atomic_write(base / "campaign.csv", report.to_csv())
    atomic_write(base / "summary.json", dump_json(summary))
    print(f"{base}: {report.total_sites} sites, {len(report.rows)} runs, {len(report.violations)} violations")
    for k, s in sorted(report.per_scenario.items()):
        print(f"  {k:11s} sites={s.sites:4d} {dict(sorted(s.outcomes.items()))} max_error={s.max_error}")
    return EXIT_VIOLATIONS if report.violations or report.control_failures else EXIT_OK


def cmd_compare(args) -> int:
    cfg = effective_config("compare", args)
    specs = cfg["design"] or ["dmr8", "sr8:3"]
    designs = [parse_design(s) for s in specs]
    widths = {nl.width for _, nl in designs}
    if len(widths) != 1:
        raise ConfigError(f"designs differ in width: {sorted(widths)}")
    rng = random.Random(cfg["seed"])
    w = widths.pop()
    ops = [(rng.randrange(1 << w), rng.randrange(1 << w), 0) for _ in range(int(cfg["random"]))]
    rows = compare_designs(designs, ops)
    base = out_dir(args) if not cfg["output"] else Path(cfg["output"])
    atomic_write(base / "compare.csv", rows_to_csv(rows))
    doc = {"config": {k: v for k, v in cfg.items() if k != "output"}, "rows": json.loads(rows_to_json(rows))}
    atomic_write(base / "compare.json", dump_json(doc))
    print(rows_to_csv(rows), end="")
    return EXIT_OK


def cmd_image(args) -> int:
    cfg = effective_config("image", args)
    if bool(cfg["image_a"]) != bool(cfg["image_b"]):
        raise ConfigError("give both --image-a and --image-b, or neither for the shipped scene")
    if cfg["image_a"]:
        for p in (cfg["image_a"], cfg["image_b"]):
            if not Path(p).is_file():
                raise ConfigError(f"missing image {p}")
        a, b = read_pgm(cfg["image_a"]), read_pgm(cfg["image_b"])
    else:
        a, b = load_test_images()
    parts = [int(x) for x in str(cfg["partitions"]).split(",")]
    ref, runs = image_study(a, b, parts, p=float(cfg["p"]), seed=cfg["seed"])
    base = out_dir(args) if not cfg["output"] else Path(cfg["output"])
    atomic_write(base / "accurate.pgm", pgm_bytes(ref))
    table = []
    for l, img, q in runs:
        atomic_write(base / f"recon_l{l}.pgm", pgm_bytes(img))
        rep = {"partition": f"{32 - l}|{l}", "lsu": l, **q.to_dict()}
        atomic_write(base / f"quality_l{l}.json", dump_json(rep))
        table.append(rep)
        print(f"  {32 - l:2d}|{l:<2d}  psnr={rep['psnr_db'] if isinstance(rep['psnr_db'], str) else round(rep['psnr_db'], 2)}"
              f"  ssim={q.ssim:.4f}  {q.band}")
    doc = {"config": {k: v for k, v in cfg.items() if k != "output"}, "runs": table}
    atomic_write(base / "image_study.json", dump_json(doc))
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="srncl", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON file of settings (flags override it)")
    ap.add_argument("--out-dir", help=f"default output directory (else ${OUT_ENV}, else .)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a pipeline netlist as JSON")
    g.add_argument("--arch", choices=("ncl", "dmr", "sr"))
    g.add_argument("--width", type=int)
    g.add_argument("--lsu", type=int, help="LSU width L (sr only)")
    g.add_argument("--stages", type=int, help="register ranks after the adder")
    g.add_argument("--group", type=int, help="carry-lookahead group size")
    g.add_argument("--lsu-group", type=int, help="lookahead group size of the shared LSU sum bits (sr only)")
    g.add_argument("--isc-force", type=int, choices=(0, 1), help="rail an ILLEGAL input is forced to")
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_gen)

    def operand_flags(p):
        p.add_argument("--operands", help="explicit list, e.g. '3+4,255+1+1'")
        p.add_argument("--random", type=int, help="number of seeded random operand pairs")
        p.add_argument("--seed", type=int, help="operand generator seed")

    s = sub.add_parser("sim", help="stream operands through a netlist")
    s.add_argument("--netlist")
    operand_flags(s)
    s.add_argument("--exhaustive", action="store_true", default=None)
    s.add_argument("--allow-large", action="store_true", default=None, help="lift the exhaustive width cap")
    s.add_argument("--delay", choices=("unit", "random"))
    s.add_argument("--delay-seed", type=int)
    s.add_argument("--d-min", type=int)
    s.add_argument("--d-max", type=int)
    s.add_argument("--max-time", type=int)
    s.add_argument("--trace", help="write a 'time net value' trace here")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_sim)

    c = sub.add_parser("campaign", help="single-fault sweep over gate sites")
    c.add_argument("--netlist")
    operand_flags(c)
    c.add_argument("--role", help=f"comma list of {', '.join(ROLES)}")
    c.add_argument("--copy", help="comma list of a, b, shared")
    c.add_argument("--phase", help=f"comma list of {', '.join(PHASES)}")
    c.add_argument("--scenario", help=f"comma list of {', '.join(SCENARIOS)}")
    c.add_argument("--delay-seeds", help="comma list of random-delay seeds (default: unit delays)")
    c.add_argument("--d-max", type=int)
    c.add_argument("--models", help="invert,flip")
    c.add_argument("--jobs", type=int, help="worker processes")
    c.add_argument("-o", "--output", help="output directory")
    c.set_defaults(func=cmd_campaign)

    m = sub.add_parser("compare", help="area / T_DD / switching table")
    m.add_argument("--design", action="append", help="dmr8, sr8:3, ncl16 or netlist.json (repeatable)")
    m.add_argument("--random", type=int)
    m.add_argument("--seed", type=int)
    m.add_argument("-o", "--output", help="output directory")
    m.set_defaults(func=cmd_compare)

    i = sub.add_parser("image", help="approximate-adder image averaging study")
    i.add_argument("--image-a")
    i.add_argument("--image-b")
    i.add_argument("--partitions", help="comma list of LSU widths")
    i.add_argument("--p", type=float, help="per-addition carry corruption probability")
    i.add_argument("--seed", type=int)
    i.add_argument("-o", "--output", help="output directory")
    i.set_defaults(func=cmd_image)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, NetlistError, InvalidInput, ValueError) as e:
        print(f"srncl {args.command}: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
