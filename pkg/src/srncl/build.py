"""Netlist builders: dual-rail CLA, registers, completion detection, ISC, pipelines.

A dual-rail signal is a ``(rail1, rail0)`` pair of net ids throughout.
"""

from __future__ import annotations

from typing import Sequence

from .ncl import INV, ISC0, ISC1, NetlistError, lookup_gate
from .netlist import Gate, Netlist, PartitionSpec

Sig = tuple[int, int]

AND_KINDS = {2: "TH22", 3: "TH33", 4: "TH44"}
OR_KINDS = {2: "TH12", 3: "TH13", 4: "TH14"}


class Builder:
    def __init__(self):
        self.gates: list[Gate] = []
        self.names: list[str] = []
        self.drivers: list[int | None] = []
        # annotation context for add(); builders set it before emitting a block
        self.stage = 0
        self.role = "CL_MSU"
        self.copy = "a"
        self.bit: int | None = None

    def net(self, name: str) -> int:
        self.names.append(name)
        self.drivers.append(None)
        return len(self.names) - 1

    def signal(self, name: str) -> Sig:
        return self.net(name + ".1"), self.net(name + ".0")

    def add(self, kind: str, inputs: Sequence[int], name: str, out: int | None = None) -> int:
        spec = lookup_gate(kind)
        if len(inputs) != spec.n:
            raise NetlistError(f"{kind} needs {spec.n} inputs, got {len(inputs)}")
        if out is None:
            out = self.net(name)
        elif self.drivers[out] is not None:
            raise NetlistError(f"net {self.names[out]} already driven")
        gid = len(self.gates)
        self.gates.append(Gate(gid, kind, spec.m, spec.weights, tuple(inputs), out,
                               self.stage, self.role, self.copy, self.bit, name))
        self.drivers[out] = gid
        return out

    def c_and(self, nets: Sequence[int], name: str) -> int:
        """C-element AND of 1..7 nets; above four the partial products are joined by a TH22."""
        nets = list(nets)
        if len(nets) == 1:
            return nets[0]
        if len(nets) <= 4:
            return self.add(AND_KINDS[len(nets)], nets, name)
        head = self.add("TH44", nets[:4], name + ".h")
        return self.c_and([head] + nets[4:], name)

    def c_or(self, nets: Sequence[int], name: str) -> int:
        nets = list(nets)
        if len(nets) == 1:
            return nets[0]
        if len(nets) <= 4:
            return self.add(OR_KINDS[len(nets)], nets, name)
        head = self.add("TH14", nets[:4], name + ".h")
        return self.c_or([head] + nets[4:], name)

    def finish(self, arch, width, partition, stages, ports, isc_force=0, meta=None) -> Netlist:
        nl = Netlist(arch, width, partition, stages, self.gates, self.names, self.drivers,
                     ports, isc_force, meta or {})
        nl.validate()
        return nl


def cla(b: Builder, xs: Sequence[Sig], ys: Sequence[Sig], cin: Sig, prefix: str,
        base_bit: int = 0, group: int = 4, flat_cout: bool = False) -> tuple[list[Sig], Sig]:
    """Input-complete dual-rail carry-lookahead adder; returns (sums, carry-out).

    Carries inside each ``group``-bit block are flat sum-of-products over the
    block's generate/kill/propagate terms, so exactly one product asserts per
    carry rail and every product is observed at some sum output. With
    ``flat_cout`` the carry-out alone is one flat lookahead over all bits, which
    shortens the path from the low bits to the carry-out.
    """
    n = len(xs)
    gen, kill, prop, nprop = [], [], [], []
    for i, ((x1, x0), (y1, y0)) in enumerate(zip(xs, ys)):
        b.bit = base_bit + i
        p = f"{prefix}.b{base_bit + i}"
        g = b.add("TH22", (x1, y1), p + ".g")
        k = b.add("TH22", (x0, y0), p + ".k")
        t1 = b.add("TH22", (x1, y0), p + ".t1")
        t2 = b.add("TH22", (x0, y1), p + ".t2")
        gen.append(g)
        kill.append(k)
        prop.append(b.add("TH12", (t1, t2), p + ".p"))
        nprop.append(b.add("TH12", (g, k), p + ".np"))

    carries: list[Sig] = [cin]
    for start in range(0, n, group):
        c_in = carries[start]
        for t in range(1, min(group, n - start) + 1):
            j = start + t  # carry into bit j
            if flat_cout and j == n:
                start, t, c_in = 0, n, cin
            b.bit = j if j < n else n - 1
            b.bit += base_bit
            rails = []
            for rail, terms_src, cbit in ((1, gen, c_in[0]), (0, kill, c_in[1])):
                terms = []
                for u in range(t):  # term: p[j-1] .. p[j-u] * src[j-u-1]
                    lits = [prop[j - 1 - v] for v in range(u)] + [terms_src[j - 1 - u]]
                    terms.append(b.c_and(lits, f"{prefix}.c{base_bit + j}.r{rail}.t{u}"))
                lits = [prop[start + v] for v in range(t)] + [cbit]
                terms.append(b.c_and(lits, f"{prefix}.c{base_bit + j}.r{rail}.tc"))
                rails.append(b.c_or(terms, f"{prefix}.c{base_bit + j}.{rail}"))
            carries.append((rails[0], rails[1]))

    sums = []
    for i in range(n):
        b.bit = base_bit + i
        p = f"{prefix}.b{base_bit + i}"
        c1, c0 = carries[i]
        a = b.add("TH22", (prop[i], c0), p + ".s1a")
        bb = b.add("TH22", (nprop[i], c1), p + ".s1b")
        c = b.add("TH22", (prop[i], c1), p + ".s0a")
        d = b.add("TH22", (nprop[i], c0), p + ".s0b")
        sums.append((b.add("TH12", (a, bb), p + ".s.1"), b.add("TH12", (c, d), p + ".s.0")))
    b.bit = None
    return sums, carries[n]


def register(b: Builder, sigs: Sequence[Sig], ki: Sequence[int], prefix: str) -> list[Sig]:
    """One register rail per input rail: TH22 with a single request, TH33w2 with two.

    TH33w2 (weights 2,1,1) latches DATA once either (merged) request is rfd
    but only returns to NULL when the input and both requests are low.
    """
    kind = {1: "TH22", 2: "TH33w2"}[len(ki)]
    out = []
    for i, (r1, r0) in enumerate(sigs):
        b.bit = i
        out.append((b.add(kind, (r1, *ki), f"{prefix}.{i}.1"), b.add(kind, (r0, *ki), f"{prefix}.{i}.0")))
    b.bit = None
    return out


def merge(b: Builder, own: Sequence[Sig], other: Sequence[Sig], prefix: str) -> list[Sig]:
    out = []
    for i, (s, t) in enumerate(zip(own, other)):
        b.bit = i
        out.append((b.add("TH22", (s[0], t[0]), f"{prefix}.{i}.1"), b.add("TH22", (s[1], t[1]), f"{prefix}.{i}.0")))
    b.bit = None
    return out


def completion(b: Builder, sigs: Sequence[Sig], prefix: str, out: int | None = None) -> int:
    """Rail-OR per signal, TH22 tree, inverter: 0 (rfn) on full DATA, 1 (rfd) on full NULL."""
    level = [b.add("TH12", s, f"{prefix}.or{i}") for i, s in enumerate(sigs)]
    depth = 0
    while len(level) > 1:
        nxt = [b.add("TH22", (level[i], level[i + 1]), f"{prefix}.t{depth}.{i // 2}")
               for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
        depth += 1
    return b.add(INV, (level[0],), prefix + ".ko", out=out)


def isc(b: Builder, sig: Sig, ki_a: int, ki_b: int, prefix: str) -> Sig:
    """Illegal-state correction for one signal, requests from both completion copies."""
    r1 = b.net(prefix + ".1")
    r0 = b.net(prefix + ".0")
    b.add(ISC1, (sig[0], sig[1], ki_a, ki_b, r0), prefix + ".1", out=r1)
    b.add(ISC0, (sig[0], sig[1], ki_a, ki_b, r1), prefix + ".0", out=r0)
    return r1, r0


# -- standalone component netlists -------------------------------------------

def _operand_inputs(b: Builder, width: int) -> tuple[list[Sig], list[Sig], Sig]:
    xs = [b.signal(f"pi.a{i}") for i in range(width)]
    ys = [b.signal(f"pi.b{i}") for i in range(width)]
    return xs, ys, b.signal("pi.cin")


def build_ncl_cla(width: int, group: int = 4) -> Netlist:
    """Combinational dual-rail CLA only: inputs a, b, carry-in; outputs sum bits then carry-out."""
    if width < 2:
        raise NetlistError("CLA width must be at least 2")
    b = Builder()
    xs, ys, cin = _operand_inputs(b, width)
    sums, cout = cla(b, xs, ys, cin, "cl", group=group)
    ports = {"inputs": xs + ys + [cin], "outputs": {"a": sums + [cout]}}
    return b.finish("ncl", width, None, 0, ports, meta={"component": "cla"})


def build_register_stage(width: int, dual_ki: bool) -> Netlist:
    if width < 1:
        raise NetlistError("register width must be at least 1")
    b = Builder()
    b.role = "REG"
    sigs = [b.signal(f"in{i}") for i in range(width)]
    ki = [b.net("ki_a"), b.net("ki_b")] if dual_ki else [b.net("ki")]
    outs = register(b, sigs, ki, "reg.a")
    ports = {"inputs": sigs, "ki": ki, "outputs": {"a": outs}}
    return b.finish("dmr" if dual_ki else "ncl", width, None, 0, ports, meta={"component": "register"})


def build_cd(width: int) -> Netlist:
    if width < 1:
        raise NetlistError("completion width must be at least 1")
    b = Builder()
    b.role = "CD"
    sigs = [b.signal(f"in{i}") for i in range(width)]
    ko = completion(b, sigs, "cd.a")
    return b.finish("ncl", width, None, 0, {"inputs": sigs, "ko": ko, "outputs": {"a": []}},
                    meta={"component": "cd"})


def build_isc(force_to: int = 0) -> Netlist:
    b = Builder()
    b.role = "ISC"
    sig = b.signal("in")
    ki = [b.net("ki_a"), b.net("ki_b")]
    out = isc(b, sig, ki[0], ki[1], "isc.a")
    return b.finish("sr", 1, None, 0, {"inputs": [sig], "ki": ki, "outputs": {"a": [out]}},
                    isc_force=force_to, meta={"component": "isc"})


# -- pipelines -------------------------------------------------------------------

def build_pipeline(arch: str, width: int, lsu: int | None = None, stages: int = 2,
                   group: int = 4, isc_force: int = 0, lsu_group: int = 3) -> Netlist:
    """Pipelined adder: input rank, CLA, then ``stages`` further register ranks.

    ``ncl`` is the single-copy baseline; ``dmr`` duplicates everything and adds
    a TH22 merge layer per copy behind every register rank; ``sr`` shares the
    low ``lsu`` bits of the adder between copies behind two ISC banks.

    The shared LSU uses ``lsu_group``-bit lookahead blocks for its sum bits and
    a single flat lookahead for its carry-out, which feeds both MSUs.
    """
    if arch not in ("ncl", "dmr", "sr"):
        raise NetlistError(f"unknown architecture {arch!r}")
    if width < 2:
        raise NetlistError("adder width must be at least 2")
    if stages < 1:
        raise NetlistError("need at least one register rank after the adder")
    part = None
    if arch == "sr":
        if lsu is None:
            raise NetlistError("sr architecture needs an LSU width")
        part = PartitionSpec(width, lsu)
    elif lsu is not None:
        raise NetlistError("partition only applies to the sr architecture")
    if isc_force not in (0, 1):
        raise NetlistError("ISC forcing target must be 0 or 1")
    if group < 1 or lsu_group < 1:
        raise NetlistError("lookahead group size must be at least 1")

    copies = ["a"] if arch == "ncl" else ["a", "b"]
    b = Builder()
    xs, ys, cin = _operand_inputs(b, width)
    ko = [{c: b.net(f"ko{r}.{c}") for c in copies} for r in range(stages + 1)]
    req = {c: b.net(f"env.ki.{c}") for c in copies}

    def ki_for(r):
        src = ko[r + 1] if r < stages else req
        if len(copies) == 1:
            return [src["a"]]
        # each copy merges both requests in its own C-element, so a premature
        # request from one completion tree is held off until the other agrees
        b.stage, b.role = r, "CD"
        merged = []
        for c in copies:
            b.copy = c
            merged.append(b.add("TH22", (src["a"], src["b"]), f"kc{r}.{c}"))
        return merged

    ranks, cds, regs = [], [], []

    def rank(r: int, inputs: dict[str, list[Sig]]) -> dict[str, list[Sig]]:
        b.stage = r
        regs_out = {}
        ki = ki_for(r)
        for c in copies:
            b.role, b.copy = "REG", c
            regs_out[c] = register(b, inputs[c], ki, f"reg{r}.{c}")
        if arch == "ncl":
            mon = regs_out
        else:
            mon = {}
            for c in copies:
                other = "b" if c == "a" else "a"
                b.role, b.copy = "MERGE", c
                mon[c] = merge(b, regs_out[c], regs_out[other], f"mrg{r}.{c}")
        for c in copies:
            b.role, b.copy = "CD", c
            completion(b, mon[c], f"cd{r}.{c}", out=ko[r][c])
        ranks.append(mon)
        regs.append(regs_out)
        cds.append(dict(ko[r]))
        return mon

    pis = xs + ys + [cin]
    mon0 = rank(0, {c: pis for c in copies})

    b.stage = 0
    outs: dict[str, list[Sig]] = {}
    n = width
    if arch in ("ncl", "dmr"):
        for c in copies:
            b.role, b.copy = "CL_MSU", c
            m = mon0[c]
            s, co = cla(b, m[:n], m[n:2 * n], m[2 * n], f"cl.{c}", group=group)
            outs[c] = s + [co]
    else:
        L = part.l
        lsu_idx = list(range(L)) + list(range(n, n + L)) + [2 * n]
        b.role, b.copy = "MERGE", "shared"
        shared = merge(b, [regs[0]["a"][i] for i in lsu_idx], [regs[0]["b"][i] for i in lsu_idx],
                       "mrg0.shared")
        b.role, b.copy = "CL_LSU", "shared"
        lsum, q = cla(b, shared[:L], shared[L:2 * L], shared[2 * L], "lsu", group=lsu_group, flat_cout=True)
        ki = [ko[1]["a"], ko[1]["b"]]
        for c in copies:
            b.role, b.copy = "ISC", c
            fixed = []
            for i, s in enumerate(lsum):
                b.bit = i
                fixed.append(isc(b, s, *ki, f"isc.{c}.s{i}"))
            b.bit = None
            qc = isc(b, q, *ki, f"isc.{c}.q")
            b.role = "CL_MSU"
            m = mon0[c]
            s, co = cla(b, m[L:n], m[n + L:2 * n], qc, f"msu.{c}", base_bit=L, group=group)
            outs[c] = fixed + s + [co]

    prev = outs
    for r in range(1, stages + 1):
        prev = rank(r, prev)

    ports = {
        "inputs": pis,
        "outputs": {c: ranks[-1][c] for c in copies},
        "ack": dict(ko[0]),
        "req": req,
        "ranks": ranks,
        "cd": cds,
    }
    meta = {"group": group, "lsu_group": lsu_group} if arch == "sr" else {"group": group}
    return b.finish(arch, width, part, stages, ports, isc_force, meta)


def build_dmr_ncl_cla(width: int, stages: int = 2, **kw) -> Netlist:
    return build_pipeline("dmr", width, None, stages, **kw)


def build_sr_ncl_cla(width: int, partition: PartitionSpec | int, stages: int = 2, **kw) -> Netlist:
    lsu = partition.l if isinstance(partition, PartitionSpec) else partition
    if isinstance(partition, PartitionSpec) and partition.n != width:
        raise NetlistError(f"partition is for width {partition.n}, not {width}")
    return build_pipeline("sr", width, lsu, stages, **kw)


def build_plain_ncl(width: int, stages: int = 2, **kw) -> Netlist:
    return build_pipeline("ncl", width, None, stages, **kw)
