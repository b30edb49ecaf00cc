"""Install-time generation of micro-kernel programs.

Each k step is a rank-1 update ``C += op(A)[:, k] * op(B)[k, :]``. Two steps
form the M1/M2 ping-pang pair: while one stage computes from one operand
buffer set, it loads the next step's operands into the other set.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from math import ceil

from .catalog import KernelId, all_kernel_ids, GemmType, Transposition
from .kernel_ir import (KernelIR, LoadLane, LoadLanePair, LoadVector, Mem, StoreLane,
                        StoreVector, instantiate_template, is_compute, is_load, reads, writes)
from .regalloc import RegisterPlan, allocate


class GenerationError(RuntimeError):
    def __init__(self, failures: dict):
        self.failures = failures
        lines = [f"{k}: {e}" for k, e in sorted(failures.items())]
        super().__init__("kernel generation failed:\n" + "\n".join(lines))


def _stored(operand: str, trans: Transposition, item: int, k: int) -> tuple[int, int]:
    """Stored (row, col) of op(A)[item, k] or op(B)[k, item]."""
    if operand == "a":
        return (k, item) if trans.trans_a else (item, k)
    return (item, k) if trans.trans_b else (k, item)


def _contig_along_items(operand: str, trans: Transposition) -> bool:
    return (not trans.trans_a) if operand == "a" else trans.trans_b


class _Gen:
    def __init__(self, plan: RegisterPlan):
        self.plan = plan
        k = plan.kernel
        self.t: GemmType = k.gemm_type
        self.x: Transposition = k.trans
        self.mc, self.nc = k.mc, k.nc
        self.e = self.t.elenum
        name = ("s" if self.t.real_bytes == 4 else "d") + ("fcmlas" if self.t.is_complex else "fmlas")
        self.template = name
        if plan.scheme == "col":
            self.vec, self.sca = "a", "b"
        else:
            self.vec, self.sca = "b", "a"

    # operand info
    def extent(self, op: str) -> int:
        return self.mc if op == "a" else self.nc

    def mode(self, op: str) -> str:
        return self.plan.a_mode if op == "a" else self.plan.b_mode

    def regs(self, op: str, stage: int) -> tuple[int, ...]:
        p = self.plan
        if op == "a":
            return p.a_regs_m1 if stage == 0 else p.a_regs_m2
        return p.b_regs_m1 if stage == 0 else p.b_regs_m2

    # loads
    def load_group(self, op: str, regs, dk: int, ahead: bool) -> list:
        """Load one k step of a vector or lanes group (items packed e per register)."""
        out = []
        n = self.extent(op)
        contiguous = _contig_along_items(op, self.x)
        for q, reg in enumerate(regs):
            w = min(self.e, n - q * self.e)
            if contiguous:
                r, c = _stored(op, self.x, q * self.e, dk)
                out.append(LoadVector(reg, Mem(op, r, c), w, ahead))
                continue
            lane = 0
            while lane < w:
                r, c = _stored(op, self.x, q * self.e + lane, dk)
                if lane + 1 < w:
                    out.append(LoadLanePair(reg, lane, Mem(op, r, c), ahead))
                    lane += 2
                else:
                    out.append(LoadLane(reg, lane, Mem(op, r, c), ahead))
                    lane += 1
        return out

    def load_pairs(self, op: str, width: int) -> list:
        """Pair mode: steps k and k+1 of every item (only k when width is 1)."""
        out = []
        r1, r2 = self.regs(op, 0), self.regs(op, 1)
        for t in range(self.extent(op)):
            r, c = _stored(op, self.x, t, 0)
            if self.e >= 2:
                out.append(LoadVector(r1[t], Mem(op, r, c), width))
            else:
                out.append(LoadVector(r1[t], Mem(op, r, c), 1))
                if width == 2:
                    rr, cc = _stored(op, self.x, t, 1)
                    out.append(LoadVector(r2[t], Mem(op, rr, cc), 1))
        return out

    def load_elems(self, op: str, regs, dk: int, ahead: bool) -> list:
        out = []
        for t, reg in enumerate(regs):
            r, c = _stored(op, self.x, t, dk)
            out.append(LoadVector(reg, Mem(op, r, c), 1, ahead))
        return out

    def operand_loads(self, op: str, section: str) -> list:
        """Loads issued by one section for one operand.

        section is 'prologue', 'm1', 'm2' or 'tail'.
        """
        mode = self.mode(op)
        stage = {"m1": 0, "m2": 1}.get(section, 0)
        if mode == "pair":
            if section == "m1":
                return self.load_pairs(op, 2)
            if section == "tail":
                return self.load_pairs(op, 1)
            return []
        loader = self.load_elems if mode == "elem" else self.load_group
        if mode.endswith("current"):
            if section == "prologue":
                return []
            return loader(op, self.regs(op, 0), 0, False)
        # double buffered: prologue fills set 0, each stage fetches the other set
        if section == "prologue":
            return loader(op, self.regs(op, 0), 0, False)
        if section == "tail":
            return []
        return loader(op, self.regs(op, 1 - stage), 1, True)

    def scalar_source(self, op: str, item: int, section: str) -> tuple[int, int]:
        mode = self.mode(op)
        stage = 1 if section == "m2" else 0
        if mode == "pair":
            if self.e >= 2:
                return self.regs(op, 0)[item], stage
            return self.regs(op, stage)[item], 0
        if mode == "elem":
            return self.regs(op, stage)[item], 0
        regs = self.regs(op, 0 if mode.endswith("current") else stage)
        return regs[item // self.e], item % self.e

    def vector_reg(self, op: str, q: int, section: str) -> int:
        stage = 1 if section == "m2" else 0
        if self.mode(op).endswith("current"):
            stage = 0
        return self.regs(op, stage)[q]

    def fma(self, out: int, vec: int, sca: int, lane: int, lanes: int):
        if self.t.is_complex:
            return instantiate_template(self.template, out, vec, sca, lane, (0, 90),
                                        gemm_type=self.t, lanes=lanes)
        return instantiate_template(self.template, out, vec, sca, lane,
                                    gemm_type=self.t, lanes=lanes)

    def computes(self, section: str) -> list:
        out = []
        c = self.plan.c_regs
        if self.plan.scheme == "elem":
            for j in range(self.nc):
                breg, _ = self.scalar_source("b", j, section)
                for i in range(self.mc):
                    areg, _ = self.scalar_source("a", i, section)
                    out.append(self.fma(c[j * self.mc + i], areg, breg, 0, 1))
            return out
        nvec = self.extent(self.vec)
        groups = ceil(nvec / self.e)
        for s in range(self.extent(self.sca)):
            sreg, lane = self.scalar_source(self.sca, s, section)
            for q in range(groups):
                w = min(self.e, nvec - q * self.e)
                out.append(self.fma(c[s * groups + q], self.vector_reg(self.vec, q, section),
                                    sreg, lane, w))
        return out

    def stage(self, section: str) -> list:
        loads = self.operand_loads("a", section) + self.operand_loads("b", section)
        return loads + self.computes(section)

    # C block traffic
    def c_moves(self, store: bool) -> list:
        out = []
        c = self.plan.c_regs
        e = self.e
        if self.plan.scheme == "elem":
            for j in range(self.nc):
                for i in range(self.mc):
                    reg, m = c[j * self.mc + i], Mem("c", i, j)
                    out.append(StoreVector(reg, m, 1) if store else LoadVector(reg, m, 1))
        elif self.plan.scheme == "col":
            groups = ceil(self.mc / e)
            for j in range(self.nc):
                for q in range(groups):
                    reg, w, m = c[j * groups + q], min(e, self.mc - q * e), Mem("c", q * e, j)
                    out.append(StoreVector(reg, m, w) if store else LoadVector(reg, m, w))
        else:
            groups = ceil(self.nc / e)
            for i in range(self.mc):
                for q in range(groups):
                    reg, w = c[i * groups + q], min(e, self.nc - q * e)
                    lane = 0
                    while lane < w:
                        m = Mem("c", i, q * e + lane)
                        if store:
                            out.append(StoreLane(reg, lane, m))
                            lane += 1
                        elif lane + 1 < w:
                            out.append(LoadLanePair(reg, lane, m))
                            lane += 2
                        else:
                            out.append(LoadLane(reg, lane, m))
                            lane += 1
        return out


def generate(kernel_id: KernelId, check_catalog: bool = True) -> KernelIR:
    """Unoptimized program: every stage lists its loads before its computes."""
    plan = allocate(kernel_id.gemm_type, kernel_id.trans, kernel_id.mc, kernel_id.nc, check_catalog)
    g = _Gen(plan)
    prologue = g.c_moves(store=False) + g.operand_loads("a", "prologue") + g.operand_loads("b", "prologue")
    return KernelIR(plan.kernel, plan, prologue, g.stage("m1"), g.stage("m2"),
                    g.stage("tail"), g.c_moves(store=True))


# -- optimizer ---------------------------------------------------------------

_PAIR_BYTES = (4, 8, 16)


def _pairable(x, y, elem_bytes: int) -> bool:
    if type(x) is not type(y) or not isinstance(x, (LoadVector, StoreVector)):
        return False
    if x.width != y.width or x.width * elem_bytes not in _PAIR_BYTES:
        return False
    if isinstance(x, LoadVector) and (x.ahead != y.ahead or x.dst == y.dst):
        return False
    return (x.mem.base == y.mem.base and x.mem.col == y.mem.col
            and y.mem.row == x.mem.row + x.width)


def pair_memops(seq: list, elem_bytes: int) -> list:
    """Mark adjacent-offset loads (or stores) as ldp/stp pairs.

    Only memory instructions before the first compute are considered; a
    partner found later in that prefix is moved up next to its mate.
    """
    seq = [replace(i, paired=False) if isinstance(i, (LoadVector, StoreVector)) else i for i in seq]
    cut = next((n for n, i in enumerate(seq) if is_compute(i)), len(seq))
    head, rest = seq[:cut], seq[cut:]
    out = []
    used = [False] * len(head)
    for n, ins in enumerate(head):
        if used[n]:
            continue
        used[n] = True
        mate = None
        for m in range(n + 1, len(head)):
            if not used[m] and _pairable(ins, head[m], elem_bytes):
                mate = m
                break
        if mate is None:
            out.append(ins)
        else:
            used[mate] = True
            out.extend([replace(ins, paired=True), head[mate]])
    return out + rest


def _units(seq: list) -> list[list]:
    units, n = [], 0
    while n < len(seq):
        ins = seq[n]
        if getattr(ins, "paired", False):
            units.append([ins, seq[n + 1]])
            n += 2
        else:
            units.append([ins])
            n += 1
    return units


def schedule_stage(seq: list) -> list:
    """Spread loads between computes (earliest-deadline-first gap filling).

    Computes keep their order. A load may not move above the last earlier
    compute touching its destination nor below the first later one.
    """
    units = _units(seq)
    comps = [u[0] for u in units if is_compute(u[0])]
    n = len(comps)
    loads = []  # (release, deadline, order, unit)
    seen = 0
    for order, u in enumerate(units):
        if is_compute(u[0]):
            seen += 1
            continue
        regs = {r for ins in u for r in writes(ins) + reads(ins)}
        release = -1
        for ci in range(seen):
            if regs & set(reads(comps[ci]) + writes(comps[ci])):
                release = ci
        deadline = n
        for ci in range(seen, n):
            if regs & set(reads(comps[ci]) + writes(comps[ci])):
                deadline = ci
                break
        loads.append((release, deadline, order, u))
    pending = sorted(loads, key=lambda l: (l[1], l[2]))
    out = []
    for gap in range(n):
        ready = [l for l in pending if l[0] < gap]
        forced = [l for l in ready if l[1] == gap]
        chosen = forced if forced else ready[:1]
        for l in sorted(chosen, key=lambda l: l[2]):
            out.extend(l[3])
            pending.remove(l)
        out.append(comps[gap])
    for l in sorted(pending, key=lambda l: l[2]):
        out.extend(l[3])
    return out


def optimize(ir: KernelIR) -> KernelIR:
    """Pair memory operations for ldp/stp and interleave loads with computes."""
    es = ir.id.gemm_type.elem_bytes
    stages = [schedule_stage(pair_memops(s, es)) for s in (ir.body_m1, ir.body_m2, ir.tail)]
    return KernelIR(ir.id, ir.reg_plan, pair_memops(ir.prologue, es), *stages,
                    pair_memops(ir.epilogue, es))


def adjacent_load_violations(seq: list) -> int:
    """Count load units directly following another load unit while computes remain."""
    units = _units(seq)
    remaining = sum(1 for u in units if is_compute(u[0]))
    bad, prev_load = 0, False
    for u in units:
        if is_compute(u[0]):
            remaining -= 1
            prev_load = False
            continue
        if is_load(u[0]):
            if prev_load and remaining > 0:
                bad += 1
            prev_load = True
    return bad


def generate_all(kernels=None, optimized: bool = True, workers: int = 1) -> dict[KernelId, KernelIR]:
    """IR for every catalog kernel, keyed and ordered by KernelId."""
    ids = sorted(kernels if kernels is not None else all_kernel_ids())
    failures, result = {}, {}

    def one(k):
        try:
            ir = generate(k)
            return k, optimize(ir) if optimized else ir, None
        except Exception as exc:  # collected and reported together
            return k, None, exc

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            done = list(pool.map(one, ids))
    else:
        done = [one(k) for k in ids]
    for k, ir, exc in done:
        if exc is not None:
            failures[k] = exc
        else:
            result[k] = ir
    if failures:
        raise GenerationError(failures)
    return result
