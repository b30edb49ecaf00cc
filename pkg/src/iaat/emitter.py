"""AArch64 assembly (GNU syntax) for optimized kernel programs.

Calling convention: x0=A, x1=B, x2=C, x3=kc, x4=lda, x5=ldb, x6=ldc (element
strides, converted to bytes on entry). x7 counts ping-pang pairs; x9/x10 form
addresses; x13/x14 are the origins used by next-step loads, pulled back one
step in the final stage of an even kc so those loads stay in bounds.
"""

from __future__ import annotations

import re
from collections import Counter
from pathlib import Path

from .kernel_ir import (IR_VERSION, CmlaScalar, CmlaVector, FmlaScalar, FmlaVector, FmlsScalar,
                        KernelIR, LoadLane, LoadLanePair, LoadVector, NegVector, StoreLane,
                        StoreVector)

VECTOR_MNEMONICS = frozenset({"fmla", "fmls", "fneg", "fcmla", "ldr", "ldp", "ld1", "st1", "str", "stp"})
SCALAR_MNEMONICS = frozenset({"add", "sub", "mov", "madd", "lsl", "lsr", "cmp", "subs",
                              "b", "b.ne", "cbz", "tbz", "tbnz", "ret"})
STAGE_MARKERS = {"prologue": "// prologue", "body_m1": "// stage m1", "body_m2": "// stage m2",
                 "tail": "// tail", "epilogue": "// epilogue", "restore": "// restore"}


class UnloweredInstr(ValueError):
    pass


_SIZE_REG = {4: "s", 8: "d", 16: "q"}
_SHIFT = {4: 2, 8: 3, 16: 4}


class _Lowering:
    def __init__(self, ir: KernelIR):
        self.ir = ir
        t = ir.id.gemm_type
        self.t = t
        self.es = t.elem_bytes
        self.arr = "4s" if t.real_bytes == 4 else "2d"
        self.lane_t = "s" if t.real_bytes == 4 else "d"
        axis = ir.k_axis
        self.step = {b: (f"#{self.es}" if axis[b] == "row" else ("x4" if b == "a" else "x5"))
                     for b in ("a", "b")}

    def addr(self, mem, ahead: bool) -> tuple[list[str], str]:
        origin = {"a": "x13" if ahead else "x0", "b": "x14" if ahead else "x1", "c": "x2"}[mem.base]
        ld = {"a": "x4", "b": "x5", "c": "x6"}[mem.base]
        lines, src = [], origin
        if mem.col == 1:
            lines.append(f"add x9, {src}, {ld}")
            src = "x9"
        elif mem.col:
            lines += [f"mov x10, #{mem.col}", f"madd x9, x10, {ld}, {src}"]
            src = "x9"
        if mem.row:
            lines.append(f"add x9, {src}, #{mem.row * self.es}")
            src = "x9"
        return lines, src

    def lane_access(self, op: str, reg: int, lane: int, src: str) -> str:
        if self.es == 16:  # one complex double fills the register
            return f"{'ldr' if op == 'ld1' else 'str'} q{reg}, [{src}]"
        t = "d" if self.t.is_complex else self.lane_t
        return f"{op} {{v{reg}.{t}}}[{lane}], [{src}]"

    def whole(self, op: str, reg: int, width: int, src: str) -> list[str]:
        nbytes = width * self.es
        if nbytes in _SIZE_REG:
            return [f"{op} {_SIZE_REG[nbytes]}{reg}, [{src}]"]
        if nbytes == 12:
            lane_op = "ld1" if op == "ldr" else "st1"
            return [f"{op} d{reg}, [{src}]", f"add x9, {src}, #8", f"{lane_op} {{v{reg}.s}}[2], [x9]"]
        raise UnloweredInstr(f"no {nbytes}-byte vector access")

    def compute(self, ins) -> list[str]:
        a = self.arr
        if isinstance(ins, FmlaScalar):
            return [f"fmla v{ins.out}.{a}, v{ins.in1}.{a}, v{ins.in2}.{self.lane_t}[{ins.lane}]"]
        if isinstance(ins, FmlaVector):
            return [f"fmla v{ins.out}.{a}, v{ins.in1}.{a}, v{ins.in2}.{a}"]
        if isinstance(ins, FmlsScalar):
            return [f"fmls v{ins.out}.{a}, v{ins.in1}.{a}, v{ins.in2}.{self.lane_t}[{ins.lane}]"]
        if isinstance(ins, NegVector):
            return [f"fneg v{ins.out}.{a}, v{ins.in1}.{a}"]
        if isinstance(ins, CmlaScalar):
            if self.es == 16:
                if ins.lane != 0:
                    raise UnloweredInstr("double complex fcmla has a single lane")
                m = f"v{ins.in2}.2d"
            else:
                m = f"v{ins.in2}.s[{ins.lane}]"
            return [f"fcmla v{ins.out}.{a}, v{ins.in1}.{a}, {m}, #{r}" for r in ins.rot]
        if isinstance(ins, CmlaVector):
            return [f"fcmla v{ins.out}.{a}, v{ins.in1}.{a}, v{ins.in2}.{a}, #{r}" for r in ins.rot]
        raise UnloweredInstr(f"no mnemonic for {ins!r}")

    def section(self, seq: list) -> list[str]:
        out: list[str] = []
        n = 0
        while n < len(seq):
            ins = seq[n]
            if isinstance(ins, (LoadVector, StoreVector)) and ins.paired:
                mate = seq[n + 1]
                lines, src = self.addr(ins.mem, getattr(ins, "ahead", False))
                size = _SIZE_REG[ins.width * self.es]
                op = "ldp" if isinstance(ins, LoadVector) else "stp"
                r1 = ins.dst if op == "ldp" else ins.src
                r2 = mate.dst if op == "ldp" else mate.src
                out += lines + [f"{op} {size}{r1}, {size}{r2}, [{src}]"]
                n += 2
                continue
            if isinstance(ins, LoadVector):
                lines, src = self.addr(ins.mem, ins.ahead)
                out += lines + self.whole("ldr", ins.dst, ins.width, src)
            elif isinstance(ins, StoreVector):
                lines, src = self.addr(ins.mem, False)
                out += lines + self.whole("str", ins.src, ins.width, src)
            elif isinstance(ins, LoadLane):
                lines, src = self.addr(ins.mem, ins.ahead)
                out += lines + [self.lane_access("ld1", ins.dst, ins.lane, src)]
            elif isinstance(ins, LoadLanePair):
                for d in (0, 1):
                    mem = type(ins.mem)(ins.mem.base, ins.mem.row, ins.mem.col + d)
                    lines, src = self.addr(mem, ins.ahead)
                    out += lines + [self.lane_access("ld1", ins.dst, ins.lane + d, src)]
            elif isinstance(ins, StoreLane):
                lines, src = self.addr(ins.mem, False)
                out += lines + [self.lane_access("st1", ins.src, ins.lane, src)]
            else:
                out += self.compute(ins)
            n += 1
        return out

    def advance(self) -> list[str]:
        return [f"add x0, x0, {self.step['a']}", f"add x1, x1, {self.step['b']}"]


def emit(ir: KernelIR) -> str:
    """Assembly for one kernel as a global function named by its KernelId."""
    low = _Lowering(ir)
    k = ir.id
    sym = k.symbol
    shift = _SHIFT[low.es]
    body: list[str] = []

    def put(lines, indent="    "):
        body.extend(indent + ln for ln in lines)

    put([f"lsl x{r}, x{r}, #{shift}" for r in (4, 5, 6)])
    put(["stp d8, d9, [sp, #-64]!", "stp d10, d11, [sp, #16]",
         "stp d12, d13, [sp, #32]", "stp d14, d15, [sp, #48]"])
    put([STAGE_MARKERS["prologue"]])
    put(low.section(ir.prologue))
    put(["lsr x7, x3, #1", "cbz x7, 2f"])
    body.append("1:")
    put(["mov x13, x0", "mov x14, x1", STAGE_MARKERS["body_m1"]])
    put(low.section(ir.body_m1))
    put(low.advance())
    put(["mov x13, x0", "mov x14, x1", "cmp x7, #1", "b.ne 3f", "tbnz x3, #0, 3f",
         f"sub x13, x0, {low.step['a']}", f"sub x14, x1, {low.step['b']}"])
    body.append("3:")
    put([STAGE_MARKERS["body_m2"]])
    put(low.section(ir.body_m2))
    put(low.advance())
    put(["subs x7, x7, #1", "b.ne 1b"])
    body.append("2:")
    put(["tbz x3, #0, 4f", STAGE_MARKERS["tail"]])
    put(low.section(ir.tail))
    body.append("4:")
    put([STAGE_MARKERS["epilogue"]])
    put(low.section(ir.epilogue))
    put([STAGE_MARKERS["restore"]])
    put(["ldp d14, d15, [sp, #48]", "ldp d12, d13, [sp, #32]",
         "ldp d10, d11, [sp, #16]", "ldp d8, d9, [sp], #64", "ret"])

    plan = ir.reg_plan.describe() if ir.reg_plan is not None else "unknown"
    head = [f"// iaat-ir-version: {IR_VERSION}",
            f"// {k.gemm_type.name}GEMM_{k.trans.name} {k.mc}x{k.nc}: C += op(A) * op(B)",
            f"// registers: {plan}",
            "    .text",
            f"    .global {sym}",
            f"    .type {sym}, %function",
            "    .p2align 4",
            f"{sym}:"]
    tailer = [f"    .size {sym}, .-{sym}"]
    return "\n".join(head + body + tailer) + "\n"


def kernel_path(out_dir, kernel, suffix: str = ".S") -> Path:
    return Path(out_dir) / kernel.gemm_type.value / kernel.trans.value / f"{kernel.mc}x{kernel.nc}{suffix}"


def write_kernel(out_dir, ir: KernelIR, fmt: str = "asm") -> Path:
    path = kernel_path(out_dir, ir.id, ".S" if fmt == "asm" else ".ir")
    path.parent.mkdir(parents=True, exist_ok=True)
    text = emit(ir) if fmt == "asm" else ir.dump()
    path.write_text(text, encoding="utf-8")
    return path


# -- structural checks ---------------------------------------------------------

_MNEMONIC = re.compile(r"^\s+([a-z][a-z0-9.]*)\b")


def mnemonic_counts(lines) -> Counter:
    c: Counter = Counter()
    for ln in lines:
        m = _MNEMONIC.match(ln)
        if m and not ln.lstrip().startswith("."):
            c[m.group(1)] += 1
    return c


def split_stages(text: str) -> dict[str, list[str]]:
    """Emitted lines grouped by the stage marker that precedes them."""
    inverse = {v: k for k, v in STAGE_MARKERS.items()}
    out: dict[str, list[str]] = {}
    current = None
    for ln in text.splitlines():
        s = ln.strip()
        if s in inverse:
            current = inverse[s]
            out[current] = []
        elif current is not None:
            out[current].append(ln)
    return out


def expected_mnemonic_counts(ir: KernelIR, section: str) -> Counter:
    """Vector mnemonics the lowering of one IR section must produce."""
    es = ir.id.gemm_type.elem_bytes
    c: Counter = Counter()
    seq = getattr(ir, section)
    n = 0
    while n < len(seq):
        ins = seq[n]
        if isinstance(ins, (LoadVector, StoreVector)) and ins.paired:
            c["ldp" if isinstance(ins, LoadVector) else "stp"] += 1
            n += 2
            continue
        if isinstance(ins, (LoadVector, StoreVector)):
            op = "ldr" if isinstance(ins, LoadVector) else "str"
            c[op] += 1
            if ins.width * es == 12:
                c["ld1" if op == "ldr" else "st1"] += 1
        elif isinstance(ins, (LoadLane, LoadLanePair)):
            c["ldr" if es == 16 else "ld1"] += 2 if isinstance(ins, LoadLanePair) else 1
        elif isinstance(ins, StoreLane):
            c["str" if es == 16 else "st1"] += 1
        elif isinstance(ins, (FmlaScalar, FmlaVector)):
            c["fmla"] += 1
        elif isinstance(ins, FmlsScalar):
            c["fmls"] += 1
        elif isinstance(ins, NegVector):
            c["fneg"] += 1
        elif isinstance(ins, (CmlaScalar, CmlaVector)):
            c["fcmla"] += len(ins.rot)
        n += 1
    return c


def stage_vector_counts(text: str) -> dict[str, Counter]:
    out = {}
    for name, lines in split_stages(text).items():
        counts = mnemonic_counts(lines)
        out[name] = Counter({m: n for m, n in counts.items() if m in VECTOR_MNEMONICS})
    return out
