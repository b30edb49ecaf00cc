"""Abstract vector instruction set and the kernel program container.

Instructions are pure register transfers over 32 modeled 128-bit registers.
Memory operands name an element of the stored (column-major) operand block by
``(row, col)`` relative to the block origin; for A and B the origin follows the
current k step, so the same body program serves every iteration.

Lane indices and ``lanes`` counts are in real lanes for the fmla/fmls/fneg
family and in complex lanes for fcmla.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

from .catalog import GemmType, KernelId, Transposition

NUM_VREGS = 32
ROTATIONS = (0, 90, 180, 270)
IR_VERSION = 1


class TemplateError(ValueError):
    pass


class IRParseError(ValueError):
    pass


def _check_reg(*regs: int) -> None:
    for r in regs:
        if not 0 <= r < NUM_VREGS:
            raise TemplateError(f"register v{r} outside v0..v{NUM_VREGS - 1}")


@dataclass(frozen=True)
class Mem:
    base: str  # "a", "b" or "c"
    row: int
    col: int

    def __str__(self) -> str:
        return f"{self.base}[{self.row},{self.col}]"


@dataclass(frozen=True)
class FmlaScalar:
    out: int
    in1: int
    in2: int
    lane: int
    lanes: int = 4


@dataclass(frozen=True)
class FmlaVector:
    out: int
    in1: int
    in2: int
    lanes: int = 4


@dataclass(frozen=True)
class FmlsScalar:
    out: int
    in1: int
    in2: int
    lane: int
    lanes: int = 4


@dataclass(frozen=True)
class NegVector:
    out: int
    in1: int
    lanes: int = 4


@dataclass(frozen=True)
class CmlaScalar:
    out: int
    in1: int
    in2: int
    lane: int
    rot: tuple[int, int] = (0, 90)
    lanes: int = 2


@dataclass(frozen=True)
class CmlaVector:
    out: int
    in1: int
    in2: int
    rot: tuple[int, int] = (0, 90)
    lanes: int = 2


@dataclass(frozen=True)
class LoadVector:
    """Contiguous load of ``width`` elements into lanes 0..width-1.

    ``ahead`` marks a load of next-step data (skipped in the final stage);
    ``paired`` means this load and the following one lower to a single ldp.
    """

    dst: int
    mem: Mem
    width: int
    ahead: bool = False
    paired: bool = False


@dataclass(frozen=True)
class LoadLane:
    dst: int
    lane: int
    mem: Mem
    ahead: bool = False


@dataclass(frozen=True)
class LoadLanePair:
    """Gather ``mem`` and its right neighbour (next stored column) into lanes lane, lane+1."""

    dst: int
    lane: int
    mem: Mem
    ahead: bool = False


@dataclass(frozen=True)
class StoreVector:
    src: int
    mem: Mem
    width: int
    paired: bool = False


@dataclass(frozen=True)
class StoreLane:
    src: int
    lane: int
    mem: Mem


@dataclass(frozen=True)
class ZeroReg:
    dst: int


Instr = Union[FmlaScalar, FmlaVector, FmlsScalar, NegVector, CmlaScalar, CmlaVector,
              LoadVector, LoadLane, LoadLanePair, StoreVector, StoreLane, ZeroReg]

COMPUTE_TYPES = (FmlaScalar, FmlaVector, FmlsScalar, NegVector, CmlaScalar, CmlaVector)
LOAD_TYPES = (LoadVector, LoadLane, LoadLanePair)
STORE_TYPES = (StoreVector, StoreLane)


def is_load(ins) -> bool:
    return isinstance(ins, LOAD_TYPES)


def is_compute(ins) -> bool:
    return isinstance(ins, COMPUTE_TYPES)


def reads(ins) -> tuple[int, ...]:
    """Registers read by an instruction (accumulators count as read)."""
    if isinstance(ins, (FmlaScalar, FmlaVector, FmlsScalar, CmlaScalar, CmlaVector)):
        return (ins.out, ins.in1, ins.in2)
    if isinstance(ins, NegVector):
        return (ins.in1,)
    if isinstance(ins, (StoreVector, StoreLane)):
        return (ins.src,)
    if isinstance(ins, (LoadLane, LoadLanePair)):
        return (ins.dst,)  # lane inserts merge into the destination
    return ()


def writes(ins) -> tuple[int, ...]:
    if is_compute(ins):
        return (ins.out,)
    if isinstance(ins, (LoadVector, LoadLane, LoadLanePair, ZeroReg)):
        return (ins.dst,)
    return ()


# -- templates ---------------------------------------------------------------

_TEMPLATE_KIND = {
    "fmlas": FmlaScalar, "fmlav": FmlaVector, "fmlss": FmlsScalar,
    "fnegv": NegVector, "fcmlas": CmlaScalar, "fcmlav": CmlaVector,
}
TEMPLATE_NAMES = tuple(p + k for k in _TEMPLATE_KIND for p in "sd")


def instantiate_template(name: str, *operands, gemm_type: GemmType | str | None = None,
                         lanes: int | None = None):
    """Build the instruction for one computational template.

    ``gemm_type`` defaults to S for s-prefixed names and D for d-prefixed ones;
    it must match the prefix precision. ``lanes`` defaults to a full register.
    """
    if name not in TEMPLATE_NAMES:
        raise TemplateError(f"unknown template {name!r}")
    prefix, kind = name[0], name[1:]
    t = GemmType(gemm_type) if gemm_type is not None else (GemmType.S if prefix == "s" else GemmType.D)
    allowed = (GemmType.S, GemmType.C) if prefix == "s" else (GemmType.D, GemmType.Z)
    if t not in allowed:
        raise TemplateError(f"{name} needs elenum in {[a.elenum for a in allowed]}, got {t.name}")
    cls = _TEMPLATE_KIND[kind]
    complex_op = cls in (CmlaScalar, CmlaVector)
    if complex_op and not t.is_complex:
        raise TemplateError(f"{name} operates on complex data, got {t.name}")
    nlanes = t.elenum if complex_op else t.real_lanes
    if lanes is None:
        lanes = nlanes
    if not 1 <= lanes <= nlanes:
        raise TemplateError(f"lanes={lanes} out of range for {name}")

    ops = list(operands)
    if name == "dfcmlas" and len(ops) == 4:
        ops.insert(3, 0)
    arity = {FmlaScalar: 4, FmlaVector: 3, FmlsScalar: 4, NegVector: 2,
             CmlaScalar: 5, CmlaVector: 4}[cls]
    if len(ops) != arity:
        raise TemplateError(f"{name} takes {arity} operands, got {len(operands)}")
    _check_reg(*ops[:2 if cls is NegVector else 3])
    if cls in (FmlaScalar, FmlsScalar, CmlaScalar):
        lane = ops[3]
        if not 0 <= lane < nlanes:
            raise TemplateError(f"lane {lane} out of range for {name} ({t.name})")
    if complex_op:
        rot = tuple(ops[-1]) if isinstance(ops[-1], (tuple, list)) else ()
        if len(rot) != 2 or any(r not in ROTATIONS for r in rot):
            raise TemplateError(f"bad rotation pair {ops[-1]!r}")
        ops[-1] = rot
    return cls(*ops, lanes=lanes)


# -- text form ---------------------------------------------------------------

def format_instr(ins) -> str:
    if isinstance(ins, FmlaScalar):
        return f"fmla v{ins.out}, v{ins.in1}, v{ins.in2}[{ins.lane}] lanes={ins.lanes}"
    if isinstance(ins, FmlaVector):
        return f"fmla v{ins.out}, v{ins.in1}, v{ins.in2} lanes={ins.lanes}"
    if isinstance(ins, FmlsScalar):
        return f"fmls v{ins.out}, v{ins.in1}, v{ins.in2}[{ins.lane}] lanes={ins.lanes}"
    if isinstance(ins, NegVector):
        return f"fneg v{ins.out}, v{ins.in1} lanes={ins.lanes}"
    if isinstance(ins, CmlaScalar):
        return (f"fcmla v{ins.out}, v{ins.in1}, v{ins.in2}[{ins.lane}] "
                f"rot={ins.rot[0]},{ins.rot[1]} lanes={ins.lanes}")
    if isinstance(ins, CmlaVector):
        return f"fcmla v{ins.out}, v{ins.in1}, v{ins.in2} rot={ins.rot[0]},{ins.rot[1]} lanes={ins.lanes}"
    if isinstance(ins, LoadVector):
        s = f"ldv v{ins.dst}, {ins.mem} w={ins.width}"
        return s + " ahead" * ins.ahead + " pair" * ins.paired
    if isinstance(ins, LoadLane):
        return f"ldl v{ins.dst}[{ins.lane}], {ins.mem}" + " ahead" * ins.ahead
    if isinstance(ins, LoadLanePair):
        return f"ldl2 v{ins.dst}[{ins.lane}], {ins.mem}" + " ahead" * ins.ahead
    if isinstance(ins, StoreVector):
        return f"stv v{ins.src}, {ins.mem} w={ins.width}" + " pair" * ins.paired
    if isinstance(ins, StoreLane):
        return f"stl v{ins.src}[{ins.lane}], {ins.mem}"
    if isinstance(ins, ZeroReg):
        return f"zero v{ins.dst}"
    raise TypeError(f"not an instruction: {ins!r}")


_REG = r"v(\d+)"
_LANE = r"v(\d+)\[(\d+)\]"
_MEM = r"([abc])\[(-?\d+),(-?\d+)\]"
_FLAGS = r"((?: (?:ahead|pair))*)"
_PATTERNS = [
    (re.compile(rf"fmla {_REG}, {_REG}, {_LANE} lanes=(\d+)$"),
     lambda g: FmlaScalar(*map(int, g))),
    (re.compile(rf"fmla {_REG}, {_REG}, {_REG} lanes=(\d+)$"),
     lambda g: FmlaVector(*map(int, g))),
    (re.compile(rf"fmls {_REG}, {_REG}, {_LANE} lanes=(\d+)$"),
     lambda g: FmlsScalar(*map(int, g))),
    (re.compile(rf"fneg {_REG}, {_REG} lanes=(\d+)$"),
     lambda g: NegVector(*map(int, g))),
    (re.compile(rf"fcmla {_REG}, {_REG}, {_LANE} rot=(\d+),(\d+) lanes=(\d+)$"),
     lambda g: CmlaScalar(int(g[0]), int(g[1]), int(g[2]), int(g[3]),
                          (int(g[4]), int(g[5])), int(g[6]))),
    (re.compile(rf"fcmla {_REG}, {_REG}, {_REG} rot=(\d+),(\d+) lanes=(\d+)$"),
     lambda g: CmlaVector(int(g[0]), int(g[1]), int(g[2]), (int(g[3]), int(g[4])), int(g[5]))),
    (re.compile(rf"ldv {_REG}, {_MEM} w=(\d+){_FLAGS}$"),
     lambda g: LoadVector(int(g[0]), Mem(g[1], int(g[2]), int(g[3])), int(g[4]),
                          "ahead" in g[5], "pair" in g[5])),
    (re.compile(rf"ldl {_LANE}, {_MEM}{_FLAGS}$"),
     lambda g: LoadLane(int(g[0]), int(g[1]), Mem(g[2], int(g[3]), int(g[4])), "ahead" in g[5])),
    (re.compile(rf"ldl2 {_LANE}, {_MEM}{_FLAGS}$"),
     lambda g: LoadLanePair(int(g[0]), int(g[1]), Mem(g[2], int(g[3]), int(g[4])), "ahead" in g[5])),
    (re.compile(rf"stv {_REG}, {_MEM} w=(\d+){_FLAGS}$"),
     lambda g: StoreVector(int(g[0]), Mem(g[1], int(g[2]), int(g[3])), int(g[4]), "pair" in g[5])),
    (re.compile(rf"stl {_LANE}, {_MEM}$"),
     lambda g: StoreLane(int(g[0]), int(g[1]), Mem(g[2], int(g[3]), int(g[4])))),
    (re.compile(rf"zero {_REG}$"), lambda g: ZeroReg(int(g[0]))),
]


def parse_instr(text: str):
    line = text.strip()
    for pat, build in _PATTERNS:
        m = pat.match(line)
        if m:
            ins = build(m.groups())
            bad = [r for r in reads(ins) + writes(ins) if not 0 <= r < NUM_VREGS]
            if bad:
                raise IRParseError(f"register v{bad[0]} out of range in {text!r}")
            return ins
    raise IRParseError(f"cannot parse instruction: {text!r}")


# -- kernel container --------------------------------------------------------

KERNEL_ABI = ("a_base", "b_base", "c_base", "kc", "lda", "ldb", "ldc")
SECTIONS = ("prologue", "body_m1", "body_m2", "tail", "epilogue")


@dataclass
class KernelIR:
    """One micro-kernel computing ``C_block += op(A_block) @ op(B_block)``.

    Execution contract: prologue; then (body_m1, body_m2) repeated kc // 2
    times; then tail when kc is odd; then epilogue. Loads flagged ``ahead``
    fetch data for the next k step and are dropped in the final stage.
    """

    id: KernelId
    reg_plan: "object"
    prologue: list
    body_m1: list
    body_m2: list
    tail: list
    epilogue: list
    _compiled: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def k_axis(self) -> dict[str, str]:
        """Stored axis along which k advances, per operand."""
        t = self.id.trans
        return {"a": "row" if t.trans_a else "col", "b": "col" if t.trans_b else "row"}

    def sections(self):
        return [(name, getattr(self, name)) for name in SECTIONS]

    def instructions(self):
        for _, seq in self.sections():
            yield from seq

    def dump(self) -> str:
        k = self.id
        lines = [f"# iaat-ir-version: {IR_VERSION}",
                 f"kernel {k.gemm_type.value} {k.trans.value} {k.mc}x{k.nc}"]
        if self.reg_plan is not None:
            lines.append(f"# regs {self.reg_plan.describe()}")
        for name, seq in self.sections():
            lines.append(f"{name}:")
            lines.extend(f"  {format_instr(i)}" for i in seq)
        return "\n".join(lines) + "\n"


def parse_kernel(text: str, reg_plan=None) -> KernelIR:
    """Inverse of :meth:`KernelIR.dump` (the register plan is not serialized)."""
    kid = None
    secs: dict[str, list] = {name: [] for name in SECTIONS}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("kernel "):
            _, t, x, size = line.split()
            mc, nc = size.split("x")
            kid = KernelId(GemmType(t), Transposition(x), int(mc), int(nc))
        elif line.endswith(":") and line[:-1] in secs:
            current = line[:-1]
        elif current is None:
            raise IRParseError(f"instruction outside a section: {raw!r}")
        else:
            secs[current].append(parse_instr(line))
    if kid is None:
        raise IRParseError("missing kernel header")
    return KernelIR(kid, reg_plan, **secs)
