"""Split the 32 vector registers into C, A and B groups for one kernel size.

A kernel multiplies one column of op(A) by one row of op(B) per k step. One
operand is held as vectors; the other supplies broadcast lanes. Three layouts
are used:

* ``col``: C vectorized along rows (``nc * ceil(mc/e)`` registers), A columns
  are vectors, B supplies scalars.
* ``row``: C vectorized along columns (``mc * ceil(nc/e)`` registers, stored
  with lane stores), B rows are vectors, A supplies scalars.
* ``elem``: one register per C element; both operands scalar (TN kernels).

The default layout per transposition is tried first; if it exceeds the budget
the other layout and then single-buffered operand groups are tried in turn.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

from .catalog import GemmType, KernelId, Transposition, has_kernel
from .kernel_ir import NUM_VREGS

A_STRATEGIES = ("ANTwoCC", "ATEachCTwo", "ATEachCOne", "ATTwoRR", "ANOneCC", "ATOneRR")
B_STRATEGIES = ("BTTwoCC", "BNEachCTwo", "BNEachCOne", "BNTwoRR", "BTOneCC", "BNOneRR")
TN_STRATEGY = "TNScalar"

DEFAULT_SCHEME = {Transposition.NN: "col", Transposition.NT: "col",
                  Transposition.TT: "row", Transposition.TN: "elem"}


class RegisterBudgetExceeded(RuntimeError):
    def __init__(self, kernel: KernelId, needed: int):
        super().__init__(f"{kernel}: needs {needed} vector registers, only {NUM_VREGS} exist")
        self.kernel = kernel
        self.needed = needed


class NotInCatalog(ValueError):
    pass


def strategy_count(name: str, x: int, elenum: int) -> int:
    """Registers a strategy needs for ``x`` items (mc for A, nc for B)."""
    kind = name[1:] if name[0] in "AB" and name != TN_STRATEGY else name
    if kind in ("NTwoCC", "TTwoCC", "TTwoRR", "NTwoRR"):
        return 2 * ceil(x / elenum)
    if kind in ("NOneCC", "TOneCC", "TOneRR", "NOneRR"):
        return ceil(x / elenum)
    if kind in ("TEachCTwo", "NEachCTwo"):
        return 2 * x
    if kind in ("TEachCOne", "NEachCOne"):
        return 2 * x if elenum == 1 else x
    if kind == TN_STRATEGY:
        return 2 * x
    raise ValueError(f"unknown strategy {name!r}")


@dataclass(frozen=True)
class RegisterPlan:
    """Concrete register assignment.

    Operand modes: ``vec-ahead``/``vec-current`` (vector operand, double or
    single buffered), ``lanes-ahead``/``lanes-current`` (scalars contiguous
    along the item axis, item t in register t // e lane t % e), ``pair``
    (k and k+1 of one item in lanes 0 and 1, or in two registers when e == 1)
    and ``elem`` (one element per register, double buffered).
    M1/M2 lists are identical for single-buffered and shared-pair groups.
    """

    kernel: KernelId
    scheme: str
    a_mode: str
    b_mode: str
    c_regs: tuple[int, ...]
    a_regs_m1: tuple[int, ...]
    a_regs_m2: tuple[int, ...]
    b_regs_m1: tuple[int, ...]
    b_regs_m2: tuple[int, ...]
    a_strategy: str
    b_strategy: str

    @property
    def a_regs(self) -> tuple[int, ...]:
        return _union(self.a_regs_m1, self.a_regs_m2)

    @property
    def b_regs(self) -> tuple[int, ...]:
        return _union(self.b_regs_m1, self.b_regs_m2)

    @property
    def total(self) -> int:
        return len(self.c_regs) + len(self.a_regs) + len(self.b_regs)

    def describe(self) -> str:
        return (f"scheme={self.scheme} C={len(self.c_regs)} "
                f"A={len(self.a_regs)}:{self.a_strategy}:{self.a_mode} "
                f"B={len(self.b_regs)}:{self.b_strategy}:{self.b_mode} total={self.total}")


def _union(x, y):
    return tuple(dict.fromkeys(x + y))


@dataclass(frozen=True)
class _Layout:
    scheme: str
    a_mode: str
    b_mode: str
    a_strategy: str
    b_strategy: str
    c: int
    a: tuple[int, int, bool]  # (per-set count, sets, shared between stages)
    b: tuple[int, int, bool]


def _layout(t: GemmType, x: Transposition, mc: int, nc: int, scheme: str,
            vec_sets: int, scalar_sets: int) -> _Layout:
    e = t.elenum
    if scheme == "elem":
        return _Layout("elem", "elem", "elem", TN_STRATEGY, TN_STRATEGY,
                       mc * nc, (mc, 2, False), (nc, 2, False))
    ahead_v = vec_sets == 2
    ahead_s = scalar_sets == 2
    if scheme == "col":
        c = nc * ceil(mc / e)
        a_name = ("ATTwoRR" if ahead_v else "ATOneRR") if x.trans_a else \
                 ("ANTwoCC" if ahead_v else "ANOneCC")
        a = (ceil(mc / e), vec_sets, not ahead_v)
        a_mode = "vec-ahead" if ahead_v else "vec-current"
        if x.trans_b:
            b_name = "BTTwoCC" if ahead_s else "BTOneCC"
            b = (ceil(nc / e), scalar_sets, not ahead_s)
            b_mode = "lanes-ahead" if ahead_s else "lanes-current"
        else:
            b_name, b_mode = "BNEachCOne", "pair"
            b = (nc, 2, False) if e == 1 else (nc, 1, True)
        return _Layout("col", a_mode, b_mode, a_name, b_name, c, a, b)
    c = mc * ceil(nc / e)
    b_name = ("BTTwoCC" if ahead_v else "BTOneCC") if x.trans_b else \
             ("BNTwoRR" if ahead_v else "BNOneRR")
    b = (ceil(nc / e), vec_sets, not ahead_v)
    b_mode = "vec-ahead" if ahead_v else "vec-current"
    if x.trans_a:
        a_name, a_mode = "ATEachCOne", "pair"
        a = (mc, 2, False) if e == 1 else (mc, 1, True)
    else:
        a_name = "ANTwoCC" if ahead_s else "ANOneCC"
        a = (ceil(mc / e), scalar_sets, not ahead_s)
        a_mode = "lanes-ahead" if ahead_s else "lanes-current"
    return _Layout("row", a_mode, b_mode, a_name, b_name, c, a, b)


def _count(lay: _Layout) -> int:
    def group(g):
        n, sets, shared = g
        return n if shared or sets == 1 else n * sets
    return lay.c + group(lay.a) + group(lay.b)


def candidate_layouts(t: GemmType, x: Transposition, mc: int, nc: int) -> list[_Layout]:
    """Layouts in preference order; duplicates removed."""
    default = DEFAULT_SCHEME[x]
    schemes = [default] + [s for s in ("col", "row") if s != default]
    out: list[_Layout] = []
    if default == "elem":
        out.append(_layout(t, x, mc, nc, "elem", 2, 2))
        schemes = schemes[1:]
    for dv, ds in ((2, 2), (2, 1), (1, 2), (1, 1)):
        for s in schemes:
            lay = _layout(t, x, mc, nc, s, dv, ds)
            if lay not in out:
                out.append(lay)
    return out


def _choose(kernel: KernelId) -> _Layout:
    lays = candidate_layouts(kernel.gemm_type, kernel.trans, kernel.mc, kernel.nc)
    for lay in lays:
        if _count(lay) <= NUM_VREGS:
            return lay
    raise RegisterBudgetExceeded(kernel, min(_count(l) for l in lays))


def _kernel(gemm_type, trans, mc, nc, check_catalog: bool) -> KernelId:
    t, x = GemmType(gemm_type), Transposition(trans)
    if mc < 1 or nc < 1:
        raise NotInCatalog(f"kernel sizes must be positive, got {mc}x{nc}")
    if check_catalog and not has_kernel(t, x, mc, nc):
        raise NotInCatalog(f"{t.name}GEMM_{x.name} has no {mc}x{nc} kernel")
    return KernelId(t, x, mc, nc)


def group_sizes(gemm_type, trans, mc: int, nc: int, check_catalog: bool = True) -> tuple[int, int, int]:
    plan = allocate(gemm_type, trans, mc, nc, check_catalog)
    return len(plan.c_regs), len(plan.a_regs), len(plan.b_regs)


def allocate(gemm_type, trans, mc: int, nc: int, check_catalog: bool = True) -> RegisterPlan:
    kernel = _kernel(gemm_type, trans, mc, nc, check_catalog)
    lay = _choose(kernel)
    nxt = 0

    def take(n):
        nonlocal nxt
        regs = tuple(range(nxt, nxt + n))
        nxt += n
        return regs

    c = take(lay.c)
    groups = []
    for n, sets, shared in (lay.a, lay.b):
        if shared or sets == 1:
            r = take(n)
            groups.append((r, r))
        else:
            groups.append((take(n), take(n)))
    (a1, a2), (b1, b2) = groups
    return RegisterPlan(kernel, lay.scheme, lay.a_mode, lay.b_mode, c, a1, a2, b1, b2,
                        lay.a_strategy, lay.b_strategy)
