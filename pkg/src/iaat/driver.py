"""Kernel executing plans: bind tile blocks to kernels and run a full GEMM."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .catalog import GemmType, KernelId, Transposition, has_kernel
from .kernel_ir import KernelIR
from .kernelgen import generate, optimize
from .simulator import MatrixView, ShapeError, Simulator, elem_dtype
from .tiler import TilePlan, plan as make_tile_plan


class MissingKernel(LookupError):
    pass


@dataclass(frozen=True)
class Invocation:
    kernel: KernelId
    a_offset: int
    b_offset: int
    c_offset: int
    kc: int
    i: int
    j: int


@dataclass
class ExecutingPlan:
    tile_plan: TilePlan
    lda: int
    ldb: int
    ldc: int
    invocations: list[Invocation] = field(default_factory=list)

    @property
    def gemm_type(self) -> GemmType:
        return self.tile_plan.gemm_type

    def to_dict(self) -> dict:
        d = self.tile_plan.to_dict()
        d.update(lda=self.lda, ldb=self.ldb, ldc=self.ldc)
        d["invocations"] = [{"kernel": v.kernel.symbol, "a_offset": v.a_offset,
                             "b_offset": v.b_offset, "c_offset": v.c_offset, "kc": v.kc}
                            for v in self.invocations]
        return d

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def _default_lds(tp: TilePlan) -> tuple[int, int, int]:
    x = tp.trans
    lda = tp.K if x.trans_a else tp.M
    ldb = tp.N if x.trans_b else tp.K
    return lda, ldb, tp.M


def build_plan(tile_plan: TilePlan, lda: int | None = None, ldb: int | None = None,
               ldc: int | None = None) -> ExecutingPlan:
    """Order blocks strip by strip (top to bottom), left to right within a strip."""
    dl = _default_lds(tile_plan)
    lda, ldb, ldc = (dl[0] if lda is None else lda, dl[1] if ldb is None else ldb,
                     dl[2] if ldc is None else ldc)
    x = tile_plan.trans
    ep = ExecutingPlan(tile_plan, lda, ldb, ldc)
    for b in sorted(tile_plan.blocks, key=lambda b: (b.i, b.j)):
        if not has_kernel(tile_plan.gemm_type, x, b.mc, b.nc):
            raise MissingKernel(f"no {b.mc}x{b.nc} kernel for "
                                f"{tile_plan.gemm_type.name}GEMM_{x.name}")
        a_off = b.i * lda if x.trans_a else b.i
        b_off = b.j if x.trans_b else b.j * ldb
        ep.invocations.append(Invocation(b.kernel, a_off, b_off, b.i + b.j * ldc,
                                          tile_plan.K, b.i, b.j))
    return ep


class KernelCache:
    """Optimized kernel programs generated on first use."""

    def __init__(self):
        self._irs: dict[KernelId, KernelIR] = {}

    def get(self, kernel: KernelId) -> KernelIR:
        ir = self._irs.get(kernel)
        if ir is None:
            ir = self._irs[kernel] = optimize(generate(kernel))
        return ir


_DEFAULT_CACHE = KernelCache()


def _per_batch(v, batch: int, dtype) -> np.ndarray:
    arr = np.asarray(v, dtype=dtype).reshape(-1)
    return np.broadcast_to(arr, (batch,)) if arr.size == 1 else arr


def execute(plan: ExecutingPlan, alpha, a: MatrixView, b: MatrixView, beta, c: MatrixView,
            kernels: KernelCache | None = None, sim: Simulator | None = None) -> None:
    """c = alpha * op(a) @ op(b) + beta * c through the plan's kernels.

    C is scaled by beta first; kernels then accumulate. When alpha != 1 the A
    operand is copied once, pre-scaled by alpha. alpha/beta may be per-batch.
    """
    tp = plan.tile_plan
    t = tp.gemm_type
    x = tp.trans
    M, N, K = tp.M, tp.N, tp.K
    ash = (K, M) if x.trans_a else (M, K)
    bsh = (N, K) if x.trans_b else (K, N)
    for name, v, shape, ld in (("A", a, ash, plan.lda), ("B", b, bsh, plan.ldb),
                               ("C", c, (M, N), plan.ldc)):
        if v.kind != t:
            raise ShapeError(f"{name} has kind {v.kind.name}, plan is {t.name}")
        if (v.rows, v.cols) != shape:
            raise ShapeError(f"{name} is {v.rows}x{v.cols}, expected {shape[0]}x{shape[1]}")
        if v.ld != ld:
            raise ShapeError(f"{name} leading dimension {v.ld} differs from plan's {ld}")
    batch = c.batch
    if a.batch != batch or b.batch != batch:
        raise ShapeError("batch sizes differ")
    dt = elem_dtype(t)
    al = _per_batch(alpha, batch, dt)
    be = _per_batch(beta, batch, dt)
    kernels = kernels or _DEFAULT_CACHE
    sim = sim or Simulator()

    # beta pass; C is not read where beta == 0
    if not np.all(be == 1):
        cm = c.to_matrix()
        c.assign(np.where(be == 0, dt(0), be * cm).astype(dt))
    if np.all(al == 0):
        return
    if not np.all(al == 1):
        scaled = (al * a.to_matrix()).astype(dt)
        a = MatrixView.from_matrix(scaled, t, ld=a.ld)
    for inv in plan.invocations:
        ir = kernels.get(inv.kernel)
        mc, nc = inv.kernel.mc, inv.kernel.nc
        av = MatrixView(a.data, *((K, mc) if x.trans_a else (mc, K)), a.ld, t, a.offset + inv.a_offset)
        bv = MatrixView(b.data, *((nc, K) if x.trans_b else (K, nc)), b.ld, t, b.offset + inv.b_offset)
        cv = MatrixView(c.data, mc, nc, c.ld, t, c.offset + inv.c_offset)
        sim.run_kernel(ir, av, bv, cv, inv.kc)


def gemm(gemm_type, trans, alpha, a: MatrixView, b: MatrixView, beta, c: MatrixView,
         mode: str = "auto") -> ExecutingPlan:
    """Plan and execute in one call; returns the plan used."""
    t = GemmType(gemm_type)
    M, N = c.rows, c.cols
    x = Transposition(trans)
    K = a.rows if x.trans_a else a.cols
    ep = build_plan(make_tile_plan(t, x, M, N, K, mode), a.ld, b.ld, c.ld)
    execute(ep, alpha, a, b, beta, c)
    return ep


def gflops(gemm_type, M: int, N: int, K: int, seconds: float) -> float:
    """2MNK/t for real types and 8MNK/t for complex ones, in GFLOPS."""
    if seconds <= 0:
        raise ValueError("seconds must be positive")
    factor = 8 if GemmType(gemm_type).is_complex else 2
    return factor * M * N * K / seconds / 1e9


def time_execute(plan: ExecutingPlan, alpha, a, b, beta, c, min_seconds: float = 0.05,
                 warmup: int = 1) -> tuple[float, int]:
    """Mean seconds per simulated execute (interpreter time, not hardware time)."""
    for _ in range(warmup):
        execute(plan, alpha, a, b, beta, c)
    iters, total = 0, 0.0
    while total < min_seconds:
        t0 = time.perf_counter()
        execute(plan, alpha, a, b, beta, c)
        total += time.perf_counter() - t0
        iters += 1
    return total / iters, iters
