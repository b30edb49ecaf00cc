"""Instruction-level interpreter for kernel programs plus the reference GEMM.

Every matrix carries a trailing batch axis so one interpretation runs many
independent inputs at once (seeds, alpha/beta variants). Storage is a 2-D
array ``(n_reals, batch)``; complex elements are stored interleaved.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._fma import fma_for
from .catalog import GemmType, Transposition
from .kernel_ir import (CmlaScalar, CmlaVector, FmlaScalar, FmlaVector, FmlsScalar, KernelIR,
                        LoadLane, LoadLanePair, LoadVector, NegVector, StoreLane, StoreVector,
                        ZeroReg, NUM_VREGS)


class SimulatorFault(RuntimeError):
    """Out-of-bounds access or read of an uninitialized register lane."""


class ShapeError(ValueError):
    pass


def real_dtype(kind: GemmType):
    return np.float32 if kind.real_bytes == 4 else np.float64


def elem_dtype(kind: GemmType):
    if kind.is_complex:
        return np.complex64 if kind.real_bytes == 4 else np.complex128
    return real_dtype(kind)


@dataclass
class MatrixView:
    """Column-major window into shared storage.

    ``data`` has shape (n_reals, batch); element (i, j) starts at real index
    ``(offset + i + j*ld) * cf`` with cf = 2 for complex kinds.
    """

    data: np.ndarray
    rows: int
    cols: int
    ld: int
    kind: GemmType
    offset: int = 0

    def __post_init__(self):
        self.kind = GemmType(self.kind)
        if self.ld < max(1, self.rows):
            raise ShapeError(f"leading dimension {self.ld} < rows {self.rows}")
        if self.data.ndim != 2 or self.data.dtype != real_dtype(self.kind):
            raise ShapeError("storage must be a 2-D array of the kind's real dtype")
        if self.rows and self.cols:
            last = self.offset + self.rows - 1 + (self.cols - 1) * self.ld
            if self.offset < 0 or (last + 1) * self.cf > self.data.shape[0]:
                raise ShapeError("view extends past its storage")

    @property
    def cf(self) -> int:
        return 2 if self.kind.is_complex else 1

    @property
    def batch(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_matrix(cls, mat, kind, ld: int | None = None, fill=np.nan) -> "MatrixView":
        """Copy a (rows, cols[, batch]) array into fresh column-major storage.

        Padding rows between ``rows`` and ``ld`` are set to ``fill`` so stray
        reads surface as NaNs.
        """
        kind = GemmType(kind)
        mat = np.asarray(mat)
        if mat.ndim == 2:
            mat = mat[:, :, None]
        rows, cols, batch = mat.shape
        ld = rows if ld is None else ld
        cf = 2 if kind.is_complex else 1
        store = np.full((max(ld * cols, 1), cf, batch), fill, dtype=real_dtype(kind))
        view = cls(store.reshape(-1, batch), rows, cols, max(ld, 1), kind)
        view.assign(mat)
        return view

    @classmethod
    def zeros(cls, rows: int, cols: int, kind, batch: int = 1, ld: int | None = None):
        kind = GemmType(kind)
        return cls.from_matrix(np.zeros((rows, cols, batch), elem_dtype(kind)), kind, ld)

    def _index(self) -> np.ndarray:
        i = np.arange(self.rows)[:, None]
        j = np.arange(self.cols)[None, :]
        return self.offset + i + j * self.ld

    def to_matrix(self) -> np.ndarray:
        """(rows, cols, batch) array, complex for complex kinds."""
        idx = self._index()
        if self.kind.is_complex:
            re = self.data[2 * idx]
            im = self.data[2 * idx + 1]
            return (re + 1j * im).astype(elem_dtype(self.kind))
        return self.data[idx].copy()

    def assign(self, mat) -> None:
        mat = np.asarray(mat)
        if mat.ndim == 2:
            mat = mat[:, :, None]
        if mat.shape[:2] != (self.rows, self.cols):
            raise ShapeError(f"expected {self.rows}x{self.cols}, got {mat.shape[:2]}")
        mat = np.broadcast_to(mat, (self.rows, self.cols, self.batch))
        idx = self._index()
        if self.kind.is_complex:
            self.data[2 * idx] = mat.real
            self.data[2 * idx + 1] = mat.imag
        else:
            self.data[idx] = mat

    def block(self, r0: int, c0: int, rows: int, cols: int) -> "MatrixView":
        if r0 < 0 or c0 < 0 or r0 + rows > self.rows or c0 + cols > self.cols:
            raise ShapeError(f"block ({r0},{c0},{rows},{cols}) outside {self.rows}x{self.cols}")
        return MatrixView(self.data, rows, cols, self.ld, self.kind, self.offset + r0 + c0 * self.ld)


# -- compilation ---------------------------------------------------------------

_BASE = {"a": 0, "b": 1, "c": 2}


def _macs(ins) -> int:
    """Real multiply-adds performed by one instruction."""
    if isinstance(ins, (FmlaScalar, FmlaVector, FmlsScalar)):
        return ins.lanes
    if isinstance(ins, (CmlaScalar, CmlaVector)):
        return 2 * ins.lanes * len(ins.rot)
    return 0


def _cmla(fma, rot, ore, oim, nre, nim, mre, mim):
    if rot == 0:
        fma(nre, mre, ore, out=ore)
        fma(nre, mim, oim, out=oim)
    elif rot == 90:
        fma(nim, -mim, ore, out=ore)
        fma(nim, mre, oim, out=oim)
    elif rot == 180:
        fma(nre, -mre, ore, out=ore)
        fma(nre, -mim, oim, out=oim)
    else:
        fma(nim, mim, ore, out=ore)
        fma(nim, -mre, oim, out=oim)


def _compile_instr(ins, lds, cf, fma):
    if isinstance(ins, (LoadVector, LoadLane, LoadLanePair, StoreVector, StoreLane)):
        bi = _BASE[ins.mem.base]
        ld = lds[bi]
        rel = (ins.mem.row + ins.mem.col * ld) * cf
    if isinstance(ins, LoadVector):
        d, n = ins.dst, ins.width * cf

        def f(R, M, O):
            o = O[bi] + rel
            R[d, :n] = M[bi][o:o + n]
    elif isinstance(ins, LoadLane):
        d, lo = ins.dst, ins.lane * cf

        def f(R, M, O):
            o = O[bi] + rel
            R[d, lo:lo + cf] = M[bi][o:o + cf]
    elif isinstance(ins, LoadLanePair):
        d, lo, step = ins.dst, ins.lane * cf, ld * cf

        def f(R, M, O):
            o = O[bi] + rel
            R[d, lo:lo + cf] = M[bi][o:o + cf]
            R[d, lo + cf:lo + 2 * cf] = M[bi][o + step:o + step + cf]
    elif isinstance(ins, StoreVector):
        s, n = ins.src, ins.width * cf

        def f(R, M, O):
            o = O[bi] + rel
            M[bi][o:o + n] = R[s, :n]
    elif isinstance(ins, StoreLane):
        s, lo = ins.src, ins.lane * cf

        def f(R, M, O):
            o = O[bi] + rel
            M[bi][o:o + cf] = R[s, lo:lo + cf]
    elif isinstance(ins, ZeroReg):
        d = ins.dst

        def f(R, M, O):
            R[d] = 0
    elif isinstance(ins, FmlaScalar):
        o_, a_, b_, lane, L = ins.out, ins.in1, ins.in2, ins.lane, ins.lanes

        def f(R, M, O):
            acc = R[o_, :L]
            fma(R[a_, :L], R[b_, lane], acc, out=acc)
    elif isinstance(ins, FmlaVector):
        o_, a_, b_, L = ins.out, ins.in1, ins.in2, ins.lanes

        def f(R, M, O):
            acc = R[o_, :L]
            fma(R[a_, :L], R[b_, :L], acc, out=acc)
    elif isinstance(ins, FmlsScalar):
        o_, a_, b_, lane, L = ins.out, ins.in1, ins.in2, ins.lane, ins.lanes

        def f(R, M, O):
            acc = R[o_, :L]
            fma(-R[a_, :L], R[b_, lane], acc, out=acc)
    elif isinstance(ins, NegVector):
        o_, a_, L = ins.out, ins.in1, ins.lanes

        def f(R, M, O):
            np.negative(R[a_, :L], out=R[o_, :L])
    elif isinstance(ins, (CmlaScalar, CmlaVector)):
        o_, a_, b_, rots, L2 = ins.out, ins.in1, ins.in2, ins.rot, 2 * ins.lanes
        lane = ins.lane if isinstance(ins, CmlaScalar) else None

        def f(R, M, O):
            n = R[a_]
            if lane is None:
                mre, mim = R[b_, 0:L2:2], R[b_, 1:L2:2]
            else:
                mre, mim = R[b_, 2 * lane], R[b_, 2 * lane + 1]
            for rot in rots:
                # each rotation sees the accumulator updated by the previous one
                _cmla(fma, rot, R[o_, 0:L2:2], R[o_, 1:L2:2], n[0:L2:2], n[1:L2:2], mre, mim)
    else:
        raise TypeError(f"cannot interpret {ins!r}")
    return f


def _lane_masks(ins, cf: int):
    """(reads, writes) as {reg: real-lane bitmask}."""
    def span(lo, n):
        return ((1 << n) - 1) << lo

    rd: dict[int, int] = {}
    wr: dict[int, int] = {}

    def add(d, reg, mask):
        d[reg] = d.get(reg, 0) | mask

    if isinstance(ins, LoadVector):
        add(wr, ins.dst, span(0, ins.width * cf))
    elif isinstance(ins, LoadLane):
        add(wr, ins.dst, span(ins.lane * cf, cf))
    elif isinstance(ins, LoadLanePair):
        add(wr, ins.dst, span(ins.lane * cf, 2 * cf))
    elif isinstance(ins, StoreVector):
        add(rd, ins.src, span(0, ins.width * cf))
    elif isinstance(ins, StoreLane):
        add(rd, ins.src, span(ins.lane * cf, cf))
    elif isinstance(ins, ZeroReg):
        add(wr, ins.dst, span(0, 16))
    elif isinstance(ins, (FmlaScalar, FmlsScalar)):
        add(rd, ins.in1, span(0, ins.lanes))
        add(rd, ins.in2, span(ins.lane, 1))
        add(rd, ins.out, span(0, ins.lanes))
        add(wr, ins.out, span(0, ins.lanes))
    elif isinstance(ins, FmlaVector):
        for r in (ins.in1, ins.in2, ins.out):
            add(rd, r, span(0, ins.lanes))
        add(wr, ins.out, span(0, ins.lanes))
    elif isinstance(ins, NegVector):
        add(rd, ins.in1, span(0, ins.lanes))
        add(wr, ins.out, span(0, ins.lanes))
    elif isinstance(ins, CmlaScalar):
        add(rd, ins.in1, span(0, 2 * ins.lanes))
        add(rd, ins.in2, span(2 * ins.lane, 2))
        add(rd, ins.out, span(0, 2 * ins.lanes))
        add(wr, ins.out, span(0, 2 * ins.lanes))
    elif isinstance(ins, CmlaVector):
        for r in (ins.in1, ins.in2, ins.out):
            add(rd, r, span(0, 2 * ins.lanes))
        add(wr, ins.out, span(0, 2 * ins.lanes))
    return rd, wr


def _extents(seq, lds):
    """Per base: (min row, max row, min col, max col) touched, in stored coordinates."""
    ext: dict[str, list[int]] = {}
    for ins in seq:
        mem = getattr(ins, "mem", None)
        if mem is None:
            continue
        r0 = r1 = mem.row
        c0 = c1 = mem.col
        if isinstance(ins, (LoadVector, StoreVector)):
            r1 = mem.row + ins.width - 1
        elif isinstance(ins, LoadLanePair):
            c1 = mem.col + 1
        e = ext.setdefault(mem.base, [r0, r1, c0, c1])
        e[0], e[1], e[2], e[3] = min(e[0], r0), max(e[1], r1), min(e[2], c0), max(e[3], c1)
    return ext


class _Compiled:
    def __init__(self, ir: KernelIR, lds: tuple[int, int, int]):
        kind = ir.id.gemm_type
        self.cf = 2 if kind.is_complex else 1
        fma = fma_for(real_dtype(kind))
        secs = {name: list(seq) for name, seq in ir.sections()}
        secs["body_m2_last"] = [i for i in ir.body_m2 if not getattr(i, "ahead", False)]
        self.raw = secs
        self.ops = {n: [_compile_instr(i, lds, self.cf, fma) for i in s] for n, s in secs.items()}
        self.macs = {n: sum(_macs(i) for i in s) for n, s in secs.items()}
        self.ext = {n: _extents(s, lds) for n, s in secs.items()}
        self.init_checked: set = set()


def _schedule(kc: int) -> list[tuple[str, int]]:
    seq = [("prologue", 0)]
    pairs = kc // 2
    for p in range(pairs):
        seq.append(("body_m1", 2 * p))
        last = p == pairs - 1 and kc % 2 == 0
        seq.append(("body_m2_last" if last else "body_m2", 2 * p + 1))
    if kc % 2:
        seq.append(("tail", kc - 1))
    seq.append(("epilogue", 0))
    return seq


def _init_pattern(kc: int) -> list[str]:
    """Section sequence whose init check covers every run with this kc class.

    Lane-initialization state only grows, so two loop iterations suffice.
    """
    if kc <= 4:
        return [s for s, _ in _schedule(kc)]
    return [s for s, _ in _schedule(4 + kc % 2)]


class Simulator:
    """Interprets kernels; ``flops`` accumulates real multiply-adds executed."""

    def __init__(self):
        self.flops = 0

    def _compiled(self, ir: KernelIR, lds) -> _Compiled:
        comp = ir._compiled.get(lds)
        if comp is None:
            comp = ir._compiled[lds] = _Compiled(ir, lds)
        return comp

    def _check_init(self, comp: _Compiled, kc: int) -> None:
        pattern = tuple(_init_pattern(kc))
        if pattern in comp.init_checked:
            return
        state = [0] * NUM_VREGS
        for sec in pattern:
            for n, ins in enumerate(comp.raw[sec]):
                rd, wr = _lane_masks(ins, comp.cf)
                for reg, mask in rd.items():
                    if mask & ~state[reg]:
                        raise SimulatorFault(
                            f"read of uninitialized lanes of v{reg} in {sec}[{n}]: {ins}")
                for reg, mask in wr.items():
                    state[reg] |= mask
        comp.init_checked.add(pattern)

    def run_kernel(self, ir: KernelIR, a: MatrixView, b: MatrixView, c: MatrixView, kc: int) -> int:
        """C block += op(A block) @ op(B block); returns multiply-adds executed."""
        if kc < 1:
            raise ShapeError("kc must be >= 1")
        kind = ir.id.gemm_type
        for v in (a, b, c):
            if v.kind != kind:
                raise ShapeError(f"view kind {v.kind.name} does not match kernel {kind.name}")
        if not a.batch == b.batch == c.batch:
            raise ShapeError("batch sizes differ")
        views = (a, b, c)
        comp = self._compiled(ir, (a.ld, b.ld, c.ld))
        self._check_init(comp, kc)
        axis = ir.k_axis
        step = {"a": 1 if axis["a"] == "row" else a.ld, "b": 1 if axis["b"] == "row" else b.ld}
        cf = comp.cf
        R = np.zeros((NUM_VREGS, 16 // kind.real_bytes, a.batch), dtype=real_dtype(kind))
        M = (a.data, b.data, c.data)
        macs = 0
        for sec, k in _schedule(kc):
            for base, (r0, r1, c0, c1) in comp.ext[sec].items():
                v = views[_BASE[base]]
                if base != "c":
                    if axis[base] == "row":
                        r0, r1 = r0 + k, r1 + k
                    else:
                        c0, c1 = c0 + k, c1 + k
                if r0 < 0 or c0 < 0 or r1 >= v.rows or c1 >= v.cols:
                    raise SimulatorFault(
                        f"{ir.id} {sec} at k={k}: {base} access rows {r0}..{r1} cols {c0}..{c1} "
                        f"outside {v.rows}x{v.cols}")
            O = ((a.offset + k * step["a"]) * cf, (b.offset + k * step["b"]) * cf, c.offset * cf)
            for op in comp.ops[sec]:
                op(R, M, O)
            macs += comp.macs[sec]
        self.flops += macs
        return macs


def run_kernel(ir: KernelIR, a: MatrixView, b: MatrixView, c: MatrixView, kc: int) -> int:
    return Simulator().run_kernel(ir, a, b, c, kc)


def operand_shapes(trans, mc: int, nc: int, kc: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Stored (rows, cols) of the A and B blocks a kernel reads."""
    x = Transposition(trans)
    a = (kc, mc) if x.trans_a else (mc, kc)
    b = (nc, kc) if x.trans_b else (kc, nc)
    return a, b


# -- reference GEMM --------------------------------------------------------------

def _as_batch(v, batch: int, dtype) -> np.ndarray:
    arr = np.asarray(v, dtype=dtype)
    return np.broadcast_to(arr.reshape(-1) if arr.ndim else arr, (batch,))


def naive_gemm(gemm_type, trans_a: bool, trans_b: bool, M: int, N: int, K: int,
               alpha, a: MatrixView, beta, c: MatrixView, b: MatrixView) -> None:
    """C = alpha * op(A) @ op(B) + beta * C in element precision.

    Products are accumulated over k in increasing order, one k at a time;
    C is not read when beta is zero. alpha and beta may be per-batch arrays.
    """
    kind = GemmType(gemm_type)
    ash = (K, M) if trans_a else (M, K)
    bsh = (N, K) if trans_b else (K, N)
    if (a.rows, a.cols) != ash or (b.rows, b.cols) != bsh or (c.rows, c.cols) != (M, N):
        raise ShapeError(f"shapes A {a.rows}x{a.cols}, B {b.rows}x{b.cols}, C {c.rows}x{c.cols} "
                         f"inconsistent with M={M} N={N} K={K}")
    dt = elem_dtype(kind)
    batch = c.batch
    A = a.to_matrix()
    B = b.to_matrix()
    if trans_a:
        A = A.transpose(1, 0, 2)
    if trans_b:
        B = B.transpose(1, 0, 2)
    acc = np.zeros((M, N, batch), dtype=dt)
    for k in range(K):
        acc = acc + A[:, k, None, :] * B[None, k, :, :]
    al = _as_batch(alpha, batch, dt)
    be = _as_batch(beta, batch, dt)
    out = al * acc
    if np.any(be != 0):
        scaled = np.where(be == 0, dt(0), be * c.to_matrix())
        out = out + scaled
    c.assign(out.astype(dt))


def block_reference(kernel, a: MatrixView, b: MatrixView, c: MatrixView, kc: int) -> np.ndarray:
    """Expected kernel result ``C + op(A) @ op(B)`` without touching ``c``."""
    scratch = MatrixView.from_matrix(c.to_matrix(), c.kind)
    naive_gemm(kernel.gemm_type, kernel.trans.trans_a, kernel.trans.trans_b, kernel.mc, kernel.nc,
               kc, 1, a, 1, scratch, b)
    return scratch.to_matrix()


def rel_error(x: np.ndarray, y: np.ndarray, axis=None, scale=None) -> np.ndarray:
    """max|x - y| / max|y|; per batch entry when ``axis`` names the other axes.

    With ``scale`` (see :func:`gemm_magnitude`) the denominator is
    max(max|y|, scale), which keeps cancellation in tiny outputs from
    inflating the error far beyond what rounding can explain.
    """
    num = np.max(np.abs(x - y), axis=axis)
    den = np.max(np.abs(y), axis=axis)
    if scale is not None:
        den = np.maximum(den, scale)
    return np.where(den > 0, num / np.where(den > 0, den, 1), num)


def gemm_magnitude(trans_a: bool, trans_b: bool, alpha, a: np.ndarray, b: np.ndarray, beta,
                   c: np.ndarray) -> np.ndarray:
    """Per-batch max over C of |alpha| sum_k |a_ik||b_kj| + |beta||c_ij|, in float64.

    Inputs are (rows, cols, batch) arrays holding the stored operands.
    """
    A = np.abs(a).astype(np.float64)
    B = np.abs(b).astype(np.float64)
    if trans_a:
        A = A.transpose(1, 0, 2)
    if trans_b:
        B = B.transpose(1, 0, 2)
    batch = c.shape[2]
    al = np.abs(_as_batch(alpha, batch, np.complex128)).real
    be = np.abs(_as_batch(beta, batch, np.complex128)).real
    mag = al * np.einsum("ikb,kjb->ijb", A, B) + be * np.abs(c).astype(np.float64)
    return mag.max(axis=(0, 1))


def tolerance(kind) -> float:
    return 1e-5 if GemmType(kind).real_bytes == 4 else 1e-12


def random_matrix(rng: np.random.Generator, rows: int, cols: int, kind, batch: int = 1) -> np.ndarray:
    """Uniform(-1, 1) entries (real and imaginary parts independent)."""
    kind = GemmType(kind)
    shape = (rows, cols, batch)
    m = rng.uniform(-1, 1, shape)
    if kind.is_complex:
        m = m + 1j * rng.uniform(-1, 1, shape)
    return m.astype(elem_dtype(kind))
