"""Run-time tiling of the M x N output into catalog-sized kernel blocks.

Cost model: each block (m, n) streams m + n operand elements per k step, and
C is read and written once, so a plan costs ``sum(m + n) * K + 2 * M * N``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .catalog import (GemmType, KernelId, Transposition, has_kernel, heights, kernels_for,
                      widths_for)

SMALL_LIMIT = 80
SMALL_LIMIT_TN = 32
OPTIMAL_LIMIT = 512


class TilingError(ValueError):
    pass


class Block(NamedTuple):
    i: int
    j: int
    mc: int
    nc: int
    kernel: KernelId


@dataclass(frozen=True)
class OperandBlock:
    """Stored-coordinate window of A or B read by one kernel invocation."""
    row: int
    col: int
    rows: int
    cols: int


@dataclass
class TilePlan:
    gemm_type: GemmType
    trans: Transposition
    M: int
    N: int
    K: int
    blocks: list[Block] = field(default_factory=list)
    mode: str = "optimal"

    @property
    def blocksC(self) -> list[Block]:
        return self.blocks

    @property
    def blocksA(self) -> list[OperandBlock]:
        if self.trans.trans_a:
            return [OperandBlock(0, b.i, self.K, b.mc) for b in self.blocks]
        return [OperandBlock(b.i, 0, b.mc, self.K) for b in self.blocks]

    @property
    def blocksB(self) -> list[OperandBlock]:
        if self.trans.trans_b:
            return [OperandBlock(b.j, 0, b.nc, self.K) for b in self.blocks]
        return [OperandBlock(0, b.j, self.K, b.nc) for b in self.blocks]

    @property
    def perimeter(self) -> int:
        """sum(m_i + n_i) over blocks: the K coefficient of the cost."""
        return sum(b.mc + b.nc for b in self.blocks)

    def strips(self) -> list[tuple[int, list[int]]]:
        """(height, widths) per row strip, top to bottom."""
        out: dict[int, tuple[int, list[int]]] = {}
        for b in sorted(self.blocks, key=lambda b: (b.i, b.j)):
            out.setdefault(b.i, (b.mc, []))[1].append(b.nc)
        return [out[i] for i in sorted(out)]

    def to_dict(self) -> dict:
        return {"type": self.gemm_type.value, "trans": self.trans.value,
                "M": self.M, "N": self.N, "K": self.K, "mode": self.mode,
                "blocks": [{"i": b.i, "j": b.j, "mc": b.mc, "nc": b.nc} for b in self.blocks],
                "sum_mn": self.perimeter, "memops": memops_cost(self)}

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def memops_cost(plan: TilePlan) -> int:
    return plan.perimeter * plan.K + 2 * plan.M * plan.N


def check_partition(plan: TilePlan) -> None:
    """Raise TilingError unless the blocks cover M x N exactly once with catalog kernels."""
    if not plan.blocks:
        raise TilingError("plan has no blocks")
    sizes = set(kernels_for(plan.gemm_type, plan.trans))
    for b in plan.blocks:
        if (b.mc, b.nc) not in sizes:
            raise TilingError(f"block {b.mc}x{b.nc} is not a catalog kernel")
    i, j, m, n = np.array([(b.i, b.j, b.mc, b.nc) for b in plan.blocks]).T
    if (i < 0).any() or (j < 0).any() or (i + m > plan.M).any() or (j + n > plan.N).any():
        raise TilingError("a block leaves the matrix")
    # 2-D difference array: +1 at each block's corners, cumulative sums give coverage
    d = np.zeros((plan.M + 1, plan.N + 1), dtype=np.int64)
    np.add.at(d, (i, j), 1)
    np.add.at(d, (i + m, j), -1)
    np.add.at(d, (i, j + n), -1)
    np.add.at(d, (i + m, j + n), 1)
    cover = d.cumsum(0).cumsum(1)[:plan.M, :plan.N]
    if not (cover == 1).all():
        r, c = np.argwhere(cover != 1)[0]
        raise TilingError(f"element ({r},{c}) covered {cover[r, c]} times")


@lru_cache(maxsize=None)
def _kernel_id(t, x, h, w) -> KernelId:
    return KernelId(t, x, h, w)


def _plan_from_strips(t, x, M, N, K, strips, mode) -> TilePlan:
    blocks = []
    i = 0
    for h, widths in strips:
        j = 0
        for w in widths:
            blocks.append(Block(i, j, h, w, _kernel_id(t, x, h, w)))
            j += w
        i += h
    plan = TilePlan(t, x, M, N, K, blocks, mode)
    return plan


def _expand(strips: list[tuple[int, int]]) -> list[int]:
    return [d for d, n in strips for _ in range(n)]


def _merge(pieces: list[int]) -> list[tuple[int, int]]:
    out: list[list[int]] = []
    for p in pieces:
        if out and out[-1][0] == p:
            out[-1][1] += 1
        else:
            out.append([p, 1])
    return [(d, n) for d, n in out]


# -- TileSingleDim -------------------------------------------------------------

def tile_single_dim(length: int, allowed) -> list[tuple[int, int]]:
    """Greedy largest-first split of ``length`` into allowed sizes, as (dim, count).

    When the last piece r is under half of the piece d before it, the pair is
    averaged into two near-equal allowed pieces.
    """
    allowed = sorted(set(allowed))
    if length < 1:
        raise TilingError("length must be >= 1")
    if not allowed or allowed[0] != 1:
        raise TilingError("allowed sizes must include 1")
    pieces = []
    rest = length
    while rest:
        d = max(a for a in allowed if a <= rest)
        pieces.extend([d] * (rest // d))
        rest %= d
    if len(pieces) >= 2 and 2 * pieces[-1] < pieces[-2]:
        d, r = pieces[-2], pieces[-1]
        s = d + r
        hi, lo = (s + 1) // 2, s // 2
        ok = set(allowed)
        if hi not in ok or lo not in ok:
            pairs = [(s - y, y) for y in allowed if y <= s - y and s - y in ok]
            hi, lo = max(pairs, key=lambda p: p[1])
        pieces[-2:] = [hi, lo]
    return _merge(pieces)


# -- reference SGEMM_NN tile algorithm ----------------------------------------------

_W13 = list(range(1, 14))
_W8 = list(range(1, 9))
_W6 = list(range(1, 7))


def _extend_to8(q: int) -> list[tuple[int, int]]:
    return [s for s in ((8, q // 2), (4, q % 2)) if s[1]]


def _extend_to16(q: int) -> list[tuple[int, int]]:
    return [s for s in [(16, q // 4)] if s[1]] + _extend_to8(q % 4)


def _strip_rows(m: list[tuple[int, int]], widths_per_entry: list[list[int]], N: int):
    strips = []
    for (h, count), allowed in zip(m, widths_per_entry):
        if h == 0 or count == 0:
            continue
        widths = _expand(tile_single_dim(N, allowed))
        strips.extend([(h, widths)] * count)
    return strips


def _heuristic_snn(M: int, N: int) -> list[tuple[int, list[int]]]:
    t, x = GemmType.S, Transposition.NN
    if N <= 13:
        strips = []
        rest = M
        while rest:
            m1 = max(h for h in heights(t, x) if h <= rest and has_kernel(t, x, h, N))
            strips.extend([(m1, [N])] * (rest // m1))
            rest %= m1
        return strips
    if M < 8:
        m = tile_single_dim(M, [1, 2, 3, 4])
        return _strip_rows(m, [_W13] * len(m), N)
    if M == 9:
        return _strip_rows([(4, 1), (3, 1), (2, 1)], [_W13] * 3, N)
    if M < 12:
        return _strip_rows([(8, 1), (M - 8, 1)], [_W8, _W13], N)
    if M == 12:
        return _strip_rows([(12, 1)], [_W6], N)
    q, r = divmod(M, 4)
    m2, n2 = [(r, 1)], [_W13]
    if r == 1:
        q -= 1
        m2, n2 = [(3, 1), (2, 1)], [_W8, _W13]
    cands = []
    for m in (_extend_to8(q), _extend_to16(q)):
        cands.append(_strip_rows(m, [widths_for(t, x, h) for h, _ in m], N))

    def cost(strips):
        return sum(h * len(ws) + sum(ws) for h, ws in strips)

    best = cands[0] if cost(cands[0]) <= cost(cands[1]) else cands[1]
    return best + _strip_rows(m2, n2, N)


def _heuristic_generic(t, x, M: int, N: int) -> list[tuple[int, list[int]]]:
    strips = []
    for h, count in tile_single_dim(M, heights(t, x)):
        widths = _expand(tile_single_dim(N, widths_for(t, x, h)))
        strips.extend([(h, widths)] * count)
    return strips


def tile_heuristic(gemm_type, trans, M: int, N: int, K: int = 1) -> TilePlan:
    """Reference tile algorithm for SGEMM_NN; other families tile heights then widths greedily."""
    t, x = GemmType(gemm_type), Transposition(trans)
    _check_dims(M, N, K)
    if (t, x) == (GemmType.S, Transposition.NN):
        strips = _heuristic_snn(M, N)
    else:
        strips = _heuristic_generic(t, x, M, N)
    return _plan_from_strips(t, x, M, N, K, strips, "heuristic")


# -- optimal tiling ---------------------------------------------------------------

@lru_cache(maxsize=None)
def _width_table(t: GemmType, x: Transposition, h: int, N: int) -> tuple[int, ...]:
    """Fewest blocks covering N with widths of height h; lexicographically largest widths."""
    ws = sorted(widths_for(t, x, h), reverse=True)
    INF = 1 << 30
    best = [0] + [INF] * N
    for n in range(1, N + 1):
        best[n] = min((best[n - w] + 1 for w in ws if w <= n), default=INF)
    out = []
    n = N
    while n:
        w = next(w for w in ws if w <= n and best[n - w] == best[n] - 1)
        out.append(w)
        n -= w
    return tuple(out)


@lru_cache(maxsize=None)
def _height_table(t: GemmType, x: Transposition, N: int, limit: int):
    """best[m] = (cost, blocks, first height) for every m <= limit."""
    hs = sorted(heights(t, x), reverse=True)
    strip = {h: _width_table(t, x, h, N) for h in hs}
    best: list[tuple[int, int, int] | None] = [(0, 0, 0)] + [None] * limit
    for m in range(1, limit + 1):
        cand = None
        for h in hs:  # descending, so ties keep the larger first strip
            if h > m:
                continue
            c0, b0, _ = best[m - h]
            key = (c0 + N + h * len(strip[h]), b0 + len(strip[h]), h)
            if cand is None or key[:2] < cand[:2]:
                cand = key
        best[m] = cand
    return best, strip


def tile_optimal(gemm_type, trans, M: int, N: int, K: int = 1) -> TilePlan:
    """Row-strip tiling minimizing sum(m + n); ties: fewer blocks, larger strips first."""
    t, x = GemmType(gemm_type), Transposition(trans)
    _check_dims(M, N, K)
    if M > OPTIMAL_LIMIT or N > OPTIMAL_LIMIT:
        raise TilingError(f"optimal tiling is bounded to M, N <= {OPTIMAL_LIMIT}")
    limit = max(M, 128)
    best, strip = _height_table(t, x, N, limit)
    strips = []
    m = M
    while m:
        h = best[m][2]
        strips.append((h, list(strip[h])))
        m -= h
    return _plan_from_strips(t, x, M, N, K, strips, "optimal")


def is_small_gemm(trans, M: int, N: int, K: int) -> bool:
    limit = SMALL_LIMIT_TN if Transposition(trans) == Transposition.TN else SMALL_LIMIT
    return M * N * K <= limit ** 3


def plan(gemm_type, trans, M: int, N: int, K: int, mode: str = "auto") -> TilePlan:
    """Tile with the requested planner; 'auto' picks the optimal one."""
    if mode in ("auto", "optimal"):
        return tile_optimal(gemm_type, trans, M, N, K)
    if mode == "heuristic":
        return tile_heuristic(gemm_type, trans, M, N, K)
    raise TilingError(f"unknown tiling mode {mode!r}")


def _check_dims(M, N, K):
    if min(M, N, K) < 1:
        raise TilingError(f"dimensions must be positive, got M={M} N={N} K={K}")


# -- pack-based baseline ------------------------------------------------------------

def main_kernel(gemm_type, trans) -> tuple[int, int]:
    """The family's largest-area kernel (ties: taller), used by the baseline."""
    return max(kernels_for(gemm_type, trans), key=lambda s: (s[0] * s[1], s[0]))


def baseline_memops(gemm_type, trans, M: int, N: int, K: int, model: str = "padded") -> int:
    """Traffic of a traditional pack-then-compute GEMM.

    ``padded``: one main kernel over zero-padded packed panels, plus the pack
    copies of A and B (M*K + K*N). ``literal``: (M+N)*K + 2MN + M*K + K*N.
    """
    pack = M * K + K * N
    if model == "literal":
        return (M + N) * K + 2 * M * N + pack
    if model != "padded":
        raise TilingError(f"unknown baseline model {model!r}")
    mr, nr = main_kernel(gemm_type, trans)
    blocks = -(-M // mr) * -(-N // nr)
    return blocks * (mr + nr) * K + 2 * M * N + pack
