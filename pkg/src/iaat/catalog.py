"""Kernel-size catalog: every micro-kernel shape generated at install time.

Sizes are grouped by precision and transposition. Each family is a list of
rows ``(mc values, nc values)``; a row either fixes ``mc`` and spans a range of
``nc`` or, for the TT families, spans ``mc`` for a fixed ``nc``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from functools import lru_cache


class GemmType(str, enum.Enum):
    S = "s"
    D = "d"
    C = "c"
    Z = "z"

    @property
    def elenum(self) -> int:
        """Matrix elements held by one 128-bit register."""
        return {"s": 4, "d": 2, "c": 2, "z": 1}[self.value]

    @property
    def is_complex(self) -> bool:
        return self in (GemmType.C, GemmType.Z)

    @property
    def real_bytes(self) -> int:
        return 4 if self in (GemmType.S, GemmType.C) else 8

    @property
    def real_lanes(self) -> int:
        """Real-valued lanes per register (4 for f32 kinds, 2 for f64 kinds)."""
        return 16 // self.real_bytes

    @property
    def elem_bytes(self) -> int:
        return self.real_bytes * (2 if self.is_complex else 1)


class Transposition(str, enum.Enum):
    NN = "nn"
    NT = "nt"
    TN = "tn"
    TT = "tt"

    @property
    def trans_a(self) -> bool:
        return self.value[0] == "t"

    @property
    def trans_b(self) -> bool:
        return self.value[1] == "t"


@dataclass(frozen=True, order=True)
class KernelId:
    gemm_type: GemmType
    trans: Transposition
    mc: int
    nc: int

    @property
    def symbol(self) -> str:
        return f"iaat_{self.gemm_type.value}_{self.trans.value}_{self.mc}x{self.nc}"

    def __str__(self) -> str:
        return f"{self.gemm_type.name}GEMM_{self.trans.name} {self.mc}x{self.nc}"


def _r(lo: int, hi: int) -> range:
    return range(lo, hi + 1)


# (mc values, nc values) per row, transcribed from the generated-kernel table.
_NN_S = [((16,), _r(1, 4)), ((12,), _r(1, 6)), ((8,), _r(1, 8)),
         ((4,), _r(1, 13)), ((3,), _r(1, 13)), ((2,), _r(1, 13)), ((1,), _r(1, 13))]
_NT_S = [((16,), _r(1, 4)), ((12,), _r(1, 8)), ((8,), _r(1, 8)),
         ((4,), _r(1, 20)), ((3,), _r(1, 24)), ((2,), _r(1, 28)), ((1,), _r(1, 32))]
_TN_SD = [((4,), _r(1, 4)), ((3,), _r(1, 5)), ((2,), _r(1, 7)), ((1,), _r(1, 10))]
_NN_D = [((8,), _r(1, 4)), ((4,), _r(1, 8)), ((3,), _r(1, 8)),
         ((2,), _r(1, 15)), ((1,), _r(1, 15))]
_NT_D = [((8,), _r(1, 4)), ((4,), _r(1, 8)), ((3,), _r(1, 8)),
         ((2,), _r(1, 20)), ((1,), _r(1, 20))]
_NN_C = [((8,), _r(1, 4)), ((4,), _r(1, 9)), ((3,), _r(1, 9)),
         ((2,), _r(1, 12)), ((1,), _r(1, 20))]
_NT_C = [((8,), _r(1, 4)), ((4,), _r(1, 8)), ((3,), _r(1, 8)),
         ((2,), _r(1, 12)), ((1,), _r(1, 20))]
_TN_C = [((4,), _r(1, 9)), ((3,), _r(1, 9)), ((2,), _r(1, 12)), ((1,), _r(1, 20))]
_Z = [((4,), _r(1, 4)), ((3,), _r(1, 4)), ((2,), _r(1, 7)), ((1,), _r(1, 10))]

_TT_S = [(_r(1, 4), (16,)), (_r(1, 6), (12,)), (_r(1, 8), (8,)),
         (_r(1, 13), (4,)), (_r(1, 13), (3,)), (_r(1, 13), (2,)), (_r(1, 13), (1,))]
_TT_D = [(_r(1, 4), (8,)), (_r(1, 8), (4,)), (_r(1, 8), (3,)),
         (_r(1, 15), (2,)), (_r(1, 15), (1,))]
_TT_C = [(_r(1, 4), (8,)), (_r(1, 9), (4,)), (_r(1, 9), (3,)),
         (_r(1, 12), (2,)), (_r(1, 20), (1,))]
_TT_Z = [(_r(1, 4), (4,)), (_r(1, 4), (3,)), (_r(1, 7), (2,)), (_r(1, 10), (1,))]

_T, _X = GemmType, Transposition
_TABLE = {
    (_T.S, _X.NN): _NN_S, (_T.S, _X.NT): _NT_S, (_T.S, _X.TN): _TN_SD, (_T.S, _X.TT): _TT_S,
    (_T.D, _X.NN): _NN_D, (_T.D, _X.NT): _NT_D, (_T.D, _X.TN): _TN_SD, (_T.D, _X.TT): _TT_D,
    (_T.C, _X.NN): _NN_C, (_T.C, _X.NT): _NT_C, (_T.C, _X.TN): _TN_C, (_T.C, _X.TT): _TT_C,
    (_T.Z, _X.NN): _Z, (_T.Z, _X.NT): _Z, (_T.Z, _X.TN): _Z, (_T.Z, _X.TT): _TT_Z,
}


def families() -> list[tuple[GemmType, Transposition]]:
    return [(t, x) for t in GemmType for x in Transposition]


@lru_cache(maxsize=None)
def _sizes(gemm_type: GemmType, trans: Transposition) -> tuple[tuple[int, int], ...]:
    sizes = {(mc, nc) for mcs, ncs in _TABLE[gemm_type, trans] for mc in mcs for nc in ncs}
    return tuple(sorted(sizes, reverse=True))


def kernels_for(gemm_type: GemmType | str, trans: Transposition | str) -> list[tuple[int, int]]:
    """All (mc, nc) kernel sizes of one family, ordered by mc then nc, descending."""
    return list(_sizes(GemmType(gemm_type), Transposition(trans)))


def has_kernel(gemm_type, trans, mc: int, nc: int) -> bool:
    return (mc, nc) in _size_set(GemmType(gemm_type), Transposition(trans))


@lru_cache(maxsize=None)
def _size_set(gemm_type: GemmType, trans: Transposition) -> frozenset:
    return frozenset(_sizes(gemm_type, trans))


def widths_for(gemm_type, trans, mc: int) -> list[int]:
    """Kernel widths available for a given row count, ascending."""
    return sorted(nc for m, nc in kernels_for(gemm_type, trans) if m == mc)


def heights(gemm_type, trans) -> list[int]:
    return sorted({mc for mc, _ in kernels_for(gemm_type, trans)})


def max_mc_for_nc(gemm_type, trans, nc: int) -> int | None:
    """Largest kernel height that has a kernel of width ``nc``; None if none does."""
    mcs = [m for m, n in kernels_for(gemm_type, trans) if n == nc]
    return max(mcs) if mcs else None


def all_kernel_ids() -> list[KernelId]:
    return [KernelId(t, x, mc, nc) for t, x in families() for mc, nc in kernels_for(t, x)]


def export_catalog() -> list[dict]:
    return [{"type": k.gemm_type.value, "trans": k.trans.value, "mc": k.mc, "nc": k.nc}
            for k in all_kernel_ids()]


def export_json(indent: int | None = None) -> str:
    return json.dumps(export_catalog(), indent=indent)
