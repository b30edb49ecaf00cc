from collections import Counter

import numpy as np
import pytest

from iaat.catalog import all_kernel_ids
from iaat.kernel_ir import FmlaScalar, LoadVector, Mem, is_compute, reads, writes
from iaat.kernelgen import (adjacent_load_violations, generate, generate_all, optimize,
                            pair_memops, schedule_stage)
from iaat.regalloc import NotInCatalog
from iaat.simulator import MatrixView, operand_shapes, random_matrix, run_kernel

from conftest import kid


def test_sgemm_nn_8x8_shape():
    ir = generate(kid("s", "nn", 8, 8))
    for sec in ("body_m1", "body_m2", "tail"):
        ops = Counter(type(i).__name__ for i in getattr(ir, sec) if is_compute(i))
        assert ops == {"FmlaScalar": 16}
    assert ir.reg_plan.total <= 32


def test_flop_audit_all_kernels(rng):
    # every kernel performs exactly mc*nc*kc element multiply-adds
    for k in all_kernel_ids()[::5]:
        ir = generate(k)
        per_elem = 4 if k.gemm_type.is_complex else 1
        for kc in (1, 4):
            ash, bsh = operand_shapes(k.trans, k.mc, k.nc, kc)
            a, b, c = (MatrixView.from_matrix(random_matrix(rng, *s, k.gemm_type), k.gemm_type)
                       for s in (ash, bsh, (k.mc, k.nc)))
            assert run_kernel(ir, a, b, c, kc) == k.mc * k.nc * kc * per_elem, k


def test_not_in_catalog():
    with pytest.raises(NotInCatalog):
        generate(kid("s", "nn", 5, 13))


def test_generate_all_subset():
    ids = [kid("d", "nn", 4, 8), kid("z", "tn", 2, 7)]
    irs = generate_all(ids)
    assert set(irs) == set(ids)


def test_pair_memops_marks_adjacent_rows():
    seq = [LoadVector(0, Mem("a", 0, 0), 4), LoadVector(1, Mem("a", 4, 0), 4),
           LoadVector(2, Mem("a", 0, 1), 4)]
    out = pair_memops(seq, 4)
    assert [ld.paired for ld in out] == [True, False, False]


def test_schedule_spreads_loads():
    loads = [LoadVector(16 + n, Mem("a", 4 * n, 0), 4) for n in range(4)]
    comps = [FmlaScalar(n, 28, 29, 0, 4) for n in range(8)]
    seq = schedule_stage(loads + comps)
    assert adjacent_load_violations(seq) == 0
    assert sorted(map(repr, seq)) == sorted(map(repr, loads + comps))


def test_schedule_keeps_same_register_order():
    seq = [LoadVector(16, Mem("a", 0, 0), 4), FmlaScalar(0, 16, 20, 0, 4),
           LoadVector(16, Mem("a", 0, 1), 4), FmlaScalar(1, 16, 20, 1, 4)]
    out = schedule_stage(seq)
    touching = [i for i in out if 16 in reads(i) + writes(i)]
    assert touching == seq


@pytest.mark.parametrize("k", [kid("s", "nn", 16, 4), kid("d", "tn", 4, 4), kid("c", "nt", 8, 4),
                               kid("z", "tt", 10, 1), kid("s", "nt", 1, 32)])
def test_optimize_bitwise_equal(k, rng):
    base, opt = generate(k), optimize(generate(k))
    for kc in (1, 2, 5):
        ash, bsh = operand_shapes(k.trans, k.mc, k.nc, kc)
        mats = [random_matrix(rng, *s, k.gemm_type, 3) for s in (ash, bsh, (k.mc, k.nc))]
        outs = []
        for ir in (base, opt):
            a, b, c = (MatrixView.from_matrix(m, k.gemm_type) for m in mats)
            run_kernel(ir, a, b, c, kc)
            outs.append(c.data.copy())
        np.testing.assert_array_equal(outs[0], outs[1])
    for sec in ("body_m1", "body_m2"):
        assert adjacent_load_violations(getattr(opt, sec)) == 0
