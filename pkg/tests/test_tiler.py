import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iaat.catalog import GemmType, Transposition, families, heights, widths_for
from iaat.tiler import (Block, TilePlan, TilingError, baseline_memops, check_partition,
                        is_small_gemm, main_kernel, memops_cost, plan, tile_heuristic,
                        tile_optimal, tile_single_dim)


def test_fifteen_square_pin():
    p = tile_optimal("s", "nn", 15, 15, 15)
    assert p.strips() == [(12, [6, 6, 3]), (3, [13, 2])]
    assert p.perimeter == 72
    assert memops_cost(p) == 72 * 15 + 2 * 15 * 15 == 1530


def test_heuristic_fifteen_square():
    h = tile_heuristic("s", "nn", 15, 15, 15)
    check_partition(h)
    assert h.perimeter == 75


@pytest.mark.parametrize("length,allowed,want", [
    (8, [1, 2, 3, 4], [(4, 2)]),
    (15, range(1, 14), [(8, 1), (7, 1)]),
    (9, [1, 2, 3, 4], [(4, 1), (3, 1), (2, 1)]),
    (4, [1, 2, 3, 4], [(4, 1)]),
])
def test_tile_single_dim(length, allowed, want):
    assert tile_single_dim(length, allowed) == want


def test_heuristic_branches():
    assert [h for h, _ in tile_heuristic("s", "nn", 9, 20).strips()] == [4, 3, 2]
    assert tile_heuristic("s", "nn", 12, 20).strips() == [(12, [6, 6, 4, 4])]
    assert tile_heuristic("s", "nn", 7, 5).strips() == [(4, [5]), (3, [5])]


def test_one_by_one():
    assert tile_optimal("s", "nn", 1, 1).perimeter == 2
    assert memops_cost(tile_optimal("s", "nn", 1, 1, 1)) == 4


def test_simd_friendly_heights():
    for M in (4, 8, 12, 16):
        for N in range(1, 17):
            assert all(h % 4 == 0 for h, _ in tile_optimal("s", "nn", M, N).strips()), (M, N)


def _brute(M, N):
    """Optimum over all strip decompositions, by enumeration."""
    hs = heights("s", "nn")

    def compositions(n, parts):
        if n == 0:
            yield []
            return
        for p in parts:
            if p <= n:
                for rest in compositions(n - p, parts):
                    yield [p] + rest

    strip_cost = {h: min(len(c) * h + N for c in compositions(N, widths_for("s", "nn", h)))
                  for h in hs}
    return min(sum(strip_cost[h] for h in c) for c in compositions(M, hs))


@pytest.mark.parametrize("M,N", [(5, 7), (9, 9), (11, 3), (13, 10), (2, 14)])
def test_optimal_matches_enumeration(M, N):
    opt = tile_optimal("s", "nn", M, N)
    assert opt.perimeter == _brute(M, N)
    assert tile_heuristic("s", "nn", M, N).perimeter >= opt.perimeter


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(families()), st.integers(1, 96), st.integers(1, 96),
       st.sampled_from(["optimal", "heuristic"]))
def test_partition_property(fam, M, N, mode):
    p = plan(fam[0], fam[1], M, N, 7, mode)
    check_partition(p)
    cover = np.zeros((M, N), int)
    for b in p.blocks:
        cover[b.i:b.i + b.mc, b.j:b.j + b.nc] += 1
    assert (cover == 1).all()


def test_check_partition_rejects_overlap():
    bad = TilePlan(GemmType.S, Transposition.NN, 2, 2, 1,
                   [Block(0, 0, 2, 2, None), Block(1, 1, 1, 1, None)], "optimal")
    with pytest.raises(TilingError):
        check_partition(bad)


def test_main_kernel_is_largest_area():
    assert main_kernel("s", "nn") == (12, 6)
    assert main_kernel("s", "tn") == (4, 4)


def test_operand_blocks():
    p = tile_optimal("d", "tn", 6, 5, 3)
    for blk, ab, bb in zip(p.blocksC, p.blocksA, p.blocksB):
        assert (ab.rows, ab.cols) == (3, blk.mc)
        assert (bb.rows, bb.cols) == (3, blk.nc)


def test_is_small_gemm():
    assert is_small_gemm("nn", 80, 80, 80)
    assert not is_small_gemm("nn", 81, 81, 81)
    assert is_small_gemm("tn", 32, 32, 32)
    assert not is_small_gemm("tn", 33, 33, 33)


def test_plan_modes_and_errors():
    assert plan("s", "nn", 15, 15, 15).mode == "optimal"
    with pytest.raises(ValueError):
        plan("s", "nn", 0, 4, 4)
    with pytest.raises(ValueError):
        plan("s", "nn", 4, 4, 4, mode="fastest")


def test_padded_baseline_dominates_optimal():
    for t, x in families():
        for n in (1, 7, 13, 15, 33, 80):
            assert baseline_memops(t, x, n, n, n) >= memops_cost(tile_optimal(t, x, n, n, n))


def test_plan_json():
    doc = json.loads(tile_optimal("c", "nt", 9, 5, 2).to_json())
    assert doc["sum_mn"] == sum(b["mc"] + b["nc"] for b in doc["blocks"])
