import json

import pytest

from iaat import catalog
from iaat.catalog import GemmType, KernelId, Transposition


def test_family_sizes():
    assert len(catalog.kernels_for("s", "nn")) == 70
    assert len(catalog.all_kernel_ids()) == 786
    assert len(catalog.families()) == 16


@pytest.mark.parametrize("mc,nc,present", [(16, 4, True), (12, 6, True), (8, 8, True),
                                           (4, 13, True), (1, 1, True), (16, 5, False),
                                           (12, 7, False), (5, 1, False)])
def test_sgemm_nn_membership(mc, nc, present):
    assert catalog.has_kernel(GemmType.S, Transposition.NN, mc, nc) is present


def test_ordering_is_mc_then_nc_descending():
    ks = catalog.kernels_for("d", "nt")
    assert ks == sorted(ks, reverse=True)


def test_tt_mirrors_nn_for_real_types():
    for t in ("s", "d"):
        nn = {(m, n) for m, n in catalog.kernels_for(t, "nn")}
        tt = {(n, m) for m, n in catalog.kernels_for(t, "tt")}
        assert nn == tt


def test_queries():
    assert catalog.heights("s", "nn") == [1, 2, 3, 4, 8, 12, 16]
    assert catalog.widths_for("s", "nn", 12) == [1, 2, 3, 4, 5, 6]
    assert catalog.max_mc_for_nc("s", "nn", 5) == 12
    assert catalog.max_mc_for_nc("s", "nn", 14) is None


def test_type_properties():
    assert [t.elenum for t in GemmType] == [4, 2, 2, 1]
    assert GemmType.Z.is_complex and not GemmType.D.is_complex
    assert Transposition.TN.trans_a and not Transposition.TN.trans_b


def test_kernel_id_rejects_unknown_values():
    with pytest.raises(ValueError):
        GemmType("x")
    with pytest.raises(ValueError):
        Transposition("ab")


def test_symbol_and_json_export():
    assert KernelId(GemmType.C, Transposition.TT, 4, 8).symbol == "iaat_c_tt_4x8"
    doc = json.loads(catalog.export_json())
    assert doc == catalog.export_catalog()
    assert {"type", "trans", "mc", "nc"} == set(doc[0])
