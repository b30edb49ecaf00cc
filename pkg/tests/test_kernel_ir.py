import pytest
from hypothesis import given, strategies as st

from iaat.catalog import all_kernel_ids
from iaat.kernel_ir import (CmlaScalar, FmlaScalar, FmlaVector, LoadLane, LoadLanePair, LoadVector,
                            Mem, StoreLane, StoreVector, TemplateError, ZeroReg, format_instr,
                            instantiate_template, is_compute, is_load, parse_instr, parse_kernel,
                            reads, writes)
from iaat.kernelgen import generate, optimize

from conftest import kid

regs = st.integers(0, 31)
mems = st.builds(Mem, st.sampled_from("abc"), st.integers(0, 40), st.integers(0, 40))
instrs = st.one_of(
    st.builds(FmlaScalar, regs, regs, regs, st.integers(0, 3), st.sampled_from([2, 4])),
    st.builds(FmlaVector, regs, regs, regs, st.sampled_from([2, 4])),
    st.builds(LoadVector, regs, mems, st.sampled_from([1, 2, 4]), st.booleans(), st.booleans()),
    st.builds(LoadLane, regs, st.integers(0, 3), mems, st.booleans()),
    st.builds(StoreVector, regs, mems, st.sampled_from([1, 2, 4]), st.booleans()),
    st.builds(StoreLane, regs, st.integers(0, 3), mems),
    st.builds(ZeroReg, regs),
)


@given(instrs)
def test_instruction_text_round_trip(ins):
    assert parse_instr(format_instr(ins)) == ins


@pytest.mark.parametrize("k", [kid("s", "nn", 8, 8), kid("d", "tn", 3, 5), kid("c", "nt", 2, 12),
                               kid("z", "tt", 7, 2), kid("s", "nt", 1, 32)])
def test_kernel_text_round_trip(k):
    ir = optimize(generate(k))
    back = parse_kernel(ir.dump(), ir.reg_plan)
    assert back.sections() == ir.sections()
    assert back.dump() == ir.dump()


def test_every_catalog_kernel_round_trips():
    for k in all_kernel_ids()[::7]:
        ir = generate(k)
        assert parse_kernel(ir.dump()).sections() == ir.sections()


def test_templates():
    ins = instantiate_template("sfmlas", 0, 1, 2, 3)
    assert ins == FmlaScalar(0, 1, 2, 3, 4)
    assert instantiate_template("dfmlas", 0, 1, 2, 1).lanes == 2
    assert isinstance(instantiate_template("sfcmlas", 0, 1, 2, 0, (0, 90), gemm_type="c"), CmlaScalar)
    with pytest.raises(TemplateError):
        instantiate_template("sfcmlas", 0, 1, 2, 0, 90, gemm_type="c")
    with pytest.raises(TemplateError):
        instantiate_template("sfcmlas", 0, 1, 2, 0, (0, 90))
    with pytest.raises(TemplateError):
        instantiate_template("sfmlas", 0, 1, 2, 4)
    with pytest.raises(TemplateError):
        instantiate_template("nosuch", 0)
    with pytest.raises(TemplateError):
        instantiate_template("sfmlav", 0, 1, 32)


def test_reads_writes():
    f = FmlaScalar(0, 1, 2, 3, 4)
    assert set(reads(f)) == {0, 1, 2} and writes(f) == (0,)
    ld = LoadLanePair(5, 0, Mem("b", 0, 0))
    assert is_load(ld) and not is_compute(ld)
    assert set(writes(ld)) == {5}
    assert is_compute(f) and not is_load(f)


@pytest.mark.parametrize("bad", ["fmla v0, v1", "ldv v40, a[0,0] w=4", "frob v1", "ldv v1, q[0,0] w=4"])
def test_parse_errors(bad):
    with pytest.raises(ValueError):
        parse_instr(bad)
