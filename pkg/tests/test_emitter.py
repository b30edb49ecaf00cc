import re
import shutil
import subprocess

import pytest

from iaat.catalog import families, kernels_for
from iaat.emitter import (SCALAR_MNEMONICS, VECTOR_MNEMONICS, UnloweredInstr, emit,
                          expected_mnemonic_counts, kernel_path, split_stages,
                          stage_vector_counts, write_kernel)
from iaat.kernel_ir import KernelIR, ZeroReg
from iaat.kernelgen import generate, optimize

from conftest import kid

ALLOWED = VECTOR_MNEMONICS | SCALAR_MNEMONICS


def _mnemonics(text):
    for line in text.splitlines():
        s = line.strip()
        if not s or s.startswith(("//", ".")) or s.endswith(":"):
            continue
        yield s.split()[0]


def test_sgemm_nn_8x8_counts():
    text = emit(optimize(generate(kid("s", "nn", 8, 8))))
    counts = stage_vector_counts(text)
    for stage in ("body_m1", "body_m2", "tail"):
        assert counts[stage]["fmla"] == 16
    assert set(_mnemonics(text)) <= ALLOWED


def test_golden_snapshot(data_dir):
    text = emit(optimize(generate(kid("s", "nn", 8, 8))))
    assert text == (data_dir / "golden_s_nn_8x8.S").read_text()


@pytest.mark.parametrize("k", [kid("d", "tn", 4, 4), kid("c", "nt", 1, 20), kid("z", "tt", 1, 4),
                               kid("s", "nt", 1, 32), kid("c", "tn", 3, 9)])
def test_stage_counts_match_ir(k):
    ir = optimize(generate(k))
    counts = stage_vector_counts(emit(ir))
    for sec in ("prologue", "body_m1", "body_m2", "tail", "epilogue"):
        assert counts[sec] == expected_mnemonic_counts(ir, sec), sec


def test_stages_in_order():
    text = emit(generate(kid("s", "tt", 4, 16)))
    assert list(split_stages(text)) == ["prologue", "body_m1", "body_m2", "tail", "epilogue",
                                        "restore"]
    assert text.startswith("// iaat-ir-version: 1")


def test_zero_reg_is_unlowered():
    ir = generate(kid("s", "nn", 4, 4))
    bad = KernelIR(ir.id, ir.reg_plan, [ZeroReg(0)] + ir.prologue, ir.body_m1, ir.body_m2,
                   ir.tail, ir.epilogue)
    with pytest.raises(UnloweredInstr):
        emit(bad)


def test_write_kernel(tmp_path):
    ir = generate(kid("d", "nn", 2, 15))
    p = write_kernel(tmp_path, ir, "asm")
    assert p == kernel_path(tmp_path, ir.id) == tmp_path / "d" / "nn" / "2x15.S"
    q = write_kernel(tmp_path, ir, "ir")
    assert q.suffix == ".ir" and q.read_text() == ir.dump()


@pytest.mark.skipif(shutil.which("clang") is None, reason="clang not installed")
def test_assembles_with_clang(tmp_path):
    for t, x in families():
        mc, nc = kernels_for(t, x)[len(kernels_for(t, x)) // 2]
        ir = optimize(generate(kid(t.value, x.value, mc, nc)))
        src = write_kernel(tmp_path, ir)
        r = subprocess.run(["clang", "--target=aarch64-linux-gnu", "-march=armv8.3-a", "-c",
                            str(src), "-o", str(src.with_suffix(".o"))],
                           capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
