"""Command-line front end: ``iaat {catalog,kernelgen,plan,verify,cost-sweep}``.

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 internal
consistency error.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import catalog
from .catalog import GemmType, KernelId, Transposition
from .driver import KernelCache, build_plan, execute, gflops, time_execute
from .emitter import write_kernel
from .kernel_ir import CmlaScalar, FmlaScalar, KernelIR
from .kernelgen import GenerationError, generate, generate_all, optimize
from .regalloc import RegisterBudgetExceeded
from .simulator import (MatrixView, SimulatorFault, gemm_magnitude, naive_gemm, random_matrix,
                        rel_error, tolerance)
from .tiler import (TilingError, baseline_memops, memops_cost, plan as tile_plan,
                    tile_heuristic, tile_optimal)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3
VERIFY_K = (1, 2, 3, 7, 16)
VERIFY_SCALARS = (0.0, 1.0, 0.5, -1.0)


class UsageError(Exception):
    pass


def _types(value):
    return list(GemmType) if value is None else [GemmType(value)]


def _transes(value):
    return list(Transposition) if value is None else [Transposition(value)]


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


# -- catalog ---------------------------------------------------------------------

def cmd_catalog(args) -> int:
    rows = [{"type": t.value, "trans": x.value, "mc": mc, "nc": nc}
            for t in _types(args.type) for x in _transes(args.trans)
            for mc, nc in catalog.kernels_for(t, x)]
    print(json.dumps(rows, indent=args.indent))
    return EXIT_OK


# -- kernelgen --------------------------------------------------------------------

def cmd_kernelgen(args) -> int:
    out = args.out or os.environ.get("IAAT_OUT") or "iaat_out"
    if args.all:
        ids = None
    else:
        missing = [n for n in ("type", "trans", "mc", "nc") if getattr(args, n) is None]
        if missing:
            raise UsageError("give --all or all of --type --trans --mc --nc "
                             f"(missing {', '.join('--' + m for m in missing)})")
        t, x = GemmType(args.type), Transposition(args.trans)
        if not catalog.has_kernel(t, x, args.mc, args.nc):
            raise UsageError(f"{t.name}GEMM_{x.name} has no {args.mc}x{args.nc} kernel")
        ids = [KernelId(t, x, args.mc, args.nc)]
    try:
        irs = generate_all(ids, optimized=not args.no_optimize, workers=args.jobs)
    except GenerationError as exc:
        first = next(iter(exc.failures.values()))
        if isinstance(first, RegisterBudgetExceeded):
            print(f"error: {first}", file=sys.stderr)
            return EXIT_INTERNAL
        raise
    paths = [write_kernel(out, ir, args.emit) for ir in irs.values()]
    if not args.quiet:
        for p in paths:
            print(p)
    print(f"wrote {len(paths)} file(s) under {out}", file=sys.stderr)
    return EXIT_OK


# -- plan --------------------------------------------------------------------------

def cmd_plan(args) -> int:
    t, x = GemmType(args.type), Transposition(args.trans)
    tp = tile_plan(t, x, args.M, args.N, args.K, args.mode)
    doc = tp.to_dict()
    if args.executing:
        doc = build_plan(tp).to_dict()
    if args.timing:
        rng = np.random.default_rng(0)
        ash = (args.K, args.M) if x.trans_a else (args.M, args.K)
        bsh = (args.N, args.K) if x.trans_b else (args.K, args.N)
        a = MatrixView.from_matrix(random_matrix(rng, *ash, t), t)
        b = MatrixView.from_matrix(random_matrix(rng, *bsh, t), t)
        c = MatrixView.from_matrix(random_matrix(rng, args.M, args.N, t), t)
        secs, iters = time_execute(build_plan(tp), 1.0, a, b, 1.0, c)
        doc["simulator_timing"] = {"note": "interpreter time, not hardware time",
                                   "seconds_per_call": secs, "iterations": iters,
                                   "simulated_gflops": gflops(t, args.M, args.N, args.K, secs)}
    print(json.dumps(doc, indent=args.indent))
    return EXIT_OK


# -- verify ---------------------------------------------------------------------------

def _faulty(ir: KernelIR) -> KernelIR:
    """Corrupt the first multiply of stage M1: flip its lane, or its rotation if it has one lane."""
    m1 = list(ir.body_m1)
    for n, ins in enumerate(m1):
        if isinstance(ins, FmlaScalar):
            lanes = 16 // ir.id.gemm_type.real_bytes
            m1[n] = replace(ins, lane=(ins.lane + 1) % lanes)
            break
        if isinstance(ins, CmlaScalar):
            if ir.id.gemm_type.elenum > 1:
                m1[n] = replace(ins, lane=1 - ins.lane)
            else:
                m1[n] = replace(ins, rot=(0, 270))
            break
    return KernelIR(ir.id, ir.reg_plan, ir.prologue, m1, ir.body_m2, ir.tail, ir.epilogue)


class _FaultyCache(KernelCache):
    def get(self, kernel):
        ir = self._irs.get(kernel)
        if ir is None:
            ir = self._irs[kernel] = _faulty(optimize(generate(kernel)))
        return ir


def verify_sweep(types, transes, sweep_max: int, seeds: int, ks=VERIFY_K, inject_fault=False,
                 report=None):
    """Oracle sweep over all sizes up to ``sweep_max``; returns (cases, failures).

    One case is (type, trans, M, N, K, seed); every case runs all alpha/beta
    combinations at once along the batch axis.
    """
    combos = list(itertools.product(VERIFY_SCALARS, VERIFY_SCALARS))
    nab = len(combos)
    cache = _FaultyCache() if inject_fault else KernelCache()
    cases, failures = 0, []
    for t in types:
        tol = tolerance(t)
        for x in transes:
            for M in range(1, sweep_max + 1):
                for N in range(1, sweep_max + 1):
                    for K in ks:
                        rng = np.random.default_rng([M, N, K, list(GemmType).index(t),
                                                     list(Transposition).index(x)])
                        al = np.tile([p[0] for p in combos], seeds)
                        be = np.tile([p[1] for p in combos], seeds)
                        ash = (K, M) if x.trans_a else (M, K)
                        bsh = (N, K) if x.trans_b else (K, N)
                        a_m = np.repeat(random_matrix(rng, *ash, t, seeds), nab, axis=2)
                        b_m = np.repeat(random_matrix(rng, *bsh, t, seeds), nab, axis=2)
                        c_m = np.repeat(random_matrix(rng, M, N, t, seeds), nab, axis=2)
                        a = MatrixView.from_matrix(a_m, t)
                        b = MatrixView.from_matrix(b_m, t)
                        c = MatrixView.from_matrix(c_m, t)
                        ref = MatrixView.from_matrix(c_m, t)
                        naive_gemm(t, x.trans_a, x.trans_b, M, N, K, al, a, be, ref, b)
                        try:
                            execute(build_plan(tile_plan(t, x, M, N, K)), al, a, b, be, c, cache)
                            scale = gemm_magnitude(x.trans_a, x.trans_b, al, a_m, b_m, be, c_m)
                            err = rel_error(c.to_matrix(), ref.to_matrix(), axis=(0, 1),
                                            scale=scale)
                            err = err.reshape(seeds, nab).max(axis=1)
                            fault = None
                        except SimulatorFault as exc:
                            err, fault = np.full(seeds, np.inf), str(exc)
                        for s in range(seeds):
                            cases += 1
                            ok = bool(err[s] <= tol)
                            if report:
                                report(t, x, M, N, K, s, float(err[s]), ok, fault)
                            if not ok:
                                failures.append((t.value, x.value, M, N, K, s, float(err[s])))
    return cases, failures


def cmd_verify(args) -> int:
    types, transes = _types(args.type), _transes(args.trans)

    def report(t, x, M, N, K, s, err, ok, fault):
        if not args.quiet:
            status = "ok" if ok else "FAIL"
            extra = f" fault: {fault}" if fault else ""
            print(f"{t.value} {x.value} M={M} N={N} K={K} seed={s} max_rel_err={err:.3e} {status}{extra}")

    cases, failures = verify_sweep(types, transes, args.sweep_max, args.seeds,
                                   inject_fault=args.inject_fault, report=report)
    print(f"cases: {cases}, failures: {len(failures)}")
    for f in failures[:20]:
        print("failed (type,trans,M,N,K,seed) = ({},{},{},{},{},{}) rel_err={:.3e}".format(*f))
    return EXIT_OK if not failures else EXIT_FAIL


# -- cost sweep ------------------------------------------------------------------------

def cost_rows(gemm_type, trans, max_size: int, baseline: str = "padded"):
    for n in range(1, max_size + 1):
        opt = memops_cost(tile_optimal(gemm_type, trans, n, n, n))
        heu = memops_cost(tile_heuristic(gemm_type, trans, n, n, n))
        yield n, n, n, opt, heu, baseline_memops(gemm_type, trans, n, n, n, baseline)


def cmd_cost_sweep(args) -> int:
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["M", "N", "K", "memops_optimal", "memops_heuristic", "memops_baseline"])
    below = 0
    for row in cost_rows(args.type, args.trans, args.max, args.baseline):
        w.writerow(row)
        below += row[5] < row[3]
    if below:
        print(f"note: baseline below optimal in {below} row(s)", file=sys.stderr)
    return EXIT_OK


# -- entry point -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iaat", description="Small-GEMM kernel generation and tiling toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    types = [t.value for t in GemmType]
    transes = [x.value for x in Transposition]

    c = sub.add_parser("catalog", help="print the kernel catalog as JSON")
    c.add_argument("--type", choices=types)
    c.add_argument("--trans", choices=transes)
    c.add_argument("--indent", type=int, default=None)
    c.set_defaults(func=cmd_catalog)

    k = sub.add_parser("kernelgen", help="generate kernels as assembly or IR files")
    k.add_argument("--out", help="output directory (default $IAAT_OUT or ./iaat_out)")
    k.add_argument("--type", choices=types)
    k.add_argument("--trans", choices=transes)
    k.add_argument("--mc", type=_positive)
    k.add_argument("--nc", type=_positive)
    k.add_argument("--all", action="store_true", help="emit the whole catalog")
    k.add_argument("--emit", choices=("asm", "ir"), default="asm")
    k.add_argument("--no-optimize", action="store_true")
    k.add_argument("--jobs", type=_positive, default=1)
    k.add_argument("--quiet", action="store_true")
    k.set_defaults(func=cmd_kernelgen)

    pl = sub.add_parser("plan", help="tile an M x N x K problem and print the plan")
    pl.add_argument("--type", choices=types, default="s")
    pl.add_argument("--trans", choices=transes, default="nn")
    pl.add_argument("-M", type=_positive, required=True)
    pl.add_argument("-N", type=_positive, required=True)
    pl.add_argument("-K", type=_positive, default=1)
    pl.add_argument("--mode", choices=("optimal", "heuristic"), default="optimal")
    pl.add_argument("--executing", action="store_true", help="print the kernel executing plan")
    pl.add_argument("--timing", action="store_true", help="time the plan in the interpreter")
    pl.add_argument("--indent", type=int, default=None)
    pl.set_defaults(func=cmd_plan)

    v = sub.add_parser("verify", help="compare planned execution against the reference GEMM")
    v.add_argument("--sweep-max", type=_positive, default=20)
    v.add_argument("--seeds", type=_positive, default=5)
    v.add_argument("--type", choices=types)
    v.add_argument("--trans", choices=transes)
    v.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    v.add_argument("--quiet", action="store_true")
    v.set_defaults(func=cmd_verify)

    cs = sub.add_parser("cost-sweep", help="CSV of modeled memory traffic for M=N=K=1..max")
    cs.add_argument("--type", choices=types, default="s")
    cs.add_argument("--trans", choices=transes, default="nn")
    cs.add_argument("--max", type=_positive, default=80)
    cs.add_argument("--baseline", choices=("padded", "literal"), default="padded")
    cs.set_defaults(func=cmd_cost_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, TilingError) as exc:
        parser.print_usage(sys.stderr)
        print(f"iaat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RegisterBudgetExceeded as exc:
        print(f"iaat: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except BrokenPipeError:
        return EXIT_OK
    except Exception as exc:  # anything else is an internal inconsistency
        print(f"iaat: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
