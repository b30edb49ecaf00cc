"""Input-aware small-GEMM toolkit: kernel generation, tiling and an interpreter to verify both."""

from .catalog import GemmType, KernelId, Transposition, kernels_for, max_mc_for_nc
from .driver import ExecutingPlan, MissingKernel, build_plan, execute, gflops
from .kernel_ir import KernelIR, TemplateError, instantiate_template
from .kernelgen import generate, generate_all, optimize
from .regalloc import RegisterBudgetExceeded, RegisterPlan, allocate, group_sizes
from .simulator import MatrixView, SimulatorFault, naive_gemm, run_kernel
from .tiler import (TilePlan, is_small_gemm, memops_cost, tile_heuristic, tile_optimal,
                    tile_single_dim)
from .emitter import UnloweredInstr, emit

__version__ = "0.1.0"
