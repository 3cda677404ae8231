"""End-to-end compilation: parse, partition, preserve, allocate, fix up,
insert write-backs, and generate recovery metadata."""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import SimConfig
from .isa import Function, Program, linearize, parse_assembly, validate
from .liveness import compute_live_intervals
from .recovery import (RecoveryMetadata, RecoveryBlock, generate_recovery,
                       split_regions_over_budget, NVFF_SOURCE)
from .regalloc import (Allocation, CompileError, SPILL_AREA_BYTES,
                       allocate_registers)
from .regions import (PartitionOptions, insert_clwb, materialize_boundaries,
                      partition_regions, preserve_spill_store_registers,
                      preserve_store_registers)


@dataclass(frozen=True)
class CompileOptions:
    k_phys: int = 16
    cut_at_merges: bool = True
    variant: str = NVFF_SOURCE
    enforce_budget: bool = True


@dataclass
class CompiledUnit:
    program: Program              # final linearized code incl. recovery functions
    metadata: RecoveryMetadata
    allocations: dict[str, Allocation] = field(default_factory=dict)
    spill_fix_boundaries: dict[str, int] = field(default_factory=dict)
    energy_splits: int = 0


def compile_program(source: str | Program, options: CompileOptions = CompileOptions(),
                    cfg: SimConfig | None = None) -> CompiledUnit:
    """Compile virtual-register assembly into region-annotated physical code
    plus recovery metadata."""
    cfg = cfg or SimConfig()
    prog = parse_assembly(source) if isinstance(source, str) else source
    problems = [x for x in validate(prog) if x.rule != "reserved-region-register"
                or _is_app_violation(prog, x)]
    if problems:
        raise CompileError(f"input program is invalid: {problems[:3]}")
    prog = linearize(prog)

    # region partitioning on virtual-register code
    popts = PartitionOptions(cut_at_merges=options.cut_at_merges)
    staged = []
    for fn in prog.functions:
        intervals = compute_live_intervals(fn)
        bset = partition_regions(fn, intervals, options.k_phys, popts)
        staged.append(materialize_boundaries(fn, bset))
    prog = linearize(Program(tuple(staged), prog.data))

    # allocation, spill fix-up, and write-back insertion, per function
    allocations: dict[str, Allocation] = {}
    fixes: dict[str, int] = {}
    final_fns = []
    for idx, fn in enumerate(prog.functions):
        intervals = compute_live_intervals(fn)
        intervals = preserve_store_registers(fn, intervals)
        alloc, fn = allocate_registers(fn, intervals, options.k_phys,
                                       spill_base=idx * SPILL_AREA_BYTES)
        fn, n_fix = preserve_spill_store_registers(fn)
        fn = insert_clwb(fn)
        allocations[fn.name] = alloc
        fixes[fn.name] = n_fix
        final_fns.append(fn)
    prog = linearize(Program(tuple(final_fns), prog.data))

    if options.enforce_budget:
        prog, meta, blocks, splits = split_regions_over_budget(
            prog, options.variant, cfg)
    else:
        prog, meta, blocks = generate_recovery(prog, options.variant, cfg)
        splits = 0

    residual = validate(prog)
    if residual:
        raise CompileError(f"compiler produced invalid code: {residual[:3]}")
    return CompiledUnit(prog, meta, allocations, fixes, splits)


def _is_app_violation(prog: Program, violation) -> bool:
    return True
