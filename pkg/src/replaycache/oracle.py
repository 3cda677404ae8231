"""Correctness backbone: static store-integrity verification and differential
crash-consistency checking by exhaustive (or sampled) outage injection."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .config import SimConfig, NvmTiming
from .isa import (BRANCH_OPS, INSTR_BYTES, Function, Instruction, Op, Program,
                  Violation, WORD_BYTES, flatten, program_layout)
from .machine import (Design, Machine, NonTerminatingRun, PowerEvent,
                      forced_outage_events, run_design)
from .recovery import RecoveryMetadata


# ------------------------------------------------------------ static verifier

def _control_successors(prog: Program) -> dict[int, tuple[int, ...]]:
    """Static successor PCs for every instruction, following execution order.

    ret/halt end the walk (their continuations start with a region boundary
    or leave the program); call proceeds into the callee entry.
    """
    block_pc: dict[tuple[str, str], int] = {}
    fn_entry: dict[str, int] = {}
    for fn, blk in program_layout(prog):
        if blk.instrs:
            block_pc[(fn.name, blk.label)] = blk.instrs[0].pc
    for fn in prog.functions:
        fn_entry[fn.name] = fn.entry.instrs[0].pc
    succ: dict[int, tuple[int, ...]] = {}
    for fn in prog.functions:
        for blk in fn.blocks:
            for i, ins in enumerate(blk.instrs):
                if ins.op in BRANCH_OPS:
                    targets = [block_pc[(fn.name, ins.args[2])]]
                    fall = fn.decl_next(blk.label)
                    if fall is not None:
                        targets.append(block_pc[(fn.name, fall)])
                    succ[ins.pc] = tuple(targets)
                elif ins.op is Op.JMP:
                    succ[ins.pc] = (block_pc[(fn.name, ins.args[0])],)
                elif ins.op is Op.CALL:
                    succ[ins.pc] = (fn_entry[ins.args[0]],)
                elif ins.op in (Op.RET, Op.HALT):
                    succ[ins.pc] = ()
                else:
                    succ[ins.pc] = (ins.pc + INSTR_BYTES,)
    return succ


def verify_store_integrity(prog: Program,
                           metadata: RecoveryMetadata | None = None) -> list[Violation]:
    """Walk every path from each store (and conditional branch) to the end of
    its region, asserting its operand registers are never overwritten, and
    check that every store is immediately followed by a matching clwb.

    An empty list means the compiled program upholds the replay contract.
    """
    out: list[Violation] = []
    app_fns = [f for f in prog.functions if not f.recovery]
    by_pc = {ins.pc: ins for fn in app_fns for ins in fn.instructions()}
    succ = _control_successors(Program(tuple(app_fns), prog.data))

    # clwb pairing: every store immediately followed by clwb on the same address
    for fn in app_fns:
        for blk in fn.blocks:
            for i, ins in enumerate(blk.instrs):
                if ins.op is not Op.ST:
                    continue
                nxt = blk.instrs[i + 1] if i + 1 < len(blk.instrs) else None
                if nxt is None or nxt.op is not Op.CLWB:
                    out.append(Violation(ins.pc, "clwb-missing",
                                         "store lacks an adjacent clwb"))
                elif nxt.args != (ins.args[1], ins.args[2]):
                    out.append(Violation(nxt.pc, "clwb-address-mismatch"))

    def walk(start_pc: int, guarded: frozenset, origin_pc: int, rule: str):
        seen = set()
        stack = [start_pc]
        while stack:
            pc = stack.pop()
            if pc in seen or pc not in by_pc:
                continue
            seen.add(pc)
            ins = by_pc[pc]
            if ins.op is Op.RBOUNDARY:
                continue  # region ends on every path through a boundary
            defs = {x for x in ins.defs() if not x.virtual}
            if guarded & defs:
                out.append(Violation(
                    pc, rule,
                    f"overwrites {sorted(str(x) for x in guarded & defs)} guarded "
                    f"by pc {origin_pc}"))
                continue
            stack.extend(succ.get(pc, ()))

    for fn in app_fns:
        for ins in fn.instructions():
            if ins.op is Op.ST:
                guarded = frozenset(x for x in ins.uses() if not x.virtual)
                walk(ins.pc + INSTR_BYTES, guarded, ins.pc, "store-integrity")
            elif ins.op in BRANCH_OPS:
                guarded = frozenset(x for x in ins.uses() if not x.virtual)
                walk(ins.pc + INSTR_BYTES, guarded, ins.pc, "branch-integrity")
                for t in succ.get(ins.pc, ()):
                    walk(t, guarded, ins.pc, "branch-integrity")
    return out


# ------------------------------------------------------------ crash sweep

@dataclass
class GoldenResult:
    final_nvm_digest: str
    final_nvm_image: bytes
    retired_store_log: list[tuple[int, int, int]]
    total_cycles: int


@dataclass
class SweepReport:
    design: str
    ckpt_variant: str
    golden_cycles: int
    injection_cycles: list[int]
    mismatching_cycles: list[int] = field(default_factory=list)
    recoveries: int = 0
    replays_with_stores: int = 0

    @property
    def ok(self) -> bool:
        return not self.mismatching_cycles


def golden_run(prog: Program, design: Design | str, timing: NvmTiming,
               cfg: SimConfig, metadata: RecoveryMetadata | None,
               ckpt_variant: str = "nvp") -> GoldenResult:
    m = Machine(prog, design, timing, cfg, metadata, ckpt_variant)
    try:
        rep = m.run([], max_cycles=cfg.golden_cycle_bound)
    except NonTerminatingRun:
        raise NonTerminatingRun(
            f"golden run exceeded the {cfg.golden_cycle_bound}-cycle bound")
    return GoldenResult(rep.final_nvm_digest, bytes(m.nvm), list(m.store_log),
                        rep.cycles)


def footprint_addresses(golden: GoldenResult, prog: Program,
                        cfg: SimConfig) -> list[tuple[int, int]]:
    """Byte ranges the differential comparison is scoped to: every address the
    golden run stored to, the static data segment, and the stack span."""
    ranges = [(cfg.stack_top - cfg.stack_span, cfg.stack_top)]
    for _, addr, _ in golden.retired_store_log:
        ranges.append((addr, addr + WORD_BYTES))
    for addr, _ in prog.data:
        ranges.append((addr, addr + 1))
    ranges.sort()
    merged: list[tuple[int, int]] = []
    for lo, hi in ranges:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(hi, merged[-1][1]))
        else:
            merged.append((lo, hi))
    return merged


def compare_nvm_states(a: bytes, b: bytes,
                       footprint: list[tuple[int, int]] | None = None
                       ) -> list[tuple[int, int, int]]:
    """Byte differences (address, a_byte, b_byte) within the footprint."""
    if footprint is None:
        footprint = [(0, min(len(a), len(b)))]
    diffs = []
    for lo, hi in footprint:
        for addr in range(lo, hi):
            if a[addr] != b[addr]:
                diffs.append((addr, a[addr], b[addr]))
    return diffs


def exhaustive_crash_sweep(prog: Program, metadata: RecoveryMetadata | None,
                           design: Design | str, timing: NvmTiming,
                           cfg: SimConfig | None = None,
                           ckpt_variant: str = "nvp",
                           sample: int | None = None, seed: int = 0,
                           double_outage: bool = False) -> SweepReport:
    """Differential crash-consistency check.

    For each injection cycle k in [0, golden cycles), force a checkpoint and
    power-off at k, power back on after the recharge delay, run to completion,
    and compare the final NVM image against the outage-free golden image over
    the program's footprint.  ``sample`` picks a random subset of cycles.
    """
    cfg = cfg or SimConfig()
    design = Design(design)
    golden = golden_run(prog, design, timing, cfg, metadata, ckpt_variant)
    footprint = footprint_addresses(golden, prog, cfg)

    cycles = list(range(golden.total_cycles))
    if sample is not None and sample < len(cycles):
        cycles = sorted(random.Random(seed).sample(cycles, sample))

    report = SweepReport(design.value, ckpt_variant, golden.total_cycles, cycles)
    limit = golden.total_cycles * 50 + 100000
    for k in cycles:
        m = Machine(prog, design, timing, cfg, metadata, ckpt_variant)
        outages = [k]
        if double_outage:
            outages.append(k + golden.total_cycles + cfg.recharge_cycles + 2000)
        m.run(forced_outage_events(outages, cfg.recharge_cycles), max_cycles=limit)
        report.recoveries += m.report.recoveries
        if compare_nvm_states(golden.final_nvm_image, m.nvm, footprint):
            report.mismatching_cycles.append(k)
    return report
