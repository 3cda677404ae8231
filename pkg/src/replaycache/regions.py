"""Region formation: pressure-aware partitioning, store/branch register
preservation, and the post-allocation spill-store fix-up pass.

A region boundary is realized as an ``rboundary`` instruction.  Before
materialization, boundaries are tracked as insertion points: the PC of the
instruction the boundary will be placed in front of.  After materialization a
region is the half-open PC range between consecutive boundary instructions in
layout order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .isa import (ALLOCATABLE, Block, Function, Instruction, Op, Program, Reg,
                  BRANCH_OPS, linearize)
from .liveness import LiveInterval, compute_live_intervals


class BoundaryOrigin(str, Enum):
    INITIAL_CALL = "InitialCall"
    INITIAL_BRANCH_END = "InitialBranchEnd"
    PRESSURE = "Pressure"
    SPILL_FIX = "SpillFix"
    ENERGY_SPLIT = "EnergySplit"
    LOOP_BACK_EDGE = "LoopBackEdge"
    MERGE_CUT = "MergeCut"


@dataclass
class RegionBoundarySet:
    """Ordered insertion points: boundary goes immediately before each PC."""

    origins: dict[int, BoundaryOrigin] = field(default_factory=dict)

    @property
    def boundary_pcs(self) -> list[int]:
        return sorted(self.origins)

    def add(self, pc: int, origin: BoundaryOrigin) -> bool:
        if pc in self.origins:
            return False
        self.origins[pc] = origin
        return True


@dataclass(frozen=True)
class PartitionOptions:
    cut_at_merges: bool = True


def available_registers(k_phys: int) -> int:
    """Physical registers usable for program values under a k-register target.

    The stack pointer, link register, and region register sit at the top of
    the 16-register file; they count against k_phys only when k_phys reaches
    into their indices.
    """
    return min(k_phys, len(ALLOCATABLE))


def back_edge_targets(fn: Function) -> set[str]:
    """Labels that are targets of a DFS back edge (loop headers)."""
    targets: set[str] = set()
    state: dict[str, int] = {}  # 0 = on stack, 1 = done

    def dfs(label: str):
        state[label] = 0
        for s in fn.successors(fn.block(label)):
            if s not in state:
                dfs(s)
            elif state[s] == 0:
                targets.add(s)
        state[label] = 1

    dfs(fn.entry.label)
    return targets


def reverse_post_order(fn: Function) -> list[str]:
    order: list[str] = []
    seen: set[str] = set()

    def dfs(label: str):
        seen.add(label)
        for s in fn.successors(fn.block(label)):
            if s not in seen:
                dfs(s)
        order.append(label)

    dfs(fn.entry.label)
    order.reverse()
    # unreachable blocks go last, in declaration order
    for blk in fn.blocks:
        if blk.label not in seen:
            order.append(blk.label)
    return order


def _layout_prev(fn: Function) -> dict[str, str]:
    from .isa import layout_blocks
    lay = layout_blocks(fn)
    return {lay[i].label: lay[i - 1].label for i in range(1, len(lay))}


def partition_regions(fn: Function, intervals: list[LiveInterval], k_phys: int,
                      opts: PartitionOptions = PartitionOptions()) -> RegionBoundarySet:
    """Place region boundaries on a linearized, virtual-register function.

    Initial boundaries: function entry and around every call (before it, and
    at the return site after it).  With ``cut_at_merges`` every block start
    that can be entered other than by falling in from its layout predecessor
    is also cut, which keeps every region straight-line.  A traversal then
    carries store operand intervals past their natural end and cuts at the
    first point where the overlapping-interval count would exceed the
    available register count.
    """
    if k_phys < 2:
        raise ValueError("k_phys must be >= 2")
    avail = available_registers(k_phys)
    bset = RegionBoundarySet()
    by_vreg = {iv.vreg: iv for iv in intervals}

    bset.add(fn.entry.instrs[0].pc, BoundaryOrigin.INITIAL_CALL)
    for blk in fn.blocks:
        for i, ins in enumerate(blk.instrs):
            if ins.op is Op.CALL:
                bset.add(ins.pc, BoundaryOrigin.INITIAL_CALL)
                if i + 1 < len(blk.instrs):
                    bset.add(blk.instrs[i + 1].pc, BoundaryOrigin.INITIAL_CALL)

    if opts.cut_at_merges:
        # Straight-line regions: a block continues its predecessor's region
        # only when it is the sole successor of a layout-adjacent block that
        # ends in an unconditional jump.  Both successors of a conditional
        # branch start fresh regions, so a branch is always the last
        # instruction of its region and the store count replayed after an
        # outage is exact on every path.
        preds = fn.predecessors()
        prev_in_layout = _layout_prev(fn)
        loop_heads = back_edge_targets(fn)
        branch_succs = set()
        for blk in fn.blocks:
            if blk.instrs and blk.instrs[-1].op in BRANCH_OPS:
                branch_succs.update(fn.successors(blk))
        for blk in fn.blocks:
            if blk.label == fn.entry.label or not blk.instrs:
                continue
            p = preds[blk.label]
            sequential = (len(p) == 1
                          and prev_in_layout.get(blk.label) == p[0]
                          and fn.block(p[0]).instrs[-1].op is Op.JMP
                          and blk.label not in loop_heads)
            if sequential:
                continue
            if blk.label in loop_heads:
                origin = BoundaryOrigin.LOOP_BACK_EDGE
            elif blk.label in branch_succs:
                origin = BoundaryOrigin.INITIAL_BRANCH_END
            elif len(p) >= 2:
                origin = BoundaryOrigin.MERGE_CUT
            else:
                origin = BoundaryOrigin.MERGE_CUT
            bset.add(blk.instrs[0].pc, origin)

    # pressure traversal with carried store-operand intervals
    preds = fn.predecessors()
    carried_out: dict[str, set[Reg]] = {}
    for label in reverse_post_order(fn):
        blk = fn.block(label)
        if not blk.instrs:
            carried_out[label] = set()
            continue
        carried: set[Reg] = set()
        if blk.instrs[0].pc not in bset.origins:
            for p in preds[label]:
                carried |= carried_out.get(p, set())
        for ins in blk.instrs:
            pc = ins.pc
            if pc in bset.origins:
                carried = set()
            live_here = {iv.vreg for iv in intervals if iv.start <= pc <= iv.end}
            carried &= set(by_vreg)
            if len(live_here | carried) > avail and (carried - live_here):
                bset.add(pc, BoundaryOrigin.PRESSURE)
                carried = set()
            if ins.op is Op.ST and not ins.spill:
                carried.update(x for x in ins.uses() if x.virtual)
        carried_out[label] = carried
    return bset


def materialize_boundaries(fn: Function, bset: RegionBoundarySet) -> Function:
    """Insert rboundary instructions in front of each insertion-point PC."""
    new_blocks = []
    for blk in fn.blocks:
        instrs = []
        for ins in blk.instrs:
            if ins.pc in bset.origins:
                instrs.append(Instruction(Op.RBOUNDARY,
                                          origin=bset.origins[ins.pc].value))
            instrs.append(ins)
        new_blocks.append(Block(blk.label, tuple(instrs)))
    return Function(fn.name, tuple(new_blocks), fn.recovery)


def boundary_pcs_of(fn: Function) -> list[int]:
    return sorted(ins.pc for ins in fn.instructions() if ins.op is Op.RBOUNDARY)


def preserve_store_registers(fn: Function, intervals: list[LiveInterval],
                             skip: set = frozenset()) -> list[LiveInterval]:
    """Extend store/branch operand intervals to the next boundary after their
    last use, so the allocator keeps those registers exclusive until the
    region ends.  Boundaries must already be materialized in ``fn``.

    Registers in ``skip`` (spill-code temporaries) are left unextended; the
    post-allocation fix-up pass guards them with boundaries instead.
    """
    bpcs = boundary_pcs_of(fn)
    last_pc = max((ins.pc for ins in fn.instructions()), default=-1)
    out = []
    for iv in intervals:
        if (iv.is_store_operand or iv.is_branch_operand) and iv.vreg not in skip:
            ext = next((b for b in bpcs if b > iv.end), last_pc)
            out.append(replace(iv, extended_end=max(ext, iv.end)))
        else:
            out.append(iv)
    return out


def preserve_spill_store_registers(fn: Function) -> tuple[Function, int]:
    """After register allocation: if anything later in the same region
    redefines an operand register of an already-executed store (stack-spill
    stores above all, whose registers the interval extension does not guard)
    or of a conditional branch, cut the region immediately before the first
    such redefinition.

    Returns the rewritten function and the number of boundaries added.  The
    function must be re-linearized afterwards.
    """
    blocks = [list(b.instrs) for b in fn.blocks]
    labels = [b.label for b in fn.blocks]
    added = 0

    def current() -> Function:
        return Function(fn.name, tuple(
            Block(labels[i], tuple(blocks[i])) for i in range(len(blocks))), fn.recovery)

    def scan_once() -> bool:
        from .isa import layout_blocks
        order = []
        snapshot = current()
        for lb in layout_blocks(snapshot):
            bi = labels.index(lb.label)
            for si in range(len(blocks[bi])):
                order.append((bi, si))

        guarded: set = set()  # operand registers pinned until the region ends
        for bi, si in order:
            ins = blocks[bi][si]
            if ins.op is Op.RBOUNDARY:
                guarded.clear()
                continue
            defs = {x for x in ins.defs() if not x.virtual}
            if guarded & defs:
                blocks[bi].insert(si, Instruction(
                    Op.RBOUNDARY, origin=BoundaryOrigin.SPILL_FIX.value))
                return True
            if ins.op is Op.ST:
                guarded.update(x for x in ins.uses() if not x.virtual)
            elif ins.op in BRANCH_OPS:
                guarded.update(x for x in ins.uses() if not x.virtual)
        return False

    while scan_once():
        added += 1
    return current(), added


def insert_clwb(fn: Function) -> Function:
    """Pair every store with a cache-line write-back on the same address.
    Idempotent: stores already followed by a matching clwb are left alone."""
    new_blocks = []
    for blk in fn.blocks:
        instrs: list[Instruction] = []
        for ins in blk.instrs:
            if instrs and instrs[-1].op is Op.ST:
                st = instrs[-1]
                if not (ins.op is Op.CLWB and ins.args == (st.args[1], st.args[2])):
                    instrs.append(Instruction(Op.CLWB, (st.args[1], st.args[2]),
                                              spill=st.spill))
            instrs.append(ins)
        if instrs and instrs[-1].op is Op.ST:
            st = instrs[-1]
            instrs.append(Instruction(Op.CLWB, (st.args[1], st.args[2]), spill=st.spill))
        new_blocks.append(Block(blk.label, tuple(instrs)))
    return Function(fn.name, tuple(new_blocks), fn.recovery)
