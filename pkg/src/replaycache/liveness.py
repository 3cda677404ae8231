"""Backward liveness and PC-interval construction for virtual registers."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .isa import Function, Op, Reg


class UseBeforeDef(Exception):
    def __init__(self, vreg: Reg, pc: int):
        super().__init__(f"{vreg} may be used before definition near pc {pc}")
        self.vreg = vreg
        self.pc = pc


@dataclass(frozen=True)
class LiveInterval:
    """PC interval of one virtual register, linear-scan style.

    ``end`` is the last PC at which the value is live or used.  When the
    register feeds a store or conditional branch, the region-preservation
    pass may set ``extended_end`` to the PC of the following region boundary.
    """

    vreg: Reg
    start: int
    end: int
    is_store_operand: bool = False
    is_branch_operand: bool = False
    extended_end: Optional[int] = None
    use_pcs: tuple[int, ...] = ()

    @property
    def stop(self) -> int:
        return self.extended_end if self.extended_end is not None else self.end

    def overlaps(self, other: "LiveInterval") -> bool:
        return self.start <= other.stop and other.start <= self.stop

    def next_use_after(self, pc: int) -> Optional[int]:
        for u in self.use_pcs:
            if u >= pc:
                return u
        return None


def _virtual(regs) -> list[Reg]:
    return [x for x in regs if x.virtual]


def block_live_sets(fn: Function) -> tuple[dict, dict]:
    """Worklist backward dataflow; returns (live_in, live_out) keyed by label."""
    use: dict[str, set[Reg]] = {}
    deff: dict[str, set[Reg]] = {}
    for blk in fn.blocks:
        u, d = set(), set()
        for ins in blk.instrs:
            for x in _virtual(ins.uses()):
                if x not in d:
                    u.add(x)
            d.update(_virtual(ins.defs()))
        use[blk.label], deff[blk.label] = u, d

    live_in = {b.label: set() for b in fn.blocks}
    live_out = {b.label: set() for b in fn.blocks}
    changed = True
    while changed:
        changed = False
        for blk in reversed(fn.blocks):
            out = set()
            for s in fn.successors(blk):
                out |= live_in[s]
            new_in = use[blk.label] | (out - deff[blk.label])
            if out != live_out[blk.label] or new_in != live_in[blk.label]:
                live_out[blk.label] = out
                live_in[blk.label] = new_in
                changed = True
    return live_in, live_out


def compute_live_intervals(fn: Function) -> list[LiveInterval]:
    """One interval per virtual register over the linearized function.

    Loop-carried values are covered because the interval spans every PC at
    which the value is live, not just the def/use extremes.
    Raises UseBeforeDef when a register is live into the function entry.
    """
    live_in, live_out = block_live_sets(fn)
    entry_live = live_in[fn.entry.label]
    if entry_live:
        vreg = sorted(entry_live)[0]
        first_pc = fn.entry.instrs[0].pc if fn.entry.instrs else -1
        raise UseBeforeDef(vreg, first_pc)

    lo: dict[Reg, int] = {}
    hi: dict[Reg, int] = {}
    uses: dict[Reg, list[int]] = {}
    store_ops: set[Reg] = set()
    branch_ops: set[Reg] = set()

    def touch(x: Reg, pc: int):
        lo[x] = min(lo.get(x, pc), pc)
        hi[x] = max(hi.get(x, pc), pc)

    for blk in fn.blocks:
        if not blk.instrs:
            continue
        live = set(live_out[blk.label])
        for x in live:
            touch(x, blk.instrs[-1].pc)
        for ins in reversed(blk.instrs):
            for x in _virtual(ins.defs()):
                touch(x, ins.pc)
                live.discard(x)
            for x in _virtual(ins.uses()):
                touch(x, ins.pc)
                uses.setdefault(x, []).append(ins.pc)
                live.add(x)
            if ins.op is Op.ST and not ins.spill:
                store_ops.update(_virtual(ins.uses()))
            if ins.op in (Op.BEQ, Op.BNE, Op.BLT):
                branch_ops.update(_virtual(ins.uses()))
            for x in live:
                touch(x, ins.pc)

    out = []
    for x in sorted(lo):
        out.append(LiveInterval(
            vreg=x, start=lo[x], end=hi[x],
            is_store_operand=x in store_ops,
            is_branch_operand=x in branch_ops,
            use_pcs=tuple(sorted(uses.get(x, []))),
        ))
    return out
