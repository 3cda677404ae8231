"""Linear-scan register allocation over extended live intervals.

Spilling is whole-interval: the victim's defs are stored to a stack slot and
its uses reloaded through fresh single-use temporaries, then the scan is
re-run on the rewritten code until it fits.  Spill traffic addresses the
stack through the dedicated stack pointer, below the frame, with a static
per-function slot area (no recursion support).

Reload temporaries are not live-interval extended even when they feed a
store; the post-allocation region fix-up pass restores store integrity by
cutting the region before any offending redefinition instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import inf

from .isa import (Block, Function, Instruction, Op, Program, Reg, SP,
                  linearize, r, v)
from .liveness import LiveInterval, compute_live_intervals
from .regions import available_registers, preserve_store_registers

SPILL_AREA_BYTES = 256
MAX_SPILL_SLOTS = SPILL_AREA_BYTES // 8
#: spill slots live below this offset from the stack pointer; program code may
#: freely use the sp-relative range above it
SPILL_ZONE_OFFSET = 2048
_MAX_ROUNDS = 12


class CompileError(Exception):
    pass


@dataclass(frozen=True)
class SpillInfo:
    vreg: Reg
    stack_offset: int
    spill_store_pcs: tuple[int, ...] = ()
    reload_pcs: tuple[int, ...] = ()


@dataclass
class Allocation:
    assignment: dict[Reg, Reg] = field(default_factory=dict)
    spills: list[SpillInfo] = field(default_factory=list)


# positions of register operands per opcode: (def slots, use slots)
_ROLES = {
    Op.LI: ((0,), ()),
    Op.MOV: ((0,), (1,)),
    Op.ADD: ((0,), (1, 2)),
    Op.SUB: ((0,), (1, 2)),
    Op.MUL: ((0,), (1, 2)),
    Op.SHL: ((0,), (1, 2)),
    Op.LD: ((2,), (0,)),
    Op.ST: ((), (0, 1)),
    Op.CLWB: ((), (0,)),
    Op.BEQ: ((), (0, 1)),
    Op.BNE: ((), (0, 1)),
    Op.BLT: ((), (0, 1)),
}


def _scan(intervals: list[LiveInterval], n_regs: int,
          unspillable: set[Reg]) -> tuple[dict[Reg, int], list[Reg]]:
    """One linear-scan pass.  Returns (vreg -> register index, victims)."""
    order = sorted(intervals, key=lambda iv: (iv.start, iv.vreg.n))
    free = list(range(n_regs - 1, -1, -1))  # pop() yields lowest index
    active: list[LiveInterval] = []
    taken: dict[Reg, int] = {}
    victims: list[Reg] = []

    def expire(before: int):
        nonlocal active
        keep = []
        for a in active:
            if a.stop < before:
                free.append(taken[a.vreg])
                free.sort(reverse=True)
            else:
                keep.append(a)
        active = keep

    for iv in order:
        expire(iv.start)
        if free:
            taken[iv.vreg] = free.pop()
            active.append(iv)
            continue
        candidates = [a for a in active if a.vreg not in unspillable]
        if iv.vreg not in unspillable:
            candidates.append(iv)
        if not candidates:
            raise CompileError(
                f"register pressure unsatisfiable at pc {iv.start} with {n_regs} registers")

        def farness(c: LiveInterval):
            nu = c.next_use_after(iv.start)
            return (inf if nu is None else nu, c.vreg.n)

        victim = max(candidates, key=farness)
        victims.append(victim.vreg)
        if victim is not iv:
            taken[iv.vreg] = taken.pop(victim.vreg)
            active = [a for a in active if a.vreg != victim.vreg]
            active.append(iv)
    for x in victims:
        taken.pop(x, None)
    return taken, victims


def _rewrite_spills(fn: Function, offsets: dict[Reg, int],
                    next_id: int) -> tuple[Function, int, set[Reg]]:
    """Replace every def/use of the spilled vregs with stack traffic."""
    temps: set[Reg] = set()
    new_blocks = []
    for blk in fn.blocks:
        instrs: list[Instruction] = []
        for ins in blk.instrs:
            droles, uroles = _ROLES.get(ins.op, ((), ()))
            used = {}
            for slot in uroles:
                x = ins.args[slot]
                if isinstance(x, Reg) and x in offsets and x not in used:
                    t = v(next_id)
                    next_id += 1
                    temps.add(t)
                    used[x] = t
                    instrs.append(Instruction(Op.LD, (r(SP), offsets[x], t), spill=True))
            defined = {}
            for slot in droles:
                x = ins.args[slot]
                if isinstance(x, Reg) and x in offsets:
                    t = v(next_id)
                    next_id += 1
                    temps.add(t)
                    defined[x] = t
            args = list(ins.args)
            for slot in uroles:
                x = args[slot]
                if isinstance(x, Reg) and x in used:
                    args[slot] = used[x]
            for slot in droles:
                x = args[slot]
                if isinstance(x, Reg) and x in defined:
                    args[slot] = defined[x]
            instrs.append(replace(ins, args=tuple(args)))
            for x, t in defined.items():
                instrs.append(Instruction(Op.ST, (t, r(SP), offsets[x]), spill=True))
        new_blocks.append(Block(blk.label, tuple(instrs)))
    return Function(fn.name, tuple(new_blocks), fn.recovery), next_id, temps


def _relinearize(fn: Function) -> Function:
    return linearize(Program((fn,))).functions[0]


def allocate_registers(fn: Function, intervals: list[LiveInterval] | None,
                       k_phys: int, spill_base: int = 0) -> tuple[Allocation, Function]:
    """Allocate every virtual register of a boundary-materialized function.

    Returns the allocation record and the function rewritten to physical
    registers (PCs are function-local; the caller re-linearizes the program).
    """
    n_regs = available_registers(k_phys)
    fn = _relinearize(fn)
    next_id = max((x.n for ins in fn.instructions()
                   for x in (*ins.defs(), *ins.uses()) if x.virtual), default=0) + 1
    temps: set[Reg] = set()
    offsets: dict[Reg, int] = {}

    for _ in range(_MAX_ROUNDS):
        ivs = compute_live_intervals(fn)
        ivs = preserve_store_registers(fn, ivs, skip=temps)
        # no callee-saved registers: anything live across a call lives on the stack
        call_pcs = [ins.pc for ins in fn.instructions() if ins.op is Op.CALL]
        victims = [iv.vreg for iv in ivs
                   if iv.vreg not in temps and iv.vreg not in offsets
                   and any(iv.start < c < iv.stop for c in call_pcs)]
        if not victims:
            taken, victims = _scan(ivs, n_regs, temps)
            if not victims:
                break
        for x in sorted(set(victims), key=lambda q: q.n):
            slot = len(offsets)
            if slot >= MAX_SPILL_SLOTS:
                raise CompileError(f"{fn.name}: spill area exhausted")
            offsets[x] = -(SPILL_ZONE_OFFSET + spill_base + 8 * (slot + 1))
        fn, next_id, new_temps = _rewrite_spills(fn, offsets, next_id)
        temps |= new_temps
        fn = _relinearize(fn)
    else:
        raise CompileError(f"{fn.name}: spill rewriting did not converge")

    pool = [r(i) for i in range(n_regs)]
    assignment = {x: pool[idx] for x, idx in taken.items()}
    fn = _apply_assignment(fn, assignment)
    fn = _relinearize(fn)

    spills = []
    for x, off in sorted(offsets.items(), key=lambda kv: kv[0].n):
        stores = tuple(ins.pc for ins in fn.instructions()
                       if ins.op is Op.ST and ins.spill and ins.args[2] == off)
        reloads = tuple(ins.pc for ins in fn.instructions()
                        if ins.op is Op.LD and ins.spill and ins.args[1] == off)
        spills.append(SpillInfo(x, off, stores, reloads))
    return Allocation(assignment, spills), fn


def _apply_assignment(fn: Function, assignment: dict[Reg, Reg]) -> Function:
    def sub(x):
        if isinstance(x, Reg) and x.virtual:
            try:
                return assignment[x]
            except KeyError:
                raise CompileError(f"{fn.name}: no register assigned to {x}")
        return x

    new_blocks = []
    for blk in fn.blocks:
        instrs = [replace(ins, args=tuple(sub(a) for a in ins.args))
                  for ins in blk.instrs]
        new_blocks.append(Block(blk.label, tuple(instrs)))
    return Function(fn.name, tuple(new_blocks), fn.recovery)
