"""Per-region recovery blocks, RM/CM/store-count metadata, energy-bounded
region splitting, and the boot-time recovery lookup.

A recovery block replays the first ``count`` stores of its region.  The
runtime seeds the region register (r15) with the replay count and jumps to
the block; each store group re-executes one store, decrements the counter,
and exits when it reaches zero.  Under the NVFF variant the register file
has already been restored in place, so operands are simply read; under the
NVM-checkpoint variant each group first loads the operand registers from the
fixed checkpoint area.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field, replace

from .config import EnergyModel, SimConfig
from .isa import (Block, Function, Instruction, Op, Program, Reg, REGION_REG,
                  WORD_BYTES, flatten, linearize, r, BRANCH_OPS, ALU_OPS)

METADATA_FORMAT = "RPCMETA v1"

NVFF_SOURCE = "nvp"
NVM_CKPT_SOURCE = "quickrecall"
VARIANTS = (NVFF_SOURCE, NVM_CKPT_SOURCE)

#: registers checkpointed across an outage: r0..r15, pc, region register
CKPT_WORDS = 18


class RecoveryError(Exception):
    pass


class ConfigError(RecoveryError):
    pass


class UnknownRegion(RecoveryError):
    pass


class NonStraightLineRegion(RecoveryError):
    pass


class MetadataError(RecoveryError):
    pass


@dataclass(frozen=True)
class Region:
    start_pc: int
    end_pc: int
    store_pcs: tuple[int, ...]

    @property
    def sc_table(self) -> tuple[tuple[int, int], ...]:
        return tuple((pc, i + 1) for i, pc in enumerate(self.store_pcs))


@dataclass(frozen=True)
class RecoveryBlock:
    region_start_pc: int
    variant: str
    fn_name: str
    code: tuple[Instruction, ...]


@dataclass
class RecoveryMetadata:
    variant: str
    regions: tuple[Region, ...]
    rm: dict[int, int]                       # region start pc -> recovery code pc
    cm: dict[int, tuple[tuple[int, int], ...]]  # region start pc -> SC table
    version: str = METADATA_FORMAT

    def region_at(self, start_pc: int) -> Region:
        for reg in self.regions:
            if reg.start_pc == start_pc:
                return reg
        raise UnknownRegion(f"no region starts at pc {start_pc}")

    def to_json(self) -> str:
        doc = {
            "format": self.version,
            "variant": self.variant,
            "regions": [[g.start_pc, g.end_pc, list(g.store_pcs)] for g in self.regions],
            "rm": {str(k): v for k, v in self.rm.items()},
            "cm": {str(k): [list(e) for e in t] for k, t in self.cm.items()},
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RecoveryMetadata":
        doc = json.loads(text)
        if doc.get("format") != METADATA_FORMAT:
            raise MetadataError(f"unsupported metadata format: {doc.get('format')!r}")
        regions = tuple(Region(s, e, tuple(pcs)) for s, e, pcs in doc["regions"])
        rm = {int(k): v for k, v in doc["rm"].items()}
        cm = {int(k): tuple(tuple(e) for e in t) for k, t in doc["cm"].items()}
        return cls(doc["variant"], regions, rm, cm)


def enumerate_regions(prog: Program) -> list[Region]:
    """Regions tile the application code: half-open PC ranges between
    consecutive boundary instructions in layout order."""
    app_instrs = []
    for fn in prog.functions:
        if not fn.recovery:
            app_instrs.extend(ins for ins in fn.instructions())
    app_instrs.sort(key=lambda i: i.pc)
    if not app_instrs:
        return []
    bpcs = [i.pc for i in app_instrs if i.op is Op.RBOUNDARY]
    if not bpcs or bpcs[0] != app_instrs[0].pc:
        raise RecoveryError("application code must begin with a region boundary")
    end = app_instrs[-1].pc + 4
    out = []
    for i, start in enumerate(bpcs):
        stop = bpcs[i + 1] if i + 1 < len(bpcs) else end
        stores = tuple(ins.pc for ins in app_instrs
                       if ins.op is Op.ST and start <= ins.pc < stop)
        out.append(Region(start, stop, stores))
    return out


def _scratch_reg(used: set[int]) -> Reg:
    for n in range(REGION_REG):
        if n not in used:
            return r(n)
    raise RecoveryError("no scratch register available for recovery code")


def _block_function(idx: int, region: Region, prog: Program, variant: str,
                    cfg: SimConfig) -> Function:
    """Build the executable replay function for one region."""
    name = f"__rc_recover_{idx:04d}"
    stores = []
    by_pc = {ins.pc: ins for ins in flatten(prog) if ins.op is Op.ST}
    for pc in region.store_pcs:
        stores.append(by_pc[pc])
    counter = r(REGION_REG)

    blocks: list[Block] = []
    if not stores:
        blocks.append(Block("g000", (Instruction(Op.HALT),)))
        return Function(name, tuple(blocks), recovery=True)

    prologue: list[Instruction] = []
    base = None
    if variant == NVM_CKPT_SOURCE:
        used = {x.n for st in stores for x in st.uses()}
        base = _scratch_reg(used | {REGION_REG})
        prologue.append(Instruction(Op.LI, (base, cfg.qr_ckpt_base)))

    for gi, st in enumerate(stores):
        group: list[Instruction] = []
        if variant == NVM_CKPT_SOURCE:
            val, addr = st.args[0], st.args[1]
            group.append(Instruction(Op.LD, (base, WORD_BYTES * addr.n, addr)))
            group.append(Instruction(Op.LD, (base, WORD_BYTES * val.n, val)))
        group.append(replace(st, spill=False))
        group.append(Instruction(Op.SUB, (counter, counter, 1)))
        group.append(Instruction(Op.BEQ, (counter, 0, "zexit")))
        if gi == 0:
            group = prologue + group
        blocks.append(Block(f"g{gi:03d}", tuple(group)))
    blocks.append(Block("zexit", (Instruction(Op.HALT),)))
    return Function(name, tuple(blocks), recovery=True)


def generate_recovery(prog: Program, variant: str,
                      cfg: SimConfig | None = None) -> tuple[Program, RecoveryMetadata, list[RecoveryBlock]]:
    """Append one recovery function per region and build the RM/CM maps.

    ``prog`` must be linearized, boundary-annotated, physical-register code.
    """
    if variant not in VARIANTS:
        raise RecoveryError(f"unknown checkpoint variant {variant!r}")
    cfg = cfg or SimConfig()
    app_fns = tuple(f for f in prog.functions if not f.recovery)
    prog = linearize(Program(app_fns, prog.data))
    regions = enumerate_regions(prog)
    rec_fns = [_block_function(i, g, prog, variant, cfg) for i, g in enumerate(regions)]
    full = linearize(Program(app_fns + tuple(rec_fns), prog.data))

    rm: dict[int, int] = {}
    cm: dict[int, tuple] = {}
    blocks: list[RecoveryBlock] = []
    for g, fn_tmpl in zip(regions, rec_fns):
        fn = full.function(fn_tmpl.name)
        entry_pc = fn.entry.instrs[0].pc
        rm[g.start_pc] = entry_pc
        cm[g.start_pc] = g.sc_table
        blocks.append(RecoveryBlock(g.start_pc, variant, fn.name,
                                    tuple(fn.instructions())))
    meta = RecoveryMetadata(variant, tuple(regions), rm, cm)
    return full, meta, blocks


_CLASS_OF = {
    Op.LI: "move",
    Op.MOV: "move",
    Op.LD: "load",
    Op.ST: "store_persist",
    Op.JMP: "branch",
    Op.CALL: "branch",
    Op.RET: "branch",
}


def instruction_class(ins: Instruction) -> str | None:
    if ins.op in ALU_OPS:
        return "alu"
    if ins.op in BRANCH_OPS:
        return "branch"
    return _CLASS_OF.get(ins.op)


def estimate_recovery_energy(block: RecoveryBlock, model: EnergyModel) -> float:
    """Worst-case replay energy: linear sum of per-class costs over the
    block's instructions, plus the fixed register-restore constant."""
    total = model.restore_constant
    for ins in block.code:
        cls = instruction_class(ins)
        if cls is not None:
            total += getattr(model, cls)
    return total


def split_regions_over_budget(prog: Program, variant: str, cfg: SimConfig,
                              model: EnergyModel | None = None
                              ) -> tuple[Program, RecoveryMetadata, list[RecoveryBlock], int]:
    """Split any region whose recovery block exceeds the capacitor budget at
    its store-count midpoint, regenerating blocks until all fit.

    Returns the final program, metadata, blocks, and the number of splits.
    Raises ConfigError when even a single-store replay cannot fit.
    """
    model = model or cfg.energy
    splits = 0
    while True:
        full, meta, blocks = generate_recovery(prog, variant, cfg)
        over = [(b, meta.region_at(b.region_start_pc)) for b in blocks
                if estimate_recovery_energy(b, model) > model.capacitor_budget]
        if not over:
            return full, meta, blocks, splits
        block, region = over[0]
        if len(region.store_pcs) <= 1:
            raise ConfigError("single-store recovery exceeds capacitor budget")
        cut_pc = region.store_pcs[len(region.store_pcs) // 2]
        prog = _insert_boundary_before(prog, cut_pc)
        prog = linearize(Program(tuple(f for f in prog.functions if not f.recovery),
                                 prog.data))
        splits += 1


def _insert_boundary_before(prog: Program, pc: int) -> Program:
    from .regions import BoundaryOrigin
    new_fns = []
    hit = False
    for fn in prog.functions:
        new_blocks = []
        for blk in fn.blocks:
            instrs = []
            for ins in blk.instrs:
                if ins.pc == pc:
                    instrs.append(Instruction(Op.RBOUNDARY,
                                              origin=BoundaryOrigin.ENERGY_SPLIT.value))
                    hit = True
                instrs.append(ins)
            new_blocks.append(Block(blk.label, tuple(instrs)))
        new_fns.append(Function(fn.name, tuple(new_blocks), fn.recovery))
    if not hit:
        raise RecoveryError(f"no instruction at pc {pc}")
    return Program(tuple(new_fns), prog.data)


def lookup_recovery(rm: dict[int, int], cm: dict[int, tuple], region_start_pc: int,
                    failure_pc: int) -> tuple[int, int]:
    """Locate the recovery block and the number of stores to replay: the
    count of the greatest store PC at or below the failure PC.

    A failure PC below the region start means the interrupted region ran to
    completion and control was stalled at a backward transfer target (a loop
    header or a return site) whose boundary had not yet retired; every store
    of the region is then replayed.
    """
    if region_start_pc not in rm:
        raise UnknownRegion(f"no region starts at pc {region_start_pc}")
    table = cm[region_start_pc]
    if failure_pc < region_start_pc:
        return rm[region_start_pc], table[-1][1] if table else 0
    pcs = [e[0] for e in table]
    i = bisect_right(pcs, failure_pc)
    count = table[i - 1][1] if i else 0
    return rm[region_start_pc], count
