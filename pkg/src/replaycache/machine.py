"""Cycle-level in-order core with a volatile write-back data cache,
asynchronous store persistence, region-boundary stalls, NVM timing, and
pluggable register checkpointing, plus the four comparison cache designs.

Timing rules (write-back replay design):

* ALU, moves, branches, calls: 1 cycle.  Loads: 1 cycle on a hit,
  ``read_cycles`` + 1 on a miss.  Stores write the cache line and take
  1 cycle; the paired ``clwb`` (1 cycle) enqueues the line for asynchronous
  persistence which completes ``write_persist_cycles`` later.
* ``rboundary`` retires only once the persist queue is empty, then latches
  its PC into the region register.
* A power-off discards cache and in-flight persists; recovery replays the
  interrupted region's stores synchronously before resuming.

One Machine per simulation; instances share nothing.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

from .config import NvmTiming, SimConfig
from .isa import (BRANCH_OPS, INSTR_BYTES, LR, Op, Program, Reg, REGION_REG,
                  SP, WORD_BYTES, flatten, layout_blocks, program_layout)
from .recovery import CKPT_WORDS, RecoveryMetadata, lookup_recovery
from .report import RegionInstance, RunReport

MASK64 = (1 << 64) - 1


class MachineError(Exception):
    pass


class InvalidMemoryAccess(MachineError):
    pass


class UnalignedAccess(MachineError):
    pass


class MissingMetadata(MachineError):
    pass


class NonTerminatingRun(MachineError):
    pass


class PersistenceCheckFailed(MachineError):
    """Debug-mode region-level persistence assertion tripped."""


class Design(str, Enum):
    NOCACHE = "nocache"
    WT = "wt"
    NVCACHE = "nvcache"
    NVSRAM = "nvsram"
    REPLAYCACHE = "replaycache"
    WB_NOREPLAY = "wb-noreplay"  # deliberately broken comparand for the oracle


#: designs whose cache contents survive a power outage
RETAINING = {Design.NVSRAM, Design.NVCACHE}
#: designs with a volatile write-back cache
WRITE_BACK = {Design.REPLAYCACHE, Design.WB_NOREPLAY, Design.NVSRAM}


class Mode(Enum):
    NORMAL = "normal"
    RECOVERY = "recovery"
    OFF = "off"


class StepEvent(Enum):
    RETIRED = "retired"
    HALTED = "halted"
    OUTAGE_PENDING = "outage-pending"


@dataclass(frozen=True)
class PowerEvent:
    cycle: int
    kind: str  # "checkpoint" | "poweroff" | "poweron"


def forced_outage_events(cycles: list[int], recharge: int) -> list[PowerEvent]:
    """Checkpoint+off at each given cycle, power back on after the recharge
    delay.  Used by the crash-injection sweep."""
    out = []
    for k in sorted(cycles):
        out.append(PowerEvent(k, "checkpoint"))
        out.append(PowerEvent(k, "poweroff"))
        out.append(PowerEvent(k + recharge, "poweron"))
    return out


class _Line:
    __slots__ = ("tag", "valid", "dirty", "lru", "data", "store_ids")

    def __init__(self, line_bytes: int):
        self.tag = 0
        self.valid = False
        self.dirty = False
        self.lru = 0
        self.data = bytearray(line_bytes)
        self.store_ids: list[int] = []


class Cache:
    def __init__(self, size: int, ways: int, line_bytes: int):
        self.line_bytes = line_bytes
        self.ways = ways
        self.sets = size // (ways * line_bytes)
        if self.sets < 1 or size % (ways * line_bytes):
            raise ValueError("cache size must be a multiple of ways*line_bytes")
        self.lines = [[_Line(line_bytes) for _ in range(ways)] for _ in range(self.sets)]
        self.tick = 0

    def _locate(self, addr: int) -> tuple[int, int]:
        line_no = addr // self.line_bytes
        return line_no % self.sets, line_no // self.sets

    def line_addr(self, addr: int) -> int:
        return addr - addr % self.line_bytes

    def probe(self, addr: int) -> int | None:
        set_i, tag = self._locate(addr)
        for w, line in enumerate(self.lines[set_i]):
            if line.valid and line.tag == tag:
                return w
        return None

    def touch(self, addr: int, way: int):
        set_i, _ = self._locate(addr)
        self.tick += 1
        self.lines[set_i][way].lru = self.tick

    def victim_way(self, addr: int) -> int:
        set_i, _ = self._locate(addr)
        ways = self.lines[set_i]
        for w, line in enumerate(ways):
            if not line.valid:
                return w
        return min(range(self.ways), key=lambda w: ways[w].lru)

    def line(self, addr: int, way: int) -> _Line:
        set_i, _ = self._locate(addr)
        return self.lines[set_i][way]

    def install(self, addr: int, way: int, data: bytes):
        set_i, tag = self._locate(addr)
        line = self.lines[set_i][way]
        line.tag = tag
        line.valid = True
        line.dirty = False
        line.data[:] = data
        line.store_ids = []

    def invalidate_all(self):
        for st in self.lines:
            for line in st:
                line.valid = False
                line.dirty = False
                line.store_ids = []

    def dirty_lines(self):
        for set_i, st in enumerate(self.lines):
            for line in st:
                if line.valid and line.dirty:
                    base = (line.tag * self.sets + set_i) * self.line_bytes
                    yield base, line


@dataclass
class _Checkpoint:
    regs: tuple[int, ...]
    pc: int
    region_reg: int


class Machine:
    """One program image plus the full architectural and cache state."""

    def __init__(self, program: Program, design: Design | str,
                 timing: NvmTiming, cfg: SimConfig | None = None,
                 metadata: RecoveryMetadata | None = None,
                 ckpt_variant: str = "nvp"):
        self.cfg = cfg or SimConfig()
        self.design = Design(design)
        self.timing = timing
        self.metadata = metadata
        self.ckpt_variant = ckpt_variant
        if self.design is Design.REPLAYCACHE:
            if metadata is None:
                raise MissingMetadata("the write-back replay design requires recovery metadata")
            if metadata.variant != ckpt_variant:
                raise MissingMetadata(
                    f"metadata was generated for the {metadata.variant!r} checkpoint "
                    f"variant, machine is configured for {ckpt_variant!r}")
        self._load(program)
        self.reset()

    # ------------------------------------------------------------ loading

    def _load(self, program: Program):
        self.program = program
        instrs = flatten(program)
        if not instrs or instrs[0].pc != 0:
            raise MachineError("program must be linearized from pc 0")
        self.instrs = instrs
        self.code_end = instrs[-1].pc + INSTR_BYTES
        block_pc: dict[tuple[str, str], int] = {}
        fn_entry: dict[str, int] = {}
        for fn, blk in program_layout(program):
            if blk.instrs:
                block_pc[(fn.name, blk.label)] = blk.instrs[0].pc
        for fn in program.functions:
            fn_entry[fn.name] = fn.entry.instrs[0].pc
        # static control successors
        self.succ: dict[int, tuple] = {}
        for fn in program.functions:
            for blk in fn.blocks:
                for ins in blk.instrs:
                    if ins.op in BRANCH_OPS:
                        taken = block_pc[(fn.name, ins.args[2])]
                        fall_label = fn.decl_next(blk.label)
                        fall = block_pc[(fn.name, fall_label)] if fall_label else None
                        self.succ[ins.pc] = (taken, fall)
                    elif ins.op is Op.JMP:
                        self.succ[ins.pc] = (block_pc[(fn.name, ins.args[0])],)
                    elif ins.op is Op.CALL:
                        self.succ[ins.pc] = (fn_entry[ins.args[0]],)
        self.entry_pc = fn_entry[program.entry_name]

    def reset(self):
        cfg = self.cfg
        self.regs = [0] * 16
        self.regs[SP] = cfg.stack_top
        self.pc = self.entry_pc
        self.region_register = self.entry_pc
        self.cycle = 0
        self.mode = Mode.NORMAL
        self.halted = False
        self.nvm = bytearray(cfg.nvm_size)
        for addr, byte in self.program.data:
            self.nvm[addr] = byte & 0xFF
        self.cache = None
        if self.design is not Design.NOCACHE:
            self.cache = Cache(cfg.cache_size, cfg.ways, cfg.line_bytes)
        self.queue: list[list] = []  # [completes_at, seq, line_addr, data, store_ids]
        self._qseq = 0
        self.ckpt: _Checkpoint | None = None
        self.events: list[PowerEvent] = []
        self._event_idx = 0
        self._dyn_store = 0
        self._region_store_ids: list[int] = []
        self._region_stores_retired: dict[int, tuple[int, int]] = {}  # id -> (addr, value)
        self.store_log: list[tuple[int, int, int]] = []  # (pc, addr, value)
        self.report = RunReport(design=self.design.value, nvm=self.timing.technology,
                                ckpt_variant=self.ckpt_variant)

    # ------------------------------------------------------------ helpers

    @property
    def pending_persist_counter(self) -> int:
        return len(self.queue)

    def _reg(self, x) -> int:
        if isinstance(x, Reg):
            if x.virtual:
                raise MachineError(f"virtual register {x} reached the machine")
            return self.regs[x.n]
        return x & MASK64

    def _signed(self, val: int) -> int:
        return val - (1 << 64) if val >> 63 else val

    def _check_addr(self, addr: int):
        if addr % WORD_BYTES:
            raise UnalignedAccess(f"unaligned word access at {addr:#x}")
        if addr < 0 or addr + WORD_BYTES > self.cfg.nvm_size:
            raise InvalidMemoryAccess(f"address {addr:#x} outside memory")

    def _nvm_read_word(self, addr: int) -> int:
        self.report.energy_nvm_pj += self.cfg.nvm_read_pj
        return int.from_bytes(self.nvm[addr:addr + WORD_BYTES], "little")

    def _nvm_write_word(self, addr: int, value: int):
        self.report.energy_nvm_pj += self.cfg.nvm_write_pj
        self.nvm[addr:addr + WORD_BYTES] = (value & MASK64).to_bytes(WORD_BYTES, "little")

    def _nvm_line(self, line_addr: int) -> bytes:
        return bytes(self.nvm[line_addr:line_addr + self.cfg.line_bytes])

    def _drain(self, upto_cycle: int):
        if not self.queue:
            return
        self.queue.sort()
        keep = []
        for entry in self.queue:
            completes, _, line_addr, data, _ = entry
            if completes <= upto_cycle:
                self.nvm[line_addr:line_addr + len(data)] = data
                self.report.energy_nvm_pj += self.cfg.nvm_write_pj
            else:
                keep.append(entry)
        self.queue = keep

    def _enqueue_persist(self, line_addr: int, data: bytes, store_ids: list[int]):
        for entry in self.queue:
            if entry[2] == line_addr:
                entry[0] = self.cycle + self.timing.write_persist_cycles
                entry[3] = bytes(data)
                entry[4] = sorted(set(entry[4]) | set(store_ids))
                self.queue.sort()
                return
        self._qseq += 1
        self.queue.append([self.cycle + self.timing.write_persist_cycles,
                           self._qseq, line_addr, bytes(data), list(store_ids)])
        self.queue.sort()

    def _cache_energy(self):
        self.report.energy_cache_pj += self.cfg.cache_pj_per_access

    # ------------------------------------------------------------ memory ops

    def _fill(self, addr: int) -> int:
        """Allocate the line holding addr, writing back a dirty victim."""
        line_addr = self.cache.line_addr(addr)
        way = self.cache.victim_way(addr)
        victim = self.cache.line(addr, way)
        if victim.valid and victim.dirty:
            set_i, _ = self.cache._locate(addr)
            base = (victim.tag * self.cache.sets + set_i) * self.cache.line_bytes
            if self.design in (Design.REPLAYCACHE, Design.WB_NOREPLAY):
                self._enqueue_persist(base, bytes(victim.data), victim.store_ids)
            else:
                self.nvm[base:base + self.cache.line_bytes] = victim.data
                self.report.energy_nvm_pj += self.cfg.nvm_write_pj
        self.cache.install(line_addr, way, self._nvm_line(line_addr))
        return way

    def _plan_load(self, addr: int) -> int:
        d = self.design
        if d is Design.NOCACHE or self.mode is Mode.RECOVERY:
            return self.timing.read_cycles
        way = self.cache.probe(addr)
        if d is Design.NVCACHE:
            return self.cfg.nvcache_read_cycles if way is not None \
                else self.timing.read_cycles + self.cfg.nvcache_read_cycles
        return 1 if way is not None else self.timing.read_cycles + 1

    def _do_load(self, addr: int, dest: Reg):
        d = self.design
        if d is Design.NOCACHE or self.mode is Mode.RECOVERY:
            self.regs[dest.n] = self._nvm_read_word(addr)
            return
        way = self.cache.probe(addr)
        if way is None:
            self.report.load_misses += 1
            way = self._fill(addr)
        else:
            self.report.load_hits += 1
        self._cache_energy()
        self.cache.touch(addr, way)
        line = self.cache.line(addr, way)
        off = addr % self.cache.line_bytes
        self.regs[dest.n] = int.from_bytes(line.data[off:off + WORD_BYTES], "little")

    def _plan_store(self, addr: int) -> int:
        d = self.design
        if self.mode is Mode.RECOVERY:
            return self.timing.write_persist_cycles
        if d is Design.NOCACHE or d is Design.WT:
            return self.timing.write_persist_cycles
        if d is Design.NVCACHE:
            return self.cfg.nvcache_write_cycles if self.cache.probe(addr) is not None \
                else self.timing.read_cycles + self.cfg.nvcache_write_cycles
        return 1

    def _do_store(self, addr: int, value: int, store_pc: int):
        d = self.design
        if self.mode is Mode.RECOVERY:
            self._nvm_write_word(addr, value)
            return
        self.store_log.append((store_pc, addr, value))
        self._dyn_store += 1
        sid = self._dyn_store
        self._region_store_ids.append(sid)
        self._region_stores_retired[sid] = (addr, value)
        self.report.stores_total += 1
        if d is Design.NOCACHE:
            self._nvm_write_word(addr, value)
            return
        way = self.cache.probe(addr)
        if way is None:
            self.report.store_misses += 1
            way = self._fill(addr)
        else:
            self.report.store_hits += 1
        self._cache_energy()
        self.cache.touch(addr, way)
        line = self.cache.line(addr, way)
        off = addr % self.cache.line_bytes
        line.data[off:off + WORD_BYTES] = (value & MASK64).to_bytes(WORD_BYTES, "little")
        if d is Design.WT:
            self._nvm_write_word(addr, value)  # synchronous persist, line stays clean
        elif d is Design.NVCACHE:
            line.dirty = True  # non-volatile cell, persistent at write completion
        else:
            line.dirty = True
            line.store_ids.append(sid)

    def _do_clwb(self, addr: int):
        if self.design not in (Design.REPLAYCACHE, Design.WB_NOREPLAY) \
                or self.mode is Mode.RECOVERY:
            return
        way = self.cache.probe(addr)
        if way is None:
            return
        line = self.cache.line(addr, way)
        if not line.dirty:
            return
        line_addr = self.cache.line_addr(addr)
        self._enqueue_persist(line_addr, bytes(line.data), line.store_ids)
        line.dirty = False
        line.store_ids = []

    # ------------------------------------------------------------ stepping

    def _next_event(self) -> PowerEvent | None:
        if self.mode is Mode.RECOVERY:
            return None  # recovery is power-failure-free; events wait
        if self._event_idx < len(self.events):
            return self.events[self._event_idx]
        return None

    def _boundary_retire_cycle(self) -> int:
        start = self.cycle + 1
        if self.design is Design.REPLAYCACHE and self.queue:
            return max(start, max(e[0] for e in self.queue))
        return start

    def step(self) -> StepEvent:
        self._drain(self.cycle)
        ins = self.instrs[self.pc // INSTR_BYTES]
        op = ins.op

        # effective address for memory operations
        addr = None
        if op in (Op.LD, Op.ST, Op.CLWB):
            base = ins.args[0] if op is not Op.ST else ins.args[1]
            off = ins.args[1] if op is not Op.ST else ins.args[2]
            addr = (self._reg(base) + off) & MASK64
            if addr >> 63:
                addr -= 1 << 64
            self._check_addr(addr)

        pending = None
        if op is Op.LD:
            cost = self._plan_load(addr)
        elif op is Op.ST:
            cost = self._plan_store(addr)
        elif op is Op.RBOUNDARY:
            cost = self._boundary_retire_cycle() - self.cycle
            pending = [(e[0], tuple(e[4])) for e in self.queue]
        elif op is Op.HALT:
            cost = max(self._boundary_retire_cycle() - self.cycle, 1) \
                if (self.design is Design.REPLAYCACHE and self.mode is Mode.NORMAL) else 1
            pending = [(e[0], tuple(e[4])) for e in self.queue]
        else:
            cost = 1

        ev = self._next_event()
        retire_at = self.cycle + cost
        if ev is not None and ev.cycle < retire_at:
            self._drain(ev.cycle)
            self.cycle = ev.cycle
            return StepEvent.OUTAGE_PENDING

        boundary_started = self.cycle + 1
        self.cycle = retire_at
        self.report.active_cycles += cost
        self.report.energy_core_pj += cost * self.cfg.core_pj_per_cycle
        self._drain(self.cycle)

        next_pc = self.pc + INSTR_BYTES
        if op is Op.LI:
            self.regs[ins.args[0].n] = ins.args[1] & MASK64
        elif op is Op.MOV:
            self.regs[ins.args[0].n] = self._reg(ins.args[1])
        elif op is Op.ADD:
            self.regs[ins.args[0].n] = (self._reg(ins.args[1]) + self._reg(ins.args[2])) & MASK64
        elif op is Op.SUB:
            self.regs[ins.args[0].n] = (self._reg(ins.args[1]) - self._reg(ins.args[2])) & MASK64
        elif op is Op.MUL:
            self.regs[ins.args[0].n] = (self._reg(ins.args[1]) * self._reg(ins.args[2])) & MASK64
        elif op is Op.SHL:
            self.regs[ins.args[0].n] = (self._reg(ins.args[1]) << (self._reg(ins.args[2]) & 63)) & MASK64
        elif op is Op.LD:
            self._do_load(addr, ins.args[2])
        elif op is Op.ST:
            self._do_store(addr, self._reg(ins.args[0]), ins.pc)
        elif op is Op.CLWB:
            self._do_clwb(addr)
        elif op in BRANCH_OPS:
            a = self._signed(self._reg(ins.args[0]))
            b = self._signed(self._reg(ins.args[1]))
            taken = {Op.BEQ: a == b, Op.BNE: a != b, Op.BLT: a < b}[op]
            taken_pc, fall_pc = self.succ[ins.pc]
            if taken:
                next_pc = taken_pc
            else:
                if fall_pc is None:
                    raise MachineError(f"branch at pc {ins.pc} has no fallthrough")
                next_pc = fall_pc
        elif op is Op.JMP:
            next_pc = self.succ[ins.pc][0]
        elif op is Op.CALL:
            self.regs[LR] = self.pc + INSTR_BYTES
            next_pc = self.succ[ins.pc][0]
        elif op is Op.RET:
            next_pc = self.regs[LR]
            if next_pc % INSTR_BYTES or next_pc >= self.code_end:
                raise InvalidMemoryAccess(f"ret to invalid address {next_pc:#x}")
        elif op is Op.RBOUNDARY:
            self._retire_boundary(ins.pc, boundary_started, pending)
        elif op is Op.HALT:
            if self.mode is Mode.RECOVERY:
                self._finish_recovery()
                return StepEvent.RETIRED
            self._finish_halt(boundary_started, pending)
            return StepEvent.HALTED

        if next_pc >= self.code_end or next_pc < 0:
            raise InvalidMemoryAccess(f"pc {next_pc:#x} outside code")
        self.pc = next_pc
        return StepEvent.RETIRED

    def _attribute_stalls(self, boundary_started: int, pending) -> list[int]:
        stalls = []
        for completes, ids in pending or []:
            s = completes - boundary_started
            if s > 0:
                for sid in ids:
                    if sid in self._region_stores_retired:
                        stalls.append(s)
        self.report.stores_stall += len(stalls)
        self.report.store_stalls.extend(sorted(stalls))
        return sorted(stalls)

    def _close_region_instance(self, boundary_started: int, pending):
        n = len(self._region_store_ids)
        stalls = self._attribute_stalls(boundary_started, pending)
        if n:
            self.report.stores_no_stall += n - len(stalls)
            self.report.region_instances.append(RegionInstance(n, tuple(stalls)))
        self._region_store_ids = []
        self._region_stores_retired = {}

    def _retire_boundary(self, pc: int, boundary_started: int, pending):
        stall = self.cycle - boundary_started
        self.report.boundary_stall_cycles += max(stall, 0)
        if self.design is Design.REPLAYCACHE and self.mode is Mode.NORMAL:
            if self.cfg.debug_checks:
                self._assert_region_persistence()
            self._close_region_instance(boundary_started, pending)
        self.region_register = pc

    def _finish_halt(self, boundary_started: int, pending):
        if self.design is Design.REPLAYCACHE:
            stall = self.cycle - boundary_started
            self.report.boundary_stall_cycles += max(stall, 0)
            self._close_region_instance(boundary_started, pending)
        # shutdown completes outstanding persists and parks dirty lines
        for _, _, line_addr, data, _ in self.queue:
            self.nvm[line_addr:line_addr + len(data)] = data
        self.queue = []
        if self.cache is not None:
            for base, line in self.cache.dirty_lines():
                self.nvm[base:base + self.cache.line_bytes] = line.data
                line.dirty = False
        self.halted = True
        self.report.final_nvm_digest = self.nvm_digest()

    def _assert_region_persistence(self):
        """Every store retired in the closing region must be visible in NVM
        once the boundary is allowed to retire (the queue is empty here)."""
        if self.queue:
            raise PersistenceCheckFailed("boundary retired with persists in flight")
        for sid, (addr, value) in self._region_stores_retired.items():
            got = int.from_bytes(self.nvm[addr:addr + WORD_BYTES], "little")
            if got != value & MASK64:
                raise PersistenceCheckFailed(
                    f"store {sid} at {addr:#x}: nvm has {got}, expected {value}")

    # ------------------------------------------------------------ power

    def checkpoint(self):
        """JIT register checkpoint; QuickRecall additionally writes the words
        into the fixed NVM checkpoint area."""
        self.ckpt = _Checkpoint(tuple(self.regs), self.pc, self.region_register)
        if self.ckpt_variant == "quickrecall":
            cost = CKPT_WORDS * self.timing.write_persist_cycles
            base = self.cfg.qr_ckpt_base
            words = list(self.regs) + [self.pc, self.region_register]
            for i, w in enumerate(words):
                self.nvm[base + 8 * i:base + 8 * (i + 1)] = (w & MASK64).to_bytes(8, "little")
                self.report.energy_nvm_pj += self.cfg.nvm_write_pj
        else:
            cost = CKPT_WORDS * self.cfg.nvff_cycles_per_word
        if self.design is Design.NVSRAM:
            cost += self.cfg.nvsram_cache_ckpt_cycles
        self.cycle += cost
        self.report.active_cycles += cost
        self.report.energy_core_pj += cost * self.cfg.core_pj_per_cycle

    def restore(self):
        if self.ckpt is None:
            return
        cost = CKPT_WORDS * (self.timing.read_cycles
                             if self.ckpt_variant == "quickrecall"
                             else self.cfg.nvff_cycles_per_word)
        self.cycle += cost
        self.report.active_cycles += cost
        self.report.energy_core_pj += cost * self.cfg.core_pj_per_cycle
        self.regs = list(self.ckpt.regs)
        self.pc = self.ckpt.pc
        self.region_register = self.ckpt.region_reg

    def power_off(self):
        self.mode = Mode.OFF
        self.report.outages += 1
        self.queue = []
        self._region_store_ids = []
        self._region_stores_retired = {}
        if self.cache is not None and self.design not in RETAINING:
            self.cache.invalidate_all()

    def power_on(self):
        self.report.recoveries += 1
        self.regs = [0] * 16  # volatile register file came up cold
        if self.ckpt is None:  # cold boot
            self.regs[SP] = self.cfg.stack_top
            self.pc = self.entry_pc
            self.region_register = self.entry_pc
            self.mode = Mode.NORMAL
            return
        if self.design is Design.REPLAYCACHE:
            self.enter_recovery()
        else:
            self.restore()
            self.mode = Mode.NORMAL

    def enter_recovery(self):
        """Locate the interrupted region's replay block and run it; stores
        executed in recovery mode persist synchronously."""
        block_pc, count = lookup_recovery(self.metadata.rm, self.metadata.cm,
                                          self.ckpt.region_reg, self.ckpt.pc)
        if count == 0:
            self.restore()
            self.mode = Mode.NORMAL
            return
        self.mode = Mode.RECOVERY
        if self.ckpt_variant != "quickrecall":
            self.restore()  # NVFF in-place restore supplies the operands
        self.regs[REGION_REG] = count
        self.pc = block_pc

    def _finish_recovery(self):
        self.restore()
        self.mode = Mode.NORMAL

    # ------------------------------------------------------------ driving

    def run(self, events: list[PowerEvent] | None = None,
            max_cycles: int | None = None) -> RunReport:
        self.events = sorted(events or [], key=lambda e: (e.cycle, e.kind))
        self._event_idx = 0
        limit = max_cycles if max_cycles is not None else self.cfg.golden_cycle_bound * 100
        while not self.halted:
            if self.cycle > limit:
                raise NonTerminatingRun(f"exceeded {limit} cycles")
            ev = self._next_event()
            if ev is not None and ev.cycle <= self.cycle:
                self._event_idx += 1
                self._handle_event(ev)
                continue
            if self.mode is Mode.OFF:
                if ev is None:
                    raise MachineError("power stayed off with no power-on event")
                self.cycle = ev.cycle
                continue
            self.step()
        self.report.cycles = self.cycle
        return self.report

    def _handle_event(self, ev: PowerEvent):
        if ev.kind == "checkpoint":
            if self.mode is Mode.NORMAL:
                self.checkpoint()
        elif ev.kind == "poweroff":
            if self.mode is not Mode.OFF:
                self.power_off()
        elif ev.kind == "poweron":
            if self.mode is Mode.OFF:
                self.cycle = max(self.cycle, ev.cycle)
                self.power_on()
        else:
            raise MachineError(f"unknown power event kind {ev.kind!r}")

    def nvm_digest(self) -> str:
        """Digest of NVM contents excluding the checkpoint scratch area."""
        h = hashlib.sha256()
        base = self.cfg.qr_ckpt_base
        h.update(self.nvm[:base])
        h.update(self.nvm[base + 8 * CKPT_WORDS:])
        return h.hexdigest()


def run_design(program: Program, design: Design | str, timing: NvmTiming,
               events: list[PowerEvent] | None = None,
               cfg: SimConfig | None = None,
               metadata: RecoveryMetadata | None = None,
               ckpt_variant: str = "nvp",
               max_cycles: int | None = None) -> RunReport:
    """Run one simulation to completion and return its report."""
    m = Machine(program, design, timing, cfg, metadata, ckpt_variant)
    return m.run(events, max_cycles)
