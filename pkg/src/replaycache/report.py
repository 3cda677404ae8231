"""Run reports, region statistics, and the store-ILP efficiency metric."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .isa import INSTR_BYTES, Op, Program
from .recovery import RecoveryMetadata


class NoStores(Exception):
    """Raised when an efficiency is requested for a run with no stores."""


@dataclass
class RegionInstance:
    """Stores retired during one dynamic pass through a region."""

    n: int
    stalls: tuple[int, ...]  # one entry per stalled store, cycles each


@dataclass
class RunReport:
    design: str
    nvm: str
    ckpt_variant: str
    cycles: int = 0
    active_cycles: int = 0
    boundary_stall_cycles: int = 0
    stores_total: int = 0
    stores_no_stall: int = 0
    stores_stall: int = 0
    store_stalls: list[int] = field(default_factory=list)  # S(i), stalled stores only
    region_instances: list[RegionInstance] = field(default_factory=list)
    load_hits: int = 0
    load_misses: int = 0
    store_hits: int = 0
    store_misses: int = 0
    energy_core_pj: float = 0.0
    energy_cache_pj: float = 0.0
    energy_nvm_pj: float = 0.0
    outages: int = 0
    recoveries: int = 0
    final_nvm_digest: str = ""

    def to_json(self) -> str:
        doc = asdict(self)
        doc["region_instances"] = [[ri.n, list(ri.stalls)] for ri in self.region_instances]
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        doc = json.loads(text)
        doc["region_instances"] = [RegionInstance(n, tuple(st))
                                   for n, st in doc["region_instances"]]
        return cls(**doc)


def compute_ilp_efficiency(report: RunReport, C: int) -> float:
    """Store-weighted percentage of hidden persist latency.

    Per region instance with N stores the efficiency is
    (1/N) * (sum over no-stall stores of 1 + sum over stalled stores of
    (1 - S(i)/C)) * 100; instances are aggregated store-weighted, which
    flattens to a mean over all stores.  Storeless instances are excluded.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    total = 0
    acc = 0.0
    for inst in report.region_instances:
        if inst.n == 0:
            continue
        total += inst.n
        acc += (inst.n - len(inst.stalls))  # no-stall stores contribute 1 each
        for s in inst.stalls:
            acc += 1.0 - s / C
    if total == 0:
        raise NoStores("run retired no stores; ILP efficiency is not applicable")
    return acc / total * 100.0


@dataclass
class RegionStats:
    region_count: int
    instr_counts: list[int]
    store_counts: list[int]
    last_store_distances: list[int]  # instructions between last store and boundary
    recovery_code_bytes: int
    metadata_bytes: int
    app_code_bytes: int

    @property
    def mean_instrs(self) -> float:
        return sum(self.instr_counts) / len(self.instr_counts) if self.instr_counts else 0.0

    @property
    def mean_stores(self) -> float:
        return sum(self.store_counts) / len(self.store_counts) if self.store_counts else 0.0

    @property
    def mean_last_store_distance(self) -> float | None:
        if not self.last_store_distances:
            return None
        return sum(self.last_store_distances) / len(self.last_store_distances)

    @property
    def size_overhead_pct(self) -> float:
        if not self.app_code_bytes:
            return 0.0
        return 100.0 * (self.recovery_code_bytes + self.metadata_bytes) / self.app_code_bytes


def region_stats(program: Program, metadata: RecoveryMetadata) -> RegionStats:
    """Static per-region statistics over the compiled binary."""
    app = [ins for fn in program.functions if not fn.recovery
           for ins in fn.instructions()]
    rec = [ins for fn in program.functions if fn.recovery
           for ins in fn.instructions()]
    instr_counts = []
    store_counts = []
    distances = []
    for g in metadata.regions:
        members = [i for i in app if g.start_pc <= i.pc < g.end_pc]
        instr_counts.append(len(members))
        store_counts.append(len(g.store_pcs))
        if g.store_pcs:
            last = max(g.store_pcs)
            distances.append(sum(1 for i in members if i.pc > last))
    return RegionStats(
        region_count=len(metadata.regions),
        instr_counts=instr_counts,
        store_counts=store_counts,
        last_store_distances=distances,
        recovery_code_bytes=len(rec) * INSTR_BYTES,
        metadata_bytes=len(metadata.to_json().encode()),
        app_code_bytes=len(app) * INSTR_BYTES,
    )
