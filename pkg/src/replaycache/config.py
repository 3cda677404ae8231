"""Configuration dataclasses: NVM timing, voltage thresholds, energy model, simulator knobs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace

# Raw device timing parameters in nanoseconds, per technology:
# (tCK, tBURST, tRCD, tCL, tWTR, tWR, tXAW)
NVM_TIMING_NS = {
    "reram": (0.94, 7.5, 18.0, 15.0, 7.5, 150.0, 30.0),
    "sttram": (1.5, 6.0, 35.0, 15.0, 12.5, 25.0, 50.0),
    "pcm": (1.88, 7.5, 48.0, 15.0, 7.5, 300.0, 50.0),
}

# Scale applied to (tRCD + tWR) when converting to core cycles.  Chosen so the
# ReRAM store persist latency lands on 31 cycles at the default 1 ns core clock;
# the same factor is applied to the other technologies.
PERSIST_SCALE = 31.0 / 168.0

_CEIL_EPS = 1e-9


def _ceil(x: float) -> int:
    return math.ceil(x - _CEIL_EPS)


@dataclass(frozen=True)
class NvmTiming:
    """Derived cycle counts for one NVM technology at a given core clock."""

    technology: str
    tck: float
    tburst: float
    trcd: float
    tcl: float
    twtr: float
    twr: float
    txaw: float
    read_cycles: int
    write_persist_cycles: int


def nvm_timing(technology: str, clock_ns: float = 1.0,
               persist_scale: float = PERSIST_SCALE) -> NvmTiming:
    try:
        tck, tburst, trcd, tcl, twtr, twr, txaw = NVM_TIMING_NS[technology]
    except KeyError:
        raise ValueError(f"unknown NVM technology: {technology!r}")
    read = _ceil((trcd + tcl + tburst) / clock_ns)
    write = _ceil((trcd + twr) * persist_scale / clock_ns)
    return NvmTiming(technology, tck, tburst, trcd, tcl, twtr, twr, txaw, read, write)


@dataclass(frozen=True)
class VoltageThresholds:
    """Voltage monitor configuration.  Requires vmin < v_ckpt < v_restore <= vmax."""

    vmax: float
    vmin: float
    v_ckpt: float
    v_restore: float

    def __post_init__(self):
        if not (self.vmin < self.v_ckpt < self.v_restore <= self.vmax):
            raise ValueError(f"thresholds must satisfy vmin < ckpt < restore <= vmax: {self}")


THRESHOLD_PRESETS = {
    "nvp": VoltageThresholds(vmax=3.3, vmin=2.8, v_ckpt=2.9, v_restore=3.2),
    "nvp-nvsram": VoltageThresholds(vmax=3.5, vmin=2.8, v_ckpt=3.2, v_restore=3.4),
    "quickrecall": VoltageThresholds(vmax=3.5, vmin=2.8, v_ckpt=3.1, v_restore=3.3),
}


@dataclass(frozen=True)
class EnergyModel:
    """Linear per-instruction-class recovery energy model, picojoules."""

    alu: float = 1.0
    load: float = 2.0
    store_persist: float = 10.0
    branch: float = 1.0
    move: float = 1.0
    restore_constant: float = 100.0
    capacitor_budget: float = 1_000_000.0

    def __post_init__(self):
        for name in ("alu", "load", "store_persist", "branch", "move"):
            if getattr(self, name) <= 0:
                raise ValueError(f"energy for class {name} must be > 0")


@dataclass(frozen=True)
class SimConfig:
    """Every tunable constant of the simulator and benchmark harness."""

    # core
    clock_ns: float = 1.0
    cycles_per_ns: float = 1.0
    persist_scale: float = PERSIST_SCALE

    # cache geometry
    cache_size: int = 8192
    ways: int = 2
    line_bytes: int = 32

    # NVCache access latencies (cycles), roughly 3x / 10x an SRAM hit
    nvcache_read_cycles: int = 3
    nvcache_write_cycles: int = 10

    # memory map
    nvm_size: int = 0x10000
    stack_top: int = 0x8000
    stack_span: int = 4096
    qr_ckpt_base: int = 0xFF00  # QuickRecall register checkpoint area (18 words)

    # checkpoint hardware costs
    nvff_cycles_per_word: int = 1
    nvsram_cache_ckpt_cycles: int = 32
    recharge_cycles: int = 100

    # energy ledger constants (only ratios matter for breakdown reports)
    core_pj_per_cycle: float = 1.0
    cache_pj_per_access: float = 2.0
    nvm_read_pj: float = 50.0
    nvm_write_pj: float = 100.0

    # recovery energy model
    energy: EnergyModel = field(default_factory=EnergyModel)

    # harness
    golden_cycle_bound: int = 5000
    debug_checks: bool = False

    def timing(self, technology: str) -> NvmTiming:
        return nvm_timing(technology, self.clock_ns, self.persist_scale)


def load_config(path: str) -> SimConfig:
    """Read a flat JSON object and overlay it on the defaults.

    Keys prefixed with "energy." (or nested under an "energy" object) address
    the recovery energy model.
    """
    with open(path) as fh:
        raw = json.load(fh)
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> SimConfig:
    cfg_fields = {f.name for f in fields(SimConfig)}
    energy_fields = {f.name for f in fields(EnergyModel)}
    cfg_kwargs = {}
    energy_kwargs = {}
    for key, value in raw.items():
        if key == "energy" and isinstance(value, dict):
            energy_kwargs.update(value)
        elif key.startswith("energy."):
            energy_kwargs[key.split(".", 1)[1]] = value
        elif key in cfg_fields:
            cfg_kwargs[key] = value
        else:
            raise ValueError(f"unknown config key: {key!r}")
    bad = set(energy_kwargs) - energy_fields
    if bad:
        raise ValueError(f"unknown energy model keys: {sorted(bad)}")
    cfg = SimConfig(**cfg_kwargs)
    if energy_kwargs:
        cfg = replace(cfg, energy=replace(cfg.energy, **energy_kwargs))
    return cfg
