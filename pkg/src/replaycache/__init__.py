"""Store-replay crash consistency toolchain.

A mini compiler that partitions programs into store-register-preserving
regions and emits replay-based recovery code, plus a cycle-level
intermittent-power machine simulator with a volatile write-back cache,
validated by exhaustive crash-injection differential testing.
"""

from .config import SimConfig, EnergyModel, VoltageThresholds, nvm_timing
from .isa import parse_assembly, print_assembly, linearize, validate
from .pipeline import compile_program, CompileOptions

__all__ = [
    "SimConfig",
    "EnergyModel",
    "VoltageThresholds",
    "nvm_timing",
    "parse_assembly",
    "print_assembly",
    "linearize",
    "validate",
    "compile_program",
    "CompileOptions",
]
