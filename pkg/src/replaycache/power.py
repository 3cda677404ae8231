"""Voltage traces, threshold crossing detection, and outage scheduling."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .config import VoltageThresholds
from .machine import PowerEvent


class TraceError(Exception):
    pass


class MalformedRow(TraceError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class NonMonotonicTime(TraceError):
    pass


class EmptyTrace(TraceError):
    pass


class InvalidParams(TraceError):
    pass


@dataclass(frozen=True)
class PowerTrace:
    """Voltage samples over time; linear interpolation between samples."""

    samples: tuple[tuple[float, float], ...]  # (t_ns, volts), t strictly increasing

    def __post_init__(self):
        if not self.samples:
            raise EmptyTrace("trace has no samples")
        last = None
        for t, volts in self.samples:
            if volts < 0:
                raise TraceError(f"negative voltage at t={t}")
            if last is not None and t <= last:
                raise NonMonotonicTime(f"time not strictly increasing at t={t}")
            last = t

    def to_csv(self) -> str:
        return "".join(f"{t:g},{v:g}\n" for t, v in self.samples)


def load_trace(path: str) -> PowerTrace:
    with open(path) as fh:
        return parse_trace(fh.read())


def parse_trace(text: str) -> PowerTrace:
    samples = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise MalformedRow(lineno, f"expected 't_ns,volts', got {raw!r}")
        try:
            t = float(parts[0])
            volts = float(parts[1])
        except ValueError:
            raise MalformedRow(lineno, f"non-numeric field in {raw!r}")
        samples.append((t, volts))
    if not samples:
        raise EmptyTrace("trace file contains no samples")
    return PowerTrace(tuple(samples))


@dataclass(frozen=True)
class UncheckpointedOutage:
    """Diagnostic: the dip crossed vmin too soon after crossing v_ckpt for the
    checkpoint to complete."""

    t_ckpt_ns: float
    t_off_ns: float


def _crossings(trace: PowerTrace, level: float, downward: bool):
    """Times at which the interpolated trace crosses ``level``."""
    out = []
    pts = trace.samples
    for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
        if downward and v0 > level >= v1:
            out.append(t0 + (v0 - level) / (v0 - v1) * (t1 - t0))
        elif not downward and v0 < level <= v1:
            out.append(t0 + (level - v0) / (v1 - v0) * (t1 - t0))
    return out


def schedule_events(trace: PowerTrace, thresholds: VoltageThresholds,
                    cycles_per_ns: float, min_ckpt_gap_ns: float = 0.0
                    ) -> tuple[list[PowerEvent], list[UncheckpointedOutage]]:
    """Derive power events from a voltage trace.

    Checkpoint on each downward crossing of v_ckpt, power-off on each downward
    crossing of vmin, power-on on each upward crossing of v_restore that
    follows an off period.  Events whose checkpoint-to-off gap is shorter than
    ``min_ckpt_gap_ns`` are reported as UncheckpointedOutage diagnostics.
    """
    marks = []
    for t in _crossings(trace, thresholds.v_ckpt, downward=True):
        marks.append((t, 0, "checkpoint"))
    for t in _crossings(trace, thresholds.vmin, downward=True):
        marks.append((t, 1, "poweroff"))
    for t in _crossings(trace, thresholds.v_restore, downward=False):
        marks.append((t, 2, "poweron"))
    marks.sort()

    events: list[PowerEvent] = []
    diagnostics: list[UncheckpointedOutage] = []
    off = False
    last_ckpt_t = None
    for t, _, kind in marks:
        if kind == "checkpoint":
            if not off:
                last_ckpt_t = t
                events.append(PowerEvent(int(round(t * cycles_per_ns)), kind))
        elif kind == "poweroff":
            if not off:
                if last_ckpt_t is None or (t - last_ckpt_t) < min_ckpt_gap_ns:
                    diagnostics.append(UncheckpointedOutage(last_ckpt_t or -1.0, t))
                events.append(PowerEvent(int(round(t * cycles_per_ns)), kind))
                off = True
        elif kind == "poweron":
            if off:
                events.append(PowerEvent(int(round(t * cycles_per_ns)), kind))
                off = False
                last_ckpt_t = None
    return events, diagnostics


def synthesize_trace(kind: str, params: dict | None = None, seed: int = 0) -> PowerTrace:
    """Deterministic synthetic traces: ``square`` dips or ``poisson`` arrivals."""
    params = dict(params or {})
    if kind == "square":
        return _square_trace(**params)
    if kind == "poisson":
        return _poisson_trace(seed=seed, **params)
    raise InvalidParams(f"unknown trace kind {kind!r}")


def _square_trace(period_ns: float = 20000.0, n_periods: int = 10,
                  vhigh: float = 3.4, vlow: float = 2.5,
                  ramp_ns: float = 2000.0) -> PowerTrace:
    if period_ns <= 0 or n_periods < 0 or ramp_ns <= 0 or 2 * ramp_ns >= period_ns:
        raise InvalidParams("square trace needs 0 < 2*ramp_ns < period_ns, n_periods >= 0")
    if vlow >= vhigh:
        raise InvalidParams("square trace needs vlow < vhigh")
    samples = [(0.0, vhigh)]
    t = 0.0
    for _ in range(n_periods):
        mid = period_ns / 2
        samples.append((t + mid, vhigh))
        samples.append((t + mid + ramp_ns, vlow))
        samples.append((t + period_ns, vlow))
        samples.append((t + period_ns + ramp_ns, vhigh))
        t += period_ns + ramp_ns
    samples.append((t + period_ns, vhigh))
    return PowerTrace(tuple(samples))


def _poisson_trace(duration_ns: float = 200000.0, rate_per_ms: float = 0.0,
                   vhigh: float = 3.4, vlow: float = 2.5,
                   dip_ns: float = 3000.0, ramp_ns: float = 2000.0,
                   seed: int = 0) -> PowerTrace:
    if duration_ns <= 0 or rate_per_ms < 0 or dip_ns <= 0 or ramp_ns <= 0:
        raise InvalidParams("poisson trace needs positive duration, dip, and ramp")
    rng = random.Random(seed)
    samples = [(0.0, vhigh)]
    t = 0.0
    if rate_per_ms > 0:
        mean_gap = 1e6 / rate_per_ms  # ns between dips
        while True:
            t += rng.expovariate(1.0 / mean_gap)
            if t + 2 * ramp_ns + dip_ns >= duration_ns:
                break
            samples.append((t, vhigh))
            samples.append((t + ramp_ns, vlow))
            samples.append((t + ramp_ns + dip_ns, vlow))
            samples.append((t + 2 * ramp_ns + dip_ns, vhigh))
            t += 2 * ramp_ns + dip_ns
    samples.append((duration_ns, vhigh))
    return PowerTrace(tuple(samples))
