"""Command-line harness: compile, run, verify, fuzz, bench, stats, ilp.

Exit codes: 0 success, 1 violations or mismatches, 2 usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

from .config import SimConfig, load_config
from .isa import linearize, parse_assembly, print_assembly, validate
from .machine import Design, PowerEvent, forced_outage_events, run_design
from .oracle import exhaustive_crash_sweep, verify_store_integrity
from .pipeline import CompileOptions, compile_program
from .power import load_trace, schedule_events, synthesize_trace
from .recovery import RecoveryMetadata
from .report import NoStores, RunReport, compute_ilp_efficiency, region_stats
from .config import THRESHOLD_PRESETS

PUBLIC_DESIGNS = ("nocache", "wt", "nvcache", "nvsram", "replaycache")
NVM_TECHS = ("reram", "sttram", "pcm")

BENCH_COLUMNS = ("program", "design", "nvm", "ckpt", "cycles", "active_cycles",
                 "speedup_vs_nocache", "boundary_stall_cycles", "load_hits",
                 "load_misses", "energy_core_frac", "energy_cache_frac",
                 "energy_nvm_frac", "ilp_efficiency_pct", "outages",
                 "recoveries", "final_nvm_digest")


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="replaycache",
                                description="region-forming compiler and "
                                            "intermittent-power cache simulator")
    p.add_argument("--config", help="JSON file overriding simulator constants")
    p.add_argument("--seed", type=int, default=0)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile virtual-register assembly")
    c.add_argument("input")
    c.add_argument("-o", "--output", help="compiled assembly path (default stdout)")
    c.add_argument("--emit-metadata", help="write recovery metadata to this path")
    c.add_argument("--k-phys", type=int, default=16)
    c.add_argument("--no-merge-cuts", action="store_true")
    c.add_argument("--ckpt", choices=("nvp", "quickrecall"), default="nvp")

    r = sub.add_parser("run", help="simulate a compiled program")
    r.add_argument("program")
    r.add_argument("--metadata")
    r.add_argument("--design", choices=PUBLIC_DESIGNS, default="replaycache")
    r.add_argument("--nvm", choices=NVM_TECHS, default="reram")
    r.add_argument("--cache-size", type=int)
    r.add_argument("--ways", type=int)
    r.add_argument("--trace", help="voltage trace CSV")
    r.add_argument("--outage-at", help="comma-separated forced outage cycles")
    r.add_argument("--ckpt", choices=("nvp", "quickrecall"), default="nvp")
    r.add_argument("--thresholds", choices=tuple(THRESHOLD_PRESETS), default="nvp")
    r.add_argument("--report", help="write the run report JSON here")

    v = sub.add_parser("verify", help="static store-integrity verification")
    v.add_argument("program")

    f = sub.add_parser("fuzz", help="crash-injection differential sweep")
    f.add_argument("program")
    f.add_argument("--metadata", required=True)
    f.add_argument("--design", choices=PUBLIC_DESIGNS, default="replaycache")
    f.add_argument("--nvm", choices=NVM_TECHS, default="reram")
    f.add_argument("--ckpt", choices=("nvp", "quickrecall"), default="nvp")
    g = f.add_mutually_exclusive_group()
    g.add_argument("--every-cycle", action="store_true", default=True)
    g.add_argument("--sample", type=int)
    f.add_argument("--report", help="write the sweep report JSON here")

    b = sub.add_parser("bench", help="design-comparison matrix over a corpus")
    b.add_argument("corpus", help="directory of .rasm sources")
    b.add_argument("--designs", default=",".join(PUBLIC_DESIGNS))
    b.add_argument("--nvms", default=",".join(NVM_TECHS))
    b.add_argument("--ckpt", choices=("nvp", "quickrecall"), default="nvp")
    b.add_argument("--trace", help="voltage trace applied to every run")
    b.add_argument("--out", help="CSV output path (default stdout)")

    s = sub.add_parser("stats", help="static region statistics")
    s.add_argument("program")
    s.add_argument("--metadata", required=True)

    i = sub.add_parser("ilp", help="store-ILP efficiency of a run report")
    i.add_argument("report")
    i.add_argument("--c-cycles", type=int, default=31,
                   help="store persist latency C (default: ReRAM's 31)")
    return p


def _load_cfg(args) -> SimConfig:
    return load_config(args.config) if args.config else SimConfig()


def _load_compiled(path: str, meta_path: str | None):
    with open(path) as fh:
        prog = linearize(parse_assembly(fh.read()))
    meta = None
    if meta_path:
        with open(meta_path) as fh:
            meta = RecoveryMetadata.from_json(fh.read())
    return prog, meta


def _events_for(args, cfg: SimConfig, variant: str) -> list[PowerEvent]:
    if getattr(args, "outage_at", None):
        cycles = [int(x) for x in args.outage_at.split(",") if x]
        return forced_outage_events(cycles, cfg.recharge_cycles)
    if getattr(args, "trace", None):
        trace = load_trace(args.trace)
        thresholds = THRESHOLD_PRESETS[getattr(args, "thresholds", "nvp")]
        events, diags = schedule_events(trace, thresholds, cfg.cycles_per_ns)
        for d in diags:
            print(f"warning: uncheckpointed outage window at t={d.t_off_ns:.0f}ns",
                  file=sys.stderr)
        return events
    return []


def _write(text: str, path: str | None):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_compile(args, cfg: SimConfig) -> int:
    with open(args.input) as fh:
        source = fh.read()
    opts = CompileOptions(k_phys=args.k_phys,
                          cut_at_merges=not args.no_merge_cuts,
                          variant=args.ckpt)
    unit = compile_program(source, opts, cfg)
    _write(print_assembly(unit.program), args.output)
    if args.emit_metadata:
        _write(unit.metadata.to_json() + "\n", args.emit_metadata)
    return 0


def cmd_run(args, cfg: SimConfig) -> int:
    if args.cache_size or args.ways:
        from dataclasses import replace
        cfg = replace(cfg, cache_size=args.cache_size or cfg.cache_size,
                      ways=args.ways or cfg.ways)
    prog, meta = _load_compiled(args.program, args.metadata)
    events = _events_for(args, cfg, args.ckpt)
    report = run_design(prog, args.design, cfg.timing(args.nvm), events,
                        cfg, meta, args.ckpt)
    text = report.to_json() + "\n"
    _write(text, args.report)
    if args.report:
        print(f"{args.design}/{args.nvm}: {report.cycles} cycles, "
              f"{report.outages} outages, digest {report.final_nvm_digest[:16]}")
    return 0


def cmd_verify(args, cfg: SimConfig) -> int:
    prog, _ = _load_compiled(args.program, None)
    problems = validate(prog) + verify_store_integrity(prog)
    for p in problems:
        print(f"pc {p.pc}: {p.rule} {p.detail}".rstrip())
    print(f"{len(problems)} violation(s)")
    return 1 if problems else 0


def cmd_fuzz(args, cfg: SimConfig) -> int:
    prog, meta = _load_compiled(args.program, args.metadata)
    sample = args.sample if args.sample else None
    sweep = exhaustive_crash_sweep(prog, meta, args.design, cfg.timing(args.nvm),
                                   cfg, args.ckpt, sample=sample, seed=args.seed)
    doc = {
        "design": sweep.design,
        "ckpt_variant": sweep.ckpt_variant,
        "golden_cycles": sweep.golden_cycles,
        "injections": len(sweep.injection_cycles),
        "mismatching_cycles": sweep.mismatching_cycles,
        "recoveries": sweep.recoveries,
    }
    _write(json.dumps(doc, sort_keys=True, indent=1) + "\n", args.report)
    if args.report:
        print(f"{len(sweep.injection_cycles)} injections, "
              f"{len(sweep.mismatching_cycles)} mismatches")
    return 0 if sweep.ok else 1


def cmd_bench(args, cfg: SimConfig) -> int:
    designs = [d for d in args.designs.split(",") if d]
    nvms = [n for n in args.nvms.split(",") if n]
    sources = sorted(f for f in os.listdir(args.corpus) if f.endswith(".rasm"))
    if not sources:
        print("no .rasm sources in corpus directory", file=sys.stderr)
        return 2
    rows = []
    for name in sources:
        with open(os.path.join(args.corpus, name)) as fh:
            unit = compile_program(fh.read(), CompileOptions(variant=args.ckpt), cfg)
        for nvm in nvms:
            timing = cfg.timing(nvm)
            baseline = None
            reports = {}
            for design in designs:
                events = _events_for(args, cfg, args.ckpt)
                meta = unit.metadata if design == "replaycache" else None
                reports[design] = run_design(unit.program, design, timing, events,
                                             cfg, meta, args.ckpt)
            base_cycles = reports.get("nocache")
            for design in designs:
                rep = reports[design]
                total_e = (rep.energy_core_pj + rep.energy_cache_pj +
                           rep.energy_nvm_pj) or 1.0
                try:
                    ilp = f"{compute_ilp_efficiency(rep, timing.write_persist_cycles):.4f}" \
                        if design == "replaycache" else ""
                except NoStores:
                    ilp = ""
                speedup = (f"{base_cycles.cycles / rep.cycles:.6f}"
                           if base_cycles and rep.cycles else "")
                rows.append({
                    "program": name, "design": design, "nvm": nvm,
                    "ckpt": args.ckpt, "cycles": rep.cycles,
                    "active_cycles": rep.active_cycles,
                    "speedup_vs_nocache": speedup,
                    "boundary_stall_cycles": rep.boundary_stall_cycles,
                    "load_hits": rep.load_hits, "load_misses": rep.load_misses,
                    "energy_core_frac": f"{rep.energy_core_pj / total_e:.6f}",
                    "energy_cache_frac": f"{rep.energy_cache_pj / total_e:.6f}",
                    "energy_nvm_frac": f"{rep.energy_nvm_pj / total_e:.6f}",
                    "ilp_efficiency_pct": ilp,
                    "outages": rep.outages, "recoveries": rep.recoveries,
                    "final_nvm_digest": rep.final_nvm_digest,
                })
    rows.sort(key=lambda row: (row["program"], row["design"], row["nvm"]))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    _write(buf.getvalue(), args.out)
    return 0


def cmd_stats(args, cfg: SimConfig) -> int:
    prog, meta = _load_compiled(args.program, args.metadata)
    st = region_stats(prog, meta)
    dist = st.mean_last_store_distance
    print(f"regions: {st.region_count}")
    print(f"mean instructions per region: {st.mean_instrs:.2f}")
    print(f"mean stores per region: {st.mean_stores:.2f}")
    print("mean last-store-to-boundary distance: "
          + (f"{dist:.2f}" if dist is not None else "n/a"))
    print(f"binary size overhead: {st.size_overhead_pct:.2f}%"
          f" (recovery {st.recovery_code_bytes} B, metadata {st.metadata_bytes} B,"
          f" app {st.app_code_bytes} B)")
    return 0


def cmd_ilp(args, cfg: SimConfig) -> int:
    with open(args.report) as fh:
        report = RunReport.from_json(fh.read())
    try:
        eff = compute_ilp_efficiency(report, args.c_cycles)
    except NoStores:
        print("n/a (no stores)")
        return 0
    print(f"{eff:.6f}")
    return 0


_COMMANDS = {
    "compile": cmd_compile,
    "run": cmd_run,
    "verify": cmd_verify,
    "fuzz": cmd_fuzz,
    "bench": cmd_bench,
    "stats": cmd_stats,
    "ilp": cmd_ilp,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_cfg(args)
        return _COMMANDS[args.command](args, cfg)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
