"""Command line: run a scenario or sweep it over seeds.

    byblos run <config> [--seed N] [--trace-out PATH] [--report-out PATH] [--strict-prefix]
    byblos sweep <config> --seeds A..B [--jobs N] [--strict-prefix]
    byblos scenarios

``<config>`` is a TOML file or the name of a bundled scenario. When
``BYBLOS_OUT_DIR`` is set, relative output paths are placed under it, and
``run`` writes ``<name>-<seed>.trace`` and ``<name>-<seed>.report.json``
there by default.

Exit status: 0 when every gated property passes, 1 when one fails, 2 for a
bad configuration or command line.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from . import checker, netsim
from .config import ConfigError, load_config

OUT_DIR_ENV = "BYBLOS_OUT_DIR"

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


def bundled_scenarios() -> dict:
    root = resources.files("byblos") / "scenarios"
    return {p.name[:-5]: p for p in root.iterdir() if p.name.endswith(".toml")}


def resolve_config(spec: str) -> Path:
    p = Path(spec)
    if p.exists():
        return p
    bundled = bundled_scenarios()
    name = spec[:-5] if spec.endswith(".toml") else spec
    if name in bundled:
        return Path(str(bundled[name]))
    raise ConfigError(spec, "no such file or bundled scenario")


def out_path(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    base = os.environ.get(OUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def parse_seeds(text: str) -> range:
    a, sep, b = text.partition("..")
    try:
        if not sep:
            return range(int(a), int(a) + 1)
        lo, hi = int(a), int(b)
    except ValueError:
        raise ConfigError("--seeds", f"expected A..B, got {text!r}") from None
    if hi < lo:
        raise ConfigError("--seeds", "empty range")
    return range(lo, hi + 1)  # inclusive


def execute(path: Path, seed: int | None, strict_prefix: bool):
    cfg = load_config(path, seed=seed)
    if strict_prefix:
        cfg.strict_prefix = True
    trace = netsim.run(cfg)
    rep = checker.report(trace, strict_prefix=cfg.strict_prefix)
    return cfg, trace, rep


def write_report(rep, path: Path) -> None:
    if path.suffix == ".json":
        path.write_text(json.dumps(rep.to_json(), indent=2, sort_keys=True) + "\n")
    else:
        path.write_text(rep.render())


def cmd_run(args) -> int:
    path = resolve_config(args.config)
    cfg, trace, rep = execute(path, args.seed, args.strict_prefix)
    stem = f"{cfg.name}-{cfg.seed}"
    trace_out = args.trace_out or (f"{stem}.trace" if os.environ.get(OUT_DIR_ENV) else None)
    report_out = args.report_out or (f"{stem}.report.json" if os.environ.get(OUT_DIR_ENV) else None)
    if trace_out:
        trace.write(out_path(trace_out))
    if report_out:
        write_report(rep, out_path(report_out))
    sys.stdout.write(rep.render())
    return EXIT_OK if rep.passed else EXIT_FAIL


def _sweep_one(job):
    path, seed, strict = job
    _, _, rep = execute(Path(path), seed, strict)
    failed = [v.line() for v in rep.verdicts if v.status == checker.FAIL
              and (strict or v.name != "prefix_strict")]
    lat = checker.summarize_latency(rep.latency)
    return seed, rep.passed, rep.status, failed, lat.get("max_rtt")


def cmd_sweep(args) -> int:
    path = resolve_config(args.config)
    seeds = parse_seeds(args.seeds)
    load_config(path)  # fail fast on a bad file
    jobs = [(str(path), s, args.strict_prefix) for s in seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    bad = 0
    for seed, passed, status, failed, max_rtt in results:
        rtt = f"{max_rtt:.2f}" if max_rtt is not None else "-"
        print(f"seed {seed} {'PASS' if passed else 'FAIL'} {status} max_rtt {rtt}")
        for line in failed:
            print(f"  {line}")
        if not passed:
            bad += 1
            print(f"  reproduce: byblos run {args.config} --seed {seed}")
    print(f"SWEEP {len(results) - bad}/{len(results)} passed")
    return EXIT_OK if bad == 0 else EXIT_FAIL


def cmd_scenarios(args) -> int:
    for name in sorted(bundled_scenarios()):
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="byblos", description="Byblos scenario runner")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario and check it")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--trace-out")
    r.add_argument("--report-out", help="'.json' for machine-readable, text otherwise")
    r.add_argument("--strict-prefix", action="store_true",
                   help="also gate on every pair of logs being prefix-related")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a scenario over a range of seeds")
    s.add_argument("config")
    s.add_argument("--seeds", required=True, help="inclusive range A..B")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--strict-prefix", action="store_true")
    s.set_defaults(func=cmd_sweep)

    ls = sub.add_parser("scenarios", help="list bundled scenarios")
    ls.set_defaults(func=cmd_scenarios)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
