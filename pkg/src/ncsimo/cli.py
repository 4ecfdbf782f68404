"""Command-line entry point: ``ncsimo simulate | verify | figure | complexity``.

Exit status: 0 on success, 1 when a self-check fails, 2 for a bad spec or
bad arguments.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .figures import FIGURES, complexity_specs, figure_specs
from .harness import ExperimentSpec, SpecError, emit_csv, run, verify, worker_count

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _git_stamp() -> str | None:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5, check=True,
        )
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None


def _parse_override(item: str):
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise SpecError(f"override must look like key=value, got {item!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _write_outputs(specs, rows, out: Path, workers: int, elapsed: float, record_timing: bool):
    out.parent.mkdir(parents=True, exist_ok=True)
    emit_csv(rows, out, record_timing=record_timing)
    manifest = {
        "csv": out.name,
        "csv_sha256": hashlib.sha256(out.read_bytes()).hexdigest(),
        "specs": [s.to_dict() for s in specs],
        "package_version": __version__,
        "git_commit": _git_stamp(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "workers": workers,
        "wall_time_s": elapsed,
        "point_wall_time_s": [r.wall_time_s for r in rows],
    }
    man = out.with_suffix(out.suffix + ".manifest.json")
    man.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return man


def _run_specs(specs, workers):
    rows = []
    t0 = time.perf_counter()
    for spec in specs:
        rows.extend(run(spec, workers))
    return rows, time.perf_counter() - t0


def _print_rows(rows):
    print(f"{'detector':<15}{'N':>6}{'T':>4}{'snr_db':>8}{'ser':>12}{'visited':>12}")
    for r in rows:
        print(f"{r.detector:<15}{r.N:>6}{r.T:>4}{r.snr_db:>8.2f}{r.ser:>12.4g}{r.mean_visited:>12.4g}")


def cmd_simulate(args) -> int:
    overrides = dict(_parse_override(s) for s in args.set or [])
    spec = ExperimentSpec.from_file(args.spec_file, overrides)
    workers = worker_count(args.workers)
    rows, elapsed = _run_specs([spec], workers)
    out = Path(args.out) if args.out else Path(f"{spec.name}.csv")
    man = _write_outputs([spec], rows, out, workers, elapsed, args.record_timing)
    print(f"wrote {out} and {man}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify("full" if args.full else "quick", inject_fault=args.inject_fault)
    ok = True
    for r in results:
        ok &= r.passed
        status = "PASS" if r.passed else "FAIL"
        extra = f" ({r.detail})" if r.detail else ""
        print(f"{status}  {r.name:<28} measured={r.measured:.6g} threshold={r.threshold:.6g}{extra}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_figure(args) -> int:
    try:
        specs = figure_specs(args.figure, args.trials)
    except KeyError as exc:
        raise SpecError(str(exc.args[0])) from None
    workers = worker_count(args.workers)
    print(FIGURES[args.figure][0])
    rows, elapsed = _run_specs(specs, workers)
    out = Path(args.out_dir) / f"{args.figure}.csv"
    _write_outputs(specs, rows, out, workers, elapsed, args.record_timing)
    _print_rows(rows)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_complexity(args) -> int:
    specs = complexity_specs(
        n_values=args.n, snr_db=args.snr, t_coh=args.t, constellation=args.constellation,
        trials=args.trials, seed=args.seed,
    )
    workers = worker_count(args.workers)
    rows, elapsed = _run_specs(specs, workers)
    _print_rows(rows)
    if args.out:
        out = Path(args.out)
        _write_outputs(specs, rows, out, workers, elapsed, args.record_timing)
        print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncsimo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: $NCSIMO_WORKERS or 1)")
        sp.add_argument("--record-timing", action="store_true",
                        help="write measured wall times into the CSV (breaks byte-reproducibility)")

    sp = sub.add_parser("simulate", help="run one JSON experiment spec")
    sp.add_argument("spec_file")
    sp.add_argument("--out", help="CSV path (default: <name>.csv)")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override a spec field; VALUE is parsed as JSON when possible")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", help="self-validation against closed-form oracles")
    sp.add_argument("--full", action="store_true", help="larger samples plus brute-force bound checks")
    sp.add_argument("--inject-fault", type=float, default=0.0, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("figure", help="run a bundled figure experiment")
    sp.add_argument("figure", choices=sorted(FIGURES))
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--out-dir", default=".")
    common(sp)
    sp.set_defaults(func=cmd_figure)

    sp = sub.add_parser("complexity", help="visited-node sweep over N")
    sp.add_argument("--n", type=int, nargs="+", default=[10, 50, 100, 500])
    sp.add_argument("--snr", type=float, default=-4.0)
    sp.add_argument("--t", type=int, default=20)
    sp.add_argument("--constellation", default="qpsk")
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--seed", type=int, default=1)
    sp.add_argument("--out", default=None)
    common(sp)
    sp.set_defaults(func=cmd_complexity)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
