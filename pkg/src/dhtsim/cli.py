"""Command-line entry point: ``dhtsim {run,validate,compare,sweep,replay-audit}``.

Exit codes: 0 success, 1 invariant violation / audit mismatch / ERROR
findings, 2 usage or parse errors.  The output root defaults to
``$DHTSIM_OUT`` (or ``./runs``).
"""

from __future__ import annotations

import argparse
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .audit import replay_audit
from .io import ScenarioFileError, bundled_names, load_scenario, read_trace, run_dir_name, write_trace
from .scenario import ALGORITHMS, RULES
from .simulator import InvariantViolation, ScenarioRejected, compare, run, validate

log = logging.getLogger("dhtsim")

OVERRIDES = ("algorithm", "rule", "sigma", "f", "horizon", "tau")
SWEEPABLE = ("sigma", "f", "tau")


class UsageError(Exception):
    pass


# --- argument helpers ----------------------------------------------------

def parse_seeds(text: str) -> list[int]:
    """``7`` | ``0:20`` (half-open) | ``1,4,9`` | a mix: ``0:3,10``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            a, b = part.split(":", 1)
            lo, hi = int(a), int(b)
            if hi <= lo:
                raise argparse.ArgumentTypeError(f"empty seed range {part!r}")
            out.extend(range(lo, hi))
        elif part:
            out.append(int(part))
    if not out or any(s < 0 for s in out):
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}")
    return out


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _tau(text):
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {text}")
    return v


def _add_overrides(p: argparse.ArgumentParser):
    g = p.add_argument_group("scenario overrides")
    g.add_argument("--algorithm", choices=ALGORITHMS, help="sdht or adht")
    g.add_argument("--rule", choices=RULES, help="fusion rule: min or avg")
    g.add_argument("--sigma", type=_positive_float, help="sensor noise standard deviation")
    g.add_argument("--f", type=_nonneg_int, help="bound on bad neighbors")
    g.add_argument("--horizon", type=_nonneg_int, help="number of steps")
    g.add_argument("--tau", type=_tau, help="convergence threshold on b^a(theta*)")


def _add_seeds(p: argparse.ArgumentParser, default=None):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--seed", type=_nonneg_int, help="a single seed (default: the scenario's)")
    g.add_argument("--seeds", type=parse_seeds, default=default,
                   help="seed list: 7, 0:20 (half-open), 1,4,9 or a mix")


def _add_out(p: argparse.ArgumentParser):
    p.add_argument("--out", type=Path, default=None,
                   help="output root (default: $DHTSIM_OUT or ./runs)")


def _out_root(args) -> Path:
    return args.out or Path(os.environ.get("DHTSIM_OUT", "runs"))


def _overrides(args) -> dict:
    return {k: getattr(args, k) for k in OVERRIDES if getattr(args, k, None) is not None}


def _seeds(args, spec) -> list[int]:
    if getattr(args, "seeds", None):
        return list(args.seeds)
    if getattr(args, "seed", None) is not None:
        return [args.seed]
    return [spec.seed]


def _load(ref, args):
    spec = load_scenario(ref)
    return spec.with_overrides(**_overrides(args)) if args is not None else spec


# --- gnuplot -------------------------------------------------------------

GNUPLOT = """\
# gnuplot {script}
set datafile separator ","
set key autotitle columnhead bottom right
set xlabel "t"
set terminal pngcairo size 900,600
set output "{stem}.png"
set multiplot layout 2,1 title "{title}"
set ylabel "mean over good agents"
set yrange [0:1.05]
plot "series.csv" using 1:2 with lines lw 2, "" using 1:3 with lines lw 2 dt 2
set ylabel "case-one updates (cumulative)"
set autoscale y
plot "series.csv" using 1:4 with steps lw 2
unset multiplot
"""


def write_gnuplot(run_dir: Path, title: str) -> Path:
    path = run_dir / "plot.gp"
    path.write_text(GNUPLOT.format(script=path.name, stem="plot", title=title), encoding="utf-8")
    return path


# --- subcommands ---------------------------------------------------------

def _run_one(spec, out_root: Path, fast: bool, gnuplot: bool):
    trace = run(spec)
    run_dir = write_trace(trace, out_root / run_dir_name(spec))
    if gnuplot:
        write_gnuplot(run_dir, f"{spec.name} seed {spec.seed} {spec.algorithm}/{spec.rule}")
    log.info("wrote %s", run_dir)
    audit = None
    if not fast and trace.full:
        report = replay_audit(trace)
        audit = "ok" if report.ok else report.summary()
    return run_dir, trace.metrics.summary(), audit


def cmd_run(args) -> int:
    base = _load(args.scenario, args)
    seeds = _seeds(args, base)
    specs = [base.with_overrides(seed=s) for s in seeds]
    out_root = _out_root(args)
    status = 0
    if args.jobs > 1 and len(specs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_run_one, specs, [out_root] * len(specs), [args.fast] * len(specs),
                                    [args.gnuplot_script] * len(specs)))
    else:
        results = [_run_one(s, out_root, args.fast, args.gnuplot_script) for s in specs]
    for spec, (run_dir, metrics, audit) in zip(specs, results):
        conv = metrics["convergence_time"]
        print(f"{run_dir}  convergence={'none' if conv is None else conv}  "
              f"case_one={metrics['case_one_total']}  mean_ab_true={metrics['final_mean_ab_true']:.6f}"
              + ("" if audit is None else f"  audit={audit}"))
        if audit not in (None, "ok"):
            status = 1
    return status


def cmd_validate(args) -> int:
    spec = _load(args.scenario, args)
    findings = validate(spec)
    for f in findings:
        print(f)
    errors = sum(f.level == "ERROR" for f in findings)
    print(f"{spec.name}: {errors} error(s), {len(findings) - errors} warning(s)")
    return 1 if errors else 0


def _labelled_specs(args):
    if args.vary and getattr(args, args.vary, None) is not None:
        raise UsageError(f"--{args.vary} conflicts with --vary {args.vary}")
    specs = [(ref, _load(ref, args)) for ref in args.scenarios]
    if args.vary:
        if len(specs) != 1:
            raise UsageError("--vary takes exactly one scenario")
        ref, spec = specs[0]
        values = ALGORITHMS if args.vary == "algorithm" else RULES
        return [(v, spec.with_overrides(**{args.vary: v})) for v in values]
    if len(specs) < 2:
        raise UsageError("compare needs two or more scenarios, or one scenario with --vary")
    labels = [spec.name for _, spec in specs]
    if len(set(labels)) < len(labels):
        labels = [f"{lab}#{k}" for k, lab in enumerate(labels)]
    return list(zip(labels, (spec for _, spec in specs)))


def _recording_runner(out_root: Path):
    def runner(spec):
        trace = run(spec)
        write_trace(trace, out_root / run_dir_name(spec))
        return trace
    return runner


def cmd_compare(args) -> int:
    labelled = _labelled_specs(args)
    seeds = _seeds(args, labelled[0][1])
    runner = _recording_runner(_out_root(args)) if args.record else None
    table = compare(labelled, seeds, runner=runner)
    text = table.format()
    print(text)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "comparison.csv").write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_sweep(args) -> int:
    base = _load(args.scenario, args)
    seeds = _seeds(args, base)
    cast = int if args.param == "f" else float
    try:
        values = [cast(v) for v in args.values.split(",")]
    except ValueError:
        raise UsageError(f"--values for {args.param} must be a comma list of numbers") from None
    runner = _recording_runner(_out_root(args)) if args.record else run
    lines = [f"{args.param},seeds,converged,median_convergence,median_case_one"]
    for v in values:
        spec = base.with_overrides(**{args.param: v})
        metrics = [runner(spec.with_overrides(seed=s)).metrics for s in seeds]
        times = [m.convergence_time for m in metrics]
        done = [t for t in times if t is not None]
        med = statistics.median([float("inf") if t is None else t for t in times])
        lines.append(f"{v},{len(seeds)},{len(done)},{'none' if med == float('inf') else f'{med:g}'},"
                     f"{statistics.median(m.case_one_total for m in metrics):g}")
    text = "\n".join(lines)
    print(text)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"sweep_{args.param}.csv").write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_replay_audit(args) -> int:
    trace = read_trace(args.run_dir)
    report = replay_audit(trace, max_ulps=args.ulps)
    print(f"{args.run_dir}: {report.summary()}")
    for m in report.mismatches[1:args.show]:
        print(f"  {m}")
    return 0 if report.ok else 1


# --- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    scen_help = "scenario file, or a bundled name: " + ", ".join(bundled_names())
    ap = argparse.ArgumentParser(prog="dhtsim", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"dhtsim {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate and write trace directories")
    p.add_argument("scenario", help=scen_help)
    _add_overrides(p)
    _add_seeds(p)
    _add_out(p)
    p.add_argument("--fast", action="store_true", help="skip the replay audit (runtime invariants stay on)")
    p.add_argument("--gnuplot-script", action="store_true", help="also write plot.gp next to the CSVs")
    p.add_argument("--jobs", type=int, default=1, help="parallel processes for seed ranges")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="static checks; exit 1 on ERROR findings")
    p.add_argument("scenario", help=scen_help)
    _add_overrides(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compare", help="paired runs over seeds, one row per seed")
    p.add_argument("scenarios", nargs="+", help=scen_help)
    p.add_argument("--vary", choices=("algorithm", "rule"), help="compare both values of this field")
    _add_overrides(p)
    _add_seeds(p)
    _add_out(p)
    p.add_argument("--record", action="store_true", help="also write every run's trace under the output root")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="median convergence over a grid of sigma, f or tau values")
    p.add_argument("scenario", help=scen_help)
    p.add_argument("--param", choices=SWEEPABLE, required=True)
    p.add_argument("--values", required=True, help="comma list, e.g. 0.5,1,2")
    _add_overrides(p)
    _add_seeds(p)
    _add_out(p)
    p.add_argument("--record", action="store_true", help="also write every run's trace under the output root")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay-audit", help="recompute a written trace and report mismatches")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--ulps", type=int, default=1, help="tolerance in units in the last place")
    p.add_argument("--show", type=int, default=10, help="mismatches to print")
    p.set_defaults(func=cmd_replay_audit)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(message)s")
    if args.command == "sweep" and getattr(args, args.param, None) is not None:
        parser.error(f"--{args.param} conflicts with --param {args.param}")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ScenarioFileError, FileNotFoundError) as exc:
        src = getattr(exc, "source", None)
        print(f"dhtsim: {src + ': ' if src else ''}{exc}", file=sys.stderr)
        return 2
    except ScenarioRejected as exc:
        for f in exc.findings:
            print(f"dhtsim: {f}", file=sys.stderr)
        return 1
    except InvariantViolation as exc:
        print(f"dhtsim: invariant violation at {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
