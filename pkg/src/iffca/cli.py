"""Command-line front end.

Exit codes: 0 ok, 1 every run censored, 2 invalid input. Machine-readable
summaries go to stdout as single JSON lines; progress goes to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import batch, output
from .engine import run
from .fields import FieldError, build_static_field
from .metrics import BatchStats
from .params import ConflictRule
from .scenario import Scenario, ScenarioError, load_scenario

log = logging.getLogger("iffca")

EMITS = ("times", "freq", "heatmap", "fields", "ascii-frames")

# flag -> Params attribute
OVERRIDES = {"r": ("r", int), "kS": ("k_s", float), "kD": ("k_d", float), "kI": ("k_i", float),
             "mu": ("mu", float), "delta": ("delta", float), "alpha": ("alpha", float)}


class UsageError(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    for flag, (_, typ) in OVERRIDES.items():
        p.add_argument(f"--{flag}", type=typ, default=None)
    p.add_argument("--conflict-rule", choices=[c.value for c in ConflictRule], default=None)
    p.add_argument("--max-steps", type=int, default=None)


def _load(path: str, args) -> Scenario:
    scen = load_scenario(path)
    changes = {attr: getattr(args, flag) for flag, (attr, _) in OVERRIDES.items()
               if getattr(args, flag) is not None}
    if args.conflict_rule:
        changes["conflict_rule"] = ConflictRule(args.conflict_rule)
    try:
        scen = scen.with_params(**changes)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if args.max_steps is not None:
        scen = Scenario(scen.grid, scen.placement, scen.params, args.max_steps, scen.description)
    build_static_field(scen.grid)  # surfaces unreachable cells as input errors
    return scen


def _emits(text: str | None) -> set[str]:
    if not text:
        return set()
    chosen = {e.strip() for e in text.split(",") if e.strip()}
    bad = chosen - set(EMITS)
    if bad:
        raise UsageError(f"unknown --emit value(s): {', '.join(sorted(bad))}")
    return chosen


def _params_json(scen: Scenario) -> dict:
    return scen.params.to_dict()


def cmd_run(args) -> int:
    scen = _load(args.scenario, args)
    seeds = batch.parse_seeds(args.seeds)
    emits = _emits(args.emit)
    out = Path(args.out) if args.out else None
    if emits and out is None:
        raise UsageError("--emit needs --out")
    if out:
        out.mkdir(parents=True, exist_ok=True)

    log.info("running %d seeds of %s", len(seeds), args.scenario)
    if "ascii-frames" in emits:
        sfield = build_static_field(scen.grid)
        runs = []
        for s in seeds:
            frames = []
            runs.append(run(scen, s, sfield, on_step=lambda st: frames.append(output.ascii_frame(st))))
            (out / f"frames_seed{s}.txt").write_text("\n\n".join(frames) + "\n")
    else:
        runs = batch.run_batch(scen, seeds, args.workers)
    stats = BatchStats.from_runs(runs, scen.grid.shape)

    if "times" in emits:
        output.write_times_csv(out / "times.csv", [r.t_total for r in runs if not r.censored])
    if "freq" in emits:
        output.write_freq_csv(out / "freq.csv", output.freq_rows(stats, scen.params.k_s, scen.params.r))
    if "heatmap" in emits:
        output.write_matrix_csv(out / "heatmap.csv", stats.heatmap)
        output.write_pgm(out / "heatmap.pgm", stats.heatmap)
    if "fields" in emits:
        _write_fields(out, scen, runs[0].final_trace)

    summary = {"scenario": args.scenario, "seeds": [seeds[0], seeds[-1]],
               "params": _params_json(scen), **stats.summary()}
    print(json.dumps(summary))
    return 1 if stats.censored_count == len(runs) else 0


def _write_fields(out: Path, scen: Scenario, trace) -> None:
    sfield = build_static_field(scen.grid)
    output.write_matrix_csv(out / "S.csv", sfield.S)
    output.write_pgm(out / "S.pgm", sfield.S)
    output.write_matrix_csv(out / "D.csv", trace)
    output.write_pgm(out / "D.pgm", trace)


def _parse_grid(items: list[str]) -> dict[str, list]:
    grid = {}
    for item in items:
        name, _, values = item.partition("=")
        if name not in OVERRIDES or not values:
            raise UsageError(f"bad --grid entry {item!r}; expected e.g. kS=1,2,4")
        attr, typ = OVERRIDES[name]
        grid[attr] = [typ(v) for v in values.split(",")]
    if not grid:
        raise UsageError("sweep needs at least one --grid entry")
    return grid


SWEEP_COLUMNS = ("scenario", "kS", "kD", "kI", "mu", "delta", "alpha", "r",
                 "T_mo", "T_mean", "censored", "runs")


def cmd_sweep(args) -> int:
    grid = _parse_grid(args.grid)
    seeds = batch.parse_seeds(args.seeds)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    all_censored = True
    n_rows = 0
    for path in args.scenario:
        scen = _load(path, args)
        for point, stats in batch.sweep(scen, grid, seeds, args.workers):
            p = scen.params.replace(**point)
            writer.writerow({"scenario": Path(path).stem, "kS": p.k_s, "kD": p.k_d, "kI": p.k_i,
                             "mu": p.mu, "delta": p.delta, "alpha": p.alpha, "r": p.r,
                             "T_mo": stats.t_mo if stats.histogram else "",
                             "T_mean": f"{stats.mean_time:.3f}" if stats.histogram else "",
                             "censored": stats.censored_count, "runs": stats.n_runs})
            all_censored &= stats.censored_count == stats.n_runs
            n_rows += 1
    if args.out:
        target = Path(args.out)
        if target.is_dir() or not target.suffix:
            target.mkdir(parents=True, exist_ok=True)
            target = target / "sweep.csv"
        target.write_text(buf.getvalue())
        print(json.dumps({"rows": n_rows, "csv": str(target)}))
    else:
        sys.stdout.write(buf.getvalue())
    return 1 if all_censored else 0


def cmd_render(args) -> int:
    scen = _load(args.scenario, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sfield = build_static_field(scen.grid)
    frames = []

    def keep(state):
        if state.step <= args.steps:
            frames[:] = [output.ascii_frame(state), state.D.copy()]

    capped = Scenario(scen.grid, scen.placement, scen.params, max(args.steps, 1), scen.description)
    run(capped, args.seed, sfield, on_step=keep)
    _write_fields(out, scen, frames[1])
    output.write_matrix_csv(out / "d.csv", sfield.d)
    (out / "room.txt").write_text(frames[0] + "\n")
    print(json.dumps({"out": str(out), "S_max": sfield.S_max, "step": args.steps}))
    return 0


def cmd_validate(args) -> int:
    scen = _load(args.scenario, args)
    sfield = build_static_field(scen.grid)
    print(json.dumps({"valid": True, "width": scen.grid.width, "height": scen.grid.height,
                      "exits": scen.grid.exits.tolist(), "pedestrians": scen.n_pedestrians,
                      "density": round(scen.density, 4), "S_max": sfield.S_max,
                      "params": _params_json(scen), "max_steps": scen.max_steps}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iffca", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a seed range and summarise it")
    _add_common(p)
    p.add_argument("--seeds", required=True, help="A..B (inclusive) or comma list")
    p.add_argument("--out", help="directory for emitted artifacts")
    p.add_argument("--emit", help=f"comma list of {', '.join(EMITS)}")
    p.add_argument("--workers", type=int, default=None, help=f"worker processes (env {batch.THREADS_ENV})")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="one batch per parameter-grid point")
    p.add_argument("--scenario", action="append", required=True,
                   help="scenario file or bundled name (repeatable)")
    for flag, (_, typ) in OVERRIDES.items():
        p.add_argument(f"--{flag}", type=typ, default=None)
    p.add_argument("--conflict-rule", choices=[c.value for c in ConflictRule], default=None)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--grid", action="append", default=[], help="e.g. kS=1,2,4 (repeatable)")
    p.add_argument("--seeds", required=True)
    p.add_argument("--out", help="CSV path or directory (default: stdout)")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("render", help="dump S, d and D (after --steps) as CSV/PGM")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=0)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("validate", help="check a scenario file")
    _add_common(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ScenarioError, FieldError, UsageError, FileNotFoundError, ValueError) as e:
        print(f"iffca: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
