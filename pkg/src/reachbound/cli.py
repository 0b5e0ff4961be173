"""Command-line front end.

Subcommands:
  verify  compute a guaranteed probability enclosure for a model file
  mc      Chernoff-sized Monte Carlo estimate (statistical cross-check)
  bench   run the bundled thermostat benchmark rows and print a table

The decision engine is built in: there are no pass-through options to an
external reachability backend.  Reachability depth is set with -k, decision
precision with --delta, and ODE enclosure controls with --ode-order and
--ode-step (see README for the full flag reference).

Exit codes: 0 = precision target met, 2 = sound-but-incomplete result
(timeout or resolution floor), 1 = usage or input error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from . import corpus, montecarlo, pdrh, solver
from .reach import DEFAULT_OPTIONS

log = logging.getLogger("reachbound.cli")


@dataclasses.dataclass
class RunRecord:
    model_path: str
    mode: str                       # "verify" | "mc"
    config: dict
    events: list[solver.ProgressEvent]
    result: dict
    wall_time: float


# -- exact-float JSON ----------------------------------------------------------


def _jnum(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")  # round-trip exact for doubles


def _jval(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (bool, int, float)):
        return _jnum(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_jval(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_jval(x)}" for k, x in v.items()) + "}"
    raise TypeError(f"cannot serialize {type(v)!r}")


def emit_json(record: RunRecord, epsilon: float, path: str) -> None:
    """Write the progress stream and final result in the viewer schema."""
    doc = {
        "model": record.model_path,
        "epsilon": epsilon,
        "events": [
            {
                "elapsed_s": e.elapsed_seconds,
                "p_lower": e.p_lower,
                "p_upper": e.p_upper,
                "cells_done": e.cells_done,
                "cells_pending": e.cells_pending,
            }
            for e in record.events
        ],
        "result": record.result,
    }
    Path(path).write_text(_jval(doc) + "\n")


# -- argument parsing -----------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="reachbound",
        description="Guaranteed probability enclosures for reachability in "
                    "hybrid systems with a random initial parameter.",
    )
    p.add_argument("--version", action="version", version=f"reachbound {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="compute a verified probability enclosure")
    v.add_argument("model", help="PDRH model file")
    v.add_argument("-e", type=float, default=0.001, metavar="REAL",
                   help="target width of the probability interval (default 0.001)")
    v.add_argument("-t", type=int, default=1, metavar="INT",
                   help="number of worker threads (default 1)")
    v.add_argument("-k", type=int, default=0, metavar="INT",
                   help="reachability depth: maximum number of jumps (default 0)")
    v.add_argument("--delta", type=float, default=1e-3, metavar="REAL",
                   help="decision precision for the reachability checks (default 1e-3)")
    v.add_argument("--ode-order", type=int, default=DEFAULT_OPTIONS.taylor_order, metavar="INT",
                   help=f"Taylor order of the ODE enclosures (default {DEFAULT_OPTIONS.taylor_order})")
    v.add_argument("--ode-step", type=float, default=DEFAULT_OPTIONS.max_step, metavar="REAL",
                   help=f"maximum ODE enclosure step (default {DEFAULT_OPTIONS.max_step})")
    v.add_argument("--tsplit", type=float, default=0.5, metavar="REAL",
                   help="precision split between tail and integration, in (0,1) (default 0.5)")
    v.add_argument("--timeout", type=float, default=None, metavar="SEC",
                   help="wall-clock budget; on expiry the sound partial result is reported")
    v.add_argument("--min-cell-width", type=float, default=None, metavar="REAL",
                   help="bisection floor for parameter cells (default: auto)")
    v.add_argument("--idle-split", action="store_true",
                   help="pre-bisect pending cells to keep all workers busy "
                        "(changes the refinement tree; results remain sound)")
    v.add_argument("--json", dest="json_path", metavar="PATH",
                   help="write the progress stream and result to a JSON file")
    v.add_argument("--verbose", action="store_true")

    m = sub.add_parser("mc", help="Chernoff-sized Monte Carlo estimate")
    m.add_argument("model", help="PDRH model file")
    m.add_argument("--zeta", type=float, required=True, help="confidence-interval half-width")
    m.add_argument("--conf", type=float, required=True, help="coverage probability")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--step", type=float, default=1e-3, help="simulation step (default 1e-3)")
    m.add_argument("--max-samples", type=int, default=20_000_000)
    m.add_argument("-k", type=int, default=0, metavar="INT", help="jump depth (default 0)")
    m.add_argument("--json", dest="json_path", metavar="PATH")
    m.add_argument("--verbose", action="store_true")

    b = sub.add_parser("bench", help="run bundled benchmark rows")
    b.add_argument("--rows", default="T2(0.6),T2(1.8),T2(2.4)",
                   help="comma-separated scenario labels (default: the T2 rows)")
    b.add_argument("-e", type=float, default=1e-4, help="target width (default 1e-4)")
    b.add_argument("-t", type=int, default=1, help="worker threads")
    b.add_argument("--timeout", type=float, default=None, help="per-row wall-clock budget")
    b.add_argument("--verbose", action="store_true")
    return p


def _load_model(path: str) -> pdrh.HybridModel:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise SystemExit(f"error: cannot read {path}: {err}") from err
    return pdrh.parse(text)


def _cmd_verify(args) -> int:
    model = _load_model(args.model)
    cfg = solver.SolverConfig(
        epsilon=args.e, t_split=args.tsplit, k=args.k, delta=args.delta,
        workers=args.t, timeout=args.timeout, min_cell_width=args.min_cell_width,
        idle_split=args.idle_split,
        reach=dataclasses.replace(DEFAULT_OPTIONS, taylor_order=args.ode_order,
                                  max_step=args.ode_step),
    )
    events: list[solver.ProgressEvent] = []

    def on_progress(e: solver.ProgressEvent):
        events.append(e)
        if args.verbose:
            print(f"  [{e.elapsed_seconds:8.2f}s] P in [{e.p_lower:.12g}, {e.p_upper:.12g}] "
                  f"done={e.cells_done} pending={e.cells_pending}")

    t0 = time.monotonic()
    enc = solver.solve(model, cfg, progress=on_progress)
    wall = time.monotonic() - t0
    rep = enc.reported
    record = RunRecord(
        model_path=args.model, mode="verify",
        config={"epsilon": args.e, "k": args.k, "delta": args.delta,
                "tsplit": args.tsplit, "workers": args.t},
        events=events,
        result={"p_lower": rep.lo, "p_upper": rep.hi, "complete": enc.complete},
        wall_time=wall,
    )
    if args.json_path:
        emit_json(record, args.e, args.json_path)
    print(f"P in [{rep.lo:.12g}, {rep.hi:.12g}]  width {rep.width():.3g}  "
          f"({'complete' if enc.complete else 'INCOMPLETE but sound'}, {wall:.1f}s)")
    if enc.stuck_cells:
        print(f"  undecided cells at resolution floor: {len(enc.stuck_cells)}")
        for c in enc.stuck_cells[:8]:
            print(f"    {c!r}")
    return 0 if enc.complete else 2


def _cmd_mc(args) -> int:
    model = _load_model(args.model)
    cfg = montecarlo.MCConfig(zeta=args.zeta, confidence=args.conf, seed=args.seed,
                              k=args.k, sim_step=args.step, max_samples=args.max_samples)
    n = montecarlo.chernoff_size(args.zeta, args.conf)
    print(f"Chernoff-Hoeffding sample size: {n:,}")
    t0 = time.monotonic()
    try:
        res = montecarlo.estimate(model, cfg)
    except montecarlo.SampleSizeError as err:
        print(f"error: {err}")
        return 1
    wall = time.monotonic() - t0
    print(f"estimate {res.p_hat:.10g}  CI [{res.ci.lo:.10g}, {res.ci.hi:.10g}]  "
          f"({res.successes:,}/{res.n_used:,} hits, {wall:.1f}s)")
    if args.json_path:
        record = RunRecord(
            model_path=args.model, mode="mc",
            config={"zeta": args.zeta, "confidence": args.conf, "seed": args.seed,
                    "k": args.k, "step": args.step},
            events=[],
            result={"p_lower": res.ci.lo, "p_upper": res.ci.hi, "complete": True},
            wall_time=wall,
        )
        emit_json(record, 2 * args.zeta, args.json_path)
    return 0


def _cmd_bench(args) -> int:
    wanted = [r.strip() for r in args.rows.split(",") if r.strip()]
    rows = []
    for spec in corpus.models():
        for sc in spec.scenarios:
            if sc.label in wanted:
                rows.append((spec, sc))
    missing = set(wanted) - {sc.label for _, sc in rows}
    if missing:
        print(f"error: unknown benchmark rows {sorted(missing)}")
        return 1
    ok = True
    print(f"{'row':10} {'k':>2} {'enclosure':>42} {'width':>9} {'oracle':>13} "
          f"{'contains':>8} {'published interval':>30} {'time':>7}")
    for spec, sc in rows:
        model = spec.model(sc)
        cfg = solver.SolverConfig(epsilon=args.e, k=sc.k, workers=args.t,
                                  timeout=args.timeout)
        t0 = time.monotonic()
        enc = solver.solve(model, cfg)
        wall = time.monotonic() - t0
        rep = enc.reported
        oracle = spec.oracle(sc) if spec.oracle else None
        contains = rep.contains(oracle) if oracle is not None else None
        exp = f"[{sc.expected[0]:.10g}, {sc.expected[1]:.10g}]" if sc.expected else "-"
        print(f"{sc.label:10} {sc.k:>2} [{rep.lo:.12g}, {rep.hi:.12g}] "
              f"{rep.width():9.3g} {oracle if oracle is not None else float('nan'):13.8g} "
              f"{str(contains):>8} {exp:>30} {wall:6.1f}s")
        ok = ok and enc.complete and (contains is not False)
    return 0 if ok else 2


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "mc":
            return _cmd_mc(args)
        return _cmd_bench(args)
    except (pdrh.ParseError, pdrh.ModelError, solver.SolverError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
