"""Command-line front end: ``neuralccg <subcommand> ...``.

Exit codes: 0 success, 1 solve failure, 2 bad arguments or unreadable input files.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .bench import METHODS, UnitClock, run_bench
from .ccg_classic import solve_ccg, solve_extensive_form
from .ccg_neural import ConstantSurrogate, ExactOracleSurrogate, solve_neural_ccg
from .errors import (CorruptFile, FormatVersionMismatch, IterLimit, ShapeMismatch, StaleModel,
                     SUCError)
from .formulation.backend import make_backend
from .formulation.builders import build_extensive_form
from .recourse import WORKERS_ENV, calibrate_penalties, default_workers
from .surrogate import TrainConfig, generate_dataset, load_dataset, load_model, save_dataset, save_model, train
from .system_model import (generate_scenarios, load_instance, load_scenarios, make_random_instance,
                           save_instance, save_scenarios, validate_instance)

log = logging.getLogger("neuralccg")

_INPUT_ERRORS = (FileNotFoundError, IsADirectoryError, CorruptFile, FormatVersionMismatch, StaleModel, ShapeMismatch)


class UsageError(Exception):
    pass


def _workers(args) -> int:
    return args.workers if getattr(args, "workers", None) else default_workers()


def _backend(args):
    return make_backend(args.backend, mip_rel_gap=args.mip_gap, time_limit=args.time_limit)


def _surrogate(args, instance, backend):
    if args.model:
        model = load_model(args.model)
        model.check_instance(instance)
        return model
    if args.surrogate == "oracle":
        return ExactOracleSurrogate(instance, backend, _workers(args))
    if args.surrogate == "constant":
        return ConstantSurrogate(0.0)
    raise UsageError("--method nccg needs --model PATH or --surrogate {oracle,constant}")


# --------------------------------------------------------------------------- subcommands


def cmd_gen_instance(args) -> int:
    inst = make_random_instance(args.buses, args.generators, args.horizon, seed=args.seed,
                                congestion=args.congestion)
    save_instance(inst, args.out)
    print(f"wrote {args.out} ({inst.n_gens} generators, {inst.n_buses} buses, {inst.horizon} periods, "
          f"hash {inst.digest()})")
    return 0


def cmd_gen_scenarios(args) -> int:
    inst = load_instance(args.instance)
    sc = generate_scenarios(inst.nominal_load, args.count, tuple(args.range), args.seed)
    save_scenarios(sc, args.out)
    print(f"wrote {args.out} ({len(sc)} scenarios)")
    return 0


def cmd_calibrate(args) -> int:
    inst = load_instance(args.instance)
    scen = load_scenarios(args.scenarios) if args.scenarios else None
    pen = calibrate_penalties(inst, _backend(args), scenarios=scen, floor=args.floor)
    out = args.out or args.instance
    save_instance(inst.with_penalties(pen), out)
    print(f"wrote calibrated penalties to {out} (shed max {pen.shed.max():.2f}, floor {pen.floor:.2f})")
    return 0


def cmd_gen_dataset(args) -> int:
    inst = load_instance(args.instance)
    ds = generate_dataset(inst, args.count, seed=args.seed, workers=_workers(args), backend=_backend(args),
                          variability=tuple(args.range))
    save_dataset(ds, args.out)
    print(f"wrote {args.out} ({len(ds)} samples)")
    return 0


def cmd_train(args) -> int:
    inst = load_instance(args.instance)
    ds = load_dataset(args.dataset, inst)
    cfg = TrainConfig(hidden=tuple(args.hidden), lr=args.lr, batch=args.batch, epochs=args.epochs,
                      seed=args.seed, val_fraction=args.val_fraction, patience=args.patience,
                      center=args.center, lr_decay=args.lr_decay)
    model, hist = train(ds, inst, cfg)
    save_model(model, args.out)
    best = hist.best_epoch
    print(f"wrote {args.out} (best epoch {best}, validation MAPE {hist.val_mape[best]:.3f}%)")
    return 0


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    sc = load_scenarios(args.scenarios)
    problems = validate_instance(inst, sc)
    if problems:
        raise UsageError("invalid input: " + "; ".join(problems))
    backend = _backend(args)
    if args.export_lp:
        build_extensive_form(inst, sc).write_lp(args.export_lp)
        print(f"wrote {args.export_lp}")
    if args.method == "nccg":
        sur = _surrogate(args, inst, backend)
    t0 = time.perf_counter()
    try:
        if args.method == "ef":
            sol = solve_extensive_form(inst, sc, backend)
        elif args.method == "ccg":
            eps = 1e-6 if args.eps is None else args.eps
            sol = solve_ccg(inst, sc, eps=eps, max_iter=args.max_iter, backend=backend,
                            workers=_workers(args), relative_gap=args.relative)
        else:
            sol = solve_neural_ccg(inst, sc, sur, eps=args.eps, max_iter=args.max_iter, backend=backend,
                                   evaluate_final=args.evaluate, workers=_workers(args))
    except IterLimit as exc:
        if exc.solution is not None and args.out:
            _write_solution(exc.solution, args, inst, complete=False)
        raise
    wall = time.perf_counter() - t0
    _write_solution(sol, args, inst, complete=True)
    print(f"{args.method}: objective {sol.objective!r} iterations {sol.iterations} time {wall:.3f}s")
    return 0


def _write_solution(sol, args, inst, complete: bool):
    if args.out:
        doc = sol.to_dict()
        doc.update({"format": "suc-solution/1", "instance_hash": inst.digest(), "converged": complete})
        Path(args.out).write_text(json.dumps(doc, indent=1))
    if args.trace and sol.trace is not None:
        sol.trace.to_csv(args.trace)


def _bench_options(args) -> dict:
    opts = {"methods": list(METHODS), "scenarios": [10], "draws": 1, "seed": 0, "reference": "ef",
            "eps": 1e-6, "range": [0.7, 1.0], "timing": "wall", "surrogate": "oracle", "model": None,
            "out": "bench"}
    if args.config:
        try:
            conf = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise CorruptFile(f"{args.config}: {exc}") from exc
        if not isinstance(conf, dict) or set(conf) - set(opts) - {"instance"}:
            raise UsageError(f"{args.config}: unknown keys {sorted(set(conf) - set(opts) - {'instance'})}")
        opts.update(conf)
    for key in opts:
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val
    opts["instance"] = args.instance or (conf.get("instance") if args.config else None)
    if not opts["instance"]:
        raise UsageError("bench needs --instance (or an 'instance' key in --config)")
    return opts


def cmd_bench(args) -> int:
    o = _bench_options(args)
    inst = load_instance(o["instance"])
    backend = _backend(args)
    surrogate = o["surrogate"]
    if o["model"]:
        surrogate = load_model(o["model"])
        surrogate.check_instance(inst)
    clock = UnitClock() if o["timing"] == "off" else time.perf_counter
    report = run_bench(inst, o["methods"], [int(s) for s in o["scenarios"]], int(o["draws"]), int(o["seed"]),
                       reference=o["reference"], eps_rel=float(o["eps"]), variability=tuple(o["range"]),
                       surrogate=surrogate, backend=backend, clock=clock, workers=_workers(args))
    csv_path, txt_path = report.write(o["out"])
    sys.stdout.write(report.to_text())
    print(f"wrote {csv_path} and {txt_path}")
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neuralccg", description="Two-stage stochastic unit commitment solvers.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--backend", choices=("highs", "scipy"), default="highs")
    solver.add_argument("--mip-gap", type=float, default=1e-6)
    solver.add_argument("--time-limit", type=float, default=None)
    solver.add_argument("--workers", type=int, default=None,
                        help=f"worker processes (default: ${WORKERS_ENV} or CPU count)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-instance", help="random seeded instance")
    s.add_argument("--buses", type=int, required=True)
    s.add_argument("--generators", type=int, required=True)
    s.add_argument("--horizon", type=int, default=24)
    s.add_argument("--congestion", type=float, default=1.3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_instance)

    s = sub.add_parser("gen-scenarios", help="uniformly scaled net-load scenarios")
    s.add_argument("--instance", required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--range", type=float, nargs=2, default=(0.7, 1.0), metavar=("LO", "HI"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_scenarios)

    s = sub.add_parser("calibrate", parents=[solver], help="penalties from UC duals, written into the instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--scenarios", help="use the mean of this scenario file instead of the nominal midpoint")
    s.add_argument("--floor", type=float, default=None)
    s.add_argument("--out", help="output instance (default: overwrite --instance)")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("gen-dataset", parents=[solver], help="labelled (z, xi, Q) samples")
    s.add_argument("--instance", required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--range", type=float, nargs=2, default=(0.7, 1.0), metavar=("LO", "HI"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_dataset)

    d = TrainConfig()
    s = sub.add_parser("train", help="fit the recourse surrogate")
    s.add_argument("--instance", required=True)
    s.add_argument("--dataset", required=True)
    s.add_argument("--hidden", type=int, nargs="+", default=list(d.hidden))
    s.add_argument("--lr", type=float, default=d.lr)
    s.add_argument("--batch", type=int, default=d.batch)
    s.add_argument("--epochs", type=int, default=d.epochs)
    s.add_argument("--patience", type=int, default=d.patience)
    s.add_argument("--lr-decay", type=float, default=d.lr_decay)
    s.add_argument("--val-fraction", type=float, default=d.val_fraction)
    s.add_argument("--center", action=argparse.BooleanOptionalAction, default=d.center)
    s.add_argument("--seed", type=int, default=d.seed)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("solve", parents=[solver], help="solve one instance/scenario set")
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--instance", required=True)
    s.add_argument("--scenarios", required=True)
    s.add_argument("--model", help="trained surrogate for nccg")
    s.add_argument("--surrogate", choices=("oracle", "constant"), default=None)
    s.add_argument("--eps", type=float, default=None,
                   help="stopping tolerance in $ (ccg default 1e-6; nccg default 1e-3 x mean training target)")
    s.add_argument("--relative", action="store_true", help="ccg: eps is relative to |UB|")
    s.add_argument("--max-iter", type=int, default=None)
    s.add_argument("--evaluate", action="store_true", help="nccg: re-evaluate the final z exactly")
    s.add_argument("--out", help="solution JSON")
    s.add_argument("--trace", help="iteration trace CSV")
    s.add_argument("--export-lp", metavar="PATH", help="write the extensive form in LP format (debugging)")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("bench", parents=[solver], help="methods x scenario counts comparison report")
    s.add_argument("--config", help="JSON run config; command-line flags override its keys")
    s.add_argument("--instance")
    s.add_argument("--methods", nargs="+", choices=METHODS, default=None)
    s.add_argument("--scenarios", type=int, nargs="+", default=None, metavar="S")
    s.add_argument("--draws", type=int, default=None, help="K scenario draws per S")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--reference", choices=METHODS, default=None)
    s.add_argument("--eps", type=float, default=None, help="relative CCG tolerance")
    s.add_argument("--range", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    s.add_argument("--model", default=None)
    s.add_argument("--surrogate", choices=("oracle", "constant"), default=None)
    s.add_argument("--timing", choices=("wall", "off"), default=None,
                   help="'off' replaces wall time with a unit clock for reproducible reports")
    s.add_argument("--out", default=None, help="report path stem (writes .csv and .txt)")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _INPUT_ERRORS as exc:
        name = getattr(exc, "filename", None)
        msg = f"{name}: {exc.strerror}" if name and getattr(exc, "strerror", None) else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return 2
    except (ValueError, SUCError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
