"""Command-line driver: load data, run scripts, train and query model views, maintain them."""

from __future__ import annotations

import argparse
import os
import sys
import time
import warnings

from . import engine
from .errors import EngineError
from .models import (
    GmmParams,
    RandomUniform,
    TrainConfig,
    cluster_assign,
    evaluate_clustering,
    infer_posterior,
    log_likelihood,
    params_from_relation,
    train_gmm,
    train_mlr,
    train_moe,
)
from .relation import load_csv, write_csv
from .sql.lower import compile_script
from .synthetic import GENERATORS, SyntheticSpec, generate
from .workspace import TriggerEntry, Workspace

TRAINERS = {"gmm": train_gmm, "mlr": train_mlr, "moe": train_moe}


class Diagnostic(Exception):
    """A user-facing failure; reported on stderr with exit code 1."""


def _value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def _params(pairs: list[str]) -> dict:
    out = {}
    for p in pairs or []:
        name, sep, val = p.partition("=")
        if not sep or not name:
            raise Diagnostic(f"--param expects NAME=VALUE, got {p!r}")
        out[name.strip().lower()] = _value(val.strip())
    return out


def _emit(rel, out: str | None) -> None:
    if out:
        write_csv(rel, out)
        print(f"wrote {len(rel)} rows to {out}")
    else:
        sys.stdout.write(write_csv(rel))


def _write_trace(args, trace) -> None:
    if args.trace:
        trace.to_csv(args.trace)


def _relation(ws: Workspace, db, ref: str):
    """A registered table/view name or a CSV path."""
    if ref in db:
        return db[ref]
    if os.path.exists(ref):
        return load_csv(ref)
    raise Diagnostic(f"{ref!r} is neither a registered relation nor a CSV file")


# commands -------------------------------------------------------------------


def cmd_load(args, ws: Workspace) -> None:
    rel = load_csv(args.csv, args.table)
    ws.store_table(args.table, rel)
    ws.save()
    print(len(rel))


def cmd_run(args, ws: Workspace) -> None:
    with open(args.script, encoding="utf-8") as fh:
        text = fh.read()
    db = ws.database()
    db.params.update(_params(args.param))
    plan = compile_script(text, base_tables=set(db.names()))
    out, trace = engine.evaluate(plan, db, max_recursion=args.max_recursion)
    _write_trace(args, trace)
    if args.out:
        _emit(out, args.out)
    else:
        print(out.pretty(limit=args.limit))
        print(f"({len(out)} rows, {trace.iterations} iterations, exit: {trace.exit_reason})")


def cmd_train(args, ws: Workspace) -> None:
    db = ws.database()
    data = db[args.table]
    cfg = TrainConfig(
        K=args.K,
        max_iterations=args.iterations,
        seed=args.seed,
        init=RandomUniform(args.lo, args.hi),
        epsilon=args.epsilon,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = TRAINERS[args.model](data, cfg)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    view = result.params.to_relation(args.view)
    config = {"K": args.K, "iterations": args.iterations, "seed": args.seed, "lo": args.lo, "hi": args.hi, "epsilon": args.epsilon}
    ws.store_view(args.view, view, args.model, args.table, config)
    ws.save()
    _write_trace(args, result.trace)
    for t, ll in enumerate(result.loglik):
        print(f"iteration {t}: loglik {ll:.10g}")
    print(view.pretty())


def _gmm_view(db, name: str) -> GmmParams:
    params = params_from_relation(db[name])
    if not isinstance(params, GmmParams):
        raise Diagnostic(f"view {name!r} is not a Gaussian mixture")
    return params


def cmd_infer(args, ws: Workspace) -> None:
    db = ws.database()
    _emit(infer_posterior(_gmm_view(db, args.view), db[args.table]), args.out)


def cmd_assign(args, ws: Workspace) -> None:
    db = ws.database()
    R = infer_posterior(_gmm_view(db, args.view), db[args.table])
    _emit(cluster_assign(R), args.out)


def cmd_eval(args, ws: Workspace) -> None:
    db = ws.database()
    clu = _relation(ws, db, args.assignments)
    truth = _relation(ws, db, args.truth)
    try:
        p, m = evaluate_clustering(clu, truth)
    except ValueError as exc:
        raise Diagnostic(str(exc)) from None
    print(f"purity,{p:.10g}")
    print(f"nmi,{m:.10g}")


def cmd_generate(args, ws: Workspace) -> None:
    spec = SyntheticSpec(args.generator, args.n, args.d, args.K, args.seed, args.lo, args.hi, args.spread)
    rel = generate(spec)
    if args.out:
        write_csv(rel, args.out)
    if args.register:
        ws.store_table(args.register, rel)
        ws.save()
    if not args.out and not args.register:
        sys.stdout.write(write_csv(rel))
        return
    print(len(rel))


def cmd_attach(args, ws: Workspace) -> None:
    db = ws.database()
    if args.table not in db or args.view not in ws.config.views:
        raise Diagnostic(f"need a registered table {args.table!r} and view {args.view!r}")
    _gmm_view(db, args.view)
    entry = TriggerEntry(args.view.lower(), args.strategy, args.radius, args.budget, args.T, args.seed, not args.no_precompute)
    ws.bind(args.table, entry, db)
    ws.save()
    print(f"attached {args.view} maintenance to {args.table}")


def _mutate(args, ws: Workspace, action) -> None:
    db = ws.database()
    table = args.table.lower()
    if table not in db:
        raise Diagnostic(f"unknown table {args.table!r}")
    trig = ws.attach_all(db).get(table)
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        count = action(db, table)
    elapsed = time.perf_counter() - start
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    ws.persist(db, table, trig)
    ws.save()
    print(f"rows: {count}")
    print(f"table size: {len(db[table])}")
    if trig is not None:
        ll = trig.reports[-1].loglik if trig.reports else log_likelihood(GmmParams.from_relation(db[trig.view]), db[table])
        print(f"maintenance seconds: {elapsed:.6f}")
        print(f"loglik: {ll:.10g}")
        print(db[trig.view].pretty())


def cmd_insert(args, ws: Workspace) -> None:
    rows = load_csv(args.csv)

    def act(db, table):
        db.insert(table, rows)
        return len(rows)

    _mutate(args, ws, act)


def cmd_delete(args, ws: Workspace) -> None:
    def act(db, table):
        return len(db.delete(table, args.ids, column=args.column))

    _mutate(args, ws, act)


# parser ---------------------------------------------------------------------


def _global_flags(p: argparse.ArgumentParser, workspace, seed, trace) -> None:
    p.add_argument("--workspace", default=workspace, help="workspace directory (default: current directory)")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--trace", default=trace, help="write the evaluation trace CSV here")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="emsql", description="Recursive SQL engine with in-database mixture models.")
    _global_flags(ap, ".", 0, None)
    # the same flags are accepted after the subcommand; defaults come from the top level
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, argparse.SUPPRESS, argparse.SUPPRESS, argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)
    _add = sub.add_parser
    sub.add_parser = lambda *a, **kw: _add(*a, parents=[common], **kw)

    p = sub.add_parser("load", help="register a CSV file as a table")
    p.add_argument("table")
    p.add_argument("csv")
    p.set_defaults(fn=cmd_load)

    p = sub.add_parser("run", help="evaluate a script against the workspace tables")
    p.add_argument("script")
    p.add_argument("--out")
    p.add_argument("--param", action="append", metavar="NAME=VALUE", help="host parameter, repeatable")
    p.add_argument("--max-recursion", type=int)
    p.add_argument("--limit", type=int, default=50, help="rows to print")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("train", help="train a model view")
    p.add_argument("view")
    p.add_argument("--model", choices=sorted(TRAINERS), default="gmm")
    p.add_argument("--table", required=True)
    p.add_argument("-K", type=int, required=True)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--epsilon", type=float)
    p.set_defaults(fn=cmd_train)

    for name, fn, text in (("infer", cmd_infer, "posterior responsibilities"), ("assign", cmd_assign, "cluster assignment")):
        p = sub.add_parser(name, help=text)
        p.add_argument("view")
        p.add_argument("table")
        p.add_argument("--out")
        p.set_defaults(fn=fn)

    p = sub.add_parser("eval", help="purity and NMI of an assignment")
    p.add_argument("assignments", help="relation name or CSV with id,k")
    p.add_argument("truth", help="relation name or CSV with id,label")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("generator", choices=GENERATORS)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("-K", type=int, default=3)
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=10.0)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--out")
    p.add_argument("--register", metavar="TABLE", help="also store it as a workspace table")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("attach", help="keep a GMM view in sync with a table")
    p.add_argument("table")
    p.add_argument("view")
    p.add_argument("--strategy", choices=("distance", "entropy"), default="distance")
    p.add_argument("--radius", type=float, default=3.0)
    p.add_argument("--budget", type=int)
    p.add_argument("-T", type=int, default=0, help="refinement passes")
    p.add_argument("--no-precompute", action="store_true", help="recompute stats on every statement")
    p.set_defaults(fn=cmd_attach)

    p = sub.add_parser("insert", help="insert CSV rows, firing triggers")
    p.add_argument("table")
    p.add_argument("csv")
    p.set_defaults(fn=cmd_insert)

    p = sub.add_parser("delete", help="delete rows by id, firing triggers")
    p.add_argument("table")
    p.add_argument("ids", nargs="+", type=_value)
    p.add_argument("--column", default="id")
    p.set_defaults(fn=cmd_delete)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command != "generate" or args.register:
            os.makedirs(args.workspace, exist_ok=True)
        ws = Workspace(args.workspace)
        args.fn(args, ws)
    except (Diagnostic, EngineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
