"""Command-line front end.

Subcommands: train, cofactors, sqlgen, bench, gen. Exit codes: 0 success,
1 configuration or validation failure, 2 training finished without reaching
the convergence threshold, 3 numeric failure (non-finite values) during
training.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .bench import BenchError, GenParams, SchemaKind, gen_synthetic, run_bench
from .cofactor import EvalError
from .config import ConfigError, JobConfig, load_config
from .gd import GdError, GdOptions, NumericError
from .oracle import OracleError, brute_cofactors, evaluate_errors, materialize_join
from .pipeline import PipelineError, cofactors, prepare, train
from .scaling import InterceptMode, ScalingError, scale_database
from .sqlgen import SqlGenError, emit_pipeline
from .storage import StorageError, write_csv
from .varorder import NodeClass, OrderError, VariableNode, iter_nodes

_USER_ERRORS = (
    ConfigError,
    StorageError,
    OrderError,
    ScalingError,
    SqlGenError,
    PipelineError,
    OracleError,
    GdError,
    BenchError,
    EvalError,
)

_MODE = {"conv": InterceptMode.THETA_CONV, "labelavg": InterceptMode.LABEL_AVG}


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _stamp(doc: dict, cfg: JobConfig | None = None) -> dict:
    doc["engine_version"] = __version__
    if cfg is not None:
        doc["config_sha256"] = cfg.sha256
    return doc


def _gd_overrides(cfg_opts: GdOptions, args: argparse.Namespace) -> GdOptions:
    from dataclasses import replace
    from .gd import AlphaSchedule

    opts = cfg_opts
    if args.epsilon is not None:
        opts = replace(opts, epsilon=args.epsilon)
    if args.alpha0 is not None:
        opts = replace(opts, alpha0=args.alpha0)
    if args.max_iters is not None:
        opts = replace(opts, max_iters=args.max_iters)
    if args.alpha_schedule is not None:
        sched = {
            "divide3": AlphaSchedule.DIVIDE_ON_INCREASE,
            "bold_driver": AlphaSchedule.BOLD_DRIVER,
        }[args.alpha_schedule]
        opts = replace(opts, schedule=sched)
    return opts


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    opts = _gd_overrides(cfg.gd, args)
    scaling = cfg.scaling_enabled and not args.no_scaling
    mode = args.mode or "fact"
    intercept_mode = _MODE[args.theta0] if args.theta0 else cfg.intercept_mode
    report = train(
        cfg.db,
        cfg.core_order,
        cfg.feature_order,
        opts,
        mode=mode,
        scaling=scaling,
        intercept_mode=intercept_mode,
        force_large=args.force_large,
    )
    doc = _stamp(report.to_json(), cfg)
    if args.oracle:
        order = prepare(cfg.db, cfg.core_order, cfg.feature_order)
        join = materialize_join(cfg.db, order, force=args.force_large)
        errs = evaluate_errors(report.theta, join, cfg.feature_order)
        doc["oracle"] = {
            "join_rows": errs.m,
            "avg_abs_err": errs.avg_abs,
            "avg_rel_err": errs.avg_rel,
            "zero_label_rows": errs.zero_label_rows,
        }
    _emit(doc, args.out)
    return 0 if report.gd.converged else 2


def cmd_cofactors(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    cof, stats, _ = cofactors(
        cfg.db, cfg.core_order, cfg.feature_order, scaling=args.scaled
    )
    doc = _stamp(
        {
            "columns": list(cof.feature_order.entries),
            "m": cof.m,
            "entries": [[float(v) for v in row] for row in cof.entries],
            "factorized_rows": stats.total_rows,
            "multiply_adds": stats.multiply_adds,
        },
        cfg,
    )
    if args.oracle:
        # join the same data the matrix saw, scaled or not
        order = prepare(cfg.db, cfg.core_order, cfg.feature_order)
        db = cfg.db
        if args.scaled:
            db, order, _ = scale_database(db, order, cfg.feature_order)
        join = materialize_join(db, order, force=args.force_large)
        brute = brute_cofactors(join, cfg.feature_order)
        dev = abs(cof.entries - brute.entries)
        # normalized: entries near zero are compared absolutely
        denom = abs(brute.entries).clip(min=1.0)
        doc["oracle"] = {
            "join_rows": join.n_rows,
            "max_abs_dev": float(dev.max()),
            "max_norm_dev": float((dev / denom).max()),
        }
    _emit(doc, args.out)
    return 0


def cmd_sqlgen(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    order = prepare(cfg.db, cfg.core_order, cfg.feature_order)
    script = emit_pipeline(cfg.db, order, cfg.feature_order)
    if args.out:
        script.write(args.out)
    else:
        print(script.text, end="")
    return 0


def _gen_params(args: argparse.Namespace) -> GenParams:
    schema = SchemaKind(args.schema)
    rows = tuple(int(x) for x in args.retail_rows.split(","))
    if len(rows) != 3:
        raise BenchError("--retail-rows wants three comma-separated counts")
    return GenParams(
        schema=schema,
        seed=args.seed,
        k_dims=args.k_dims,
        fact_rows=args.fact_rows,
        fanout=args.fanout,
        retail_rows=rows,  # type: ignore[arg-type]
        noise_sigma=args.noise_sigma,
    )


def cmd_bench(args: argparse.Namespace) -> int:
    gen = gen_synthetic(_gen_params(args))
    modes = tuple(m.strip() for m in args.modes.split(",") if m.strip())
    opts = GdOptions(
        epsilon=args.epsilon if args.epsilon is not None else 1e-6,
        max_iters=args.max_iters if args.max_iters is not None else 100_000_000,
    )
    report = run_bench(
        gen.db,
        gen.order,
        gen.feature_order,
        modes=modes,
        opts=opts,
        theta_expected=gen.theta_expected,
    )
    doc = _stamp(report.to_json())
    doc["params"] = {
        "schema": args.schema,
        "seed": args.seed,
        "theta_expected": [float(v) for v in gen.theta_expected.values],
    }
    _emit(doc, args.out)
    return 0


def _core_to_json(node: VariableNode) -> dict:
    out: dict = {"name": node.name, "key": list(node.key)}
    if node.categorical:
        out["categorical"] = True
    children = [
        _core_to_json(c)
        for c in node.children
        if c.node_class is not NodeClass.RELATION_LEAF
    ]
    if children:
        out["children"] = children
    return out


def cmd_gen(args: argparse.Namespace) -> int:
    gen = gen_synthetic(_gen_params(args))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rel_entries = []
    for name in gen.db.names():
        rel = gen.db[name]
        write_csv(rel, out_dir / f"{name}.csv")
        rel_entries.append(
            {
                "name": name,
                "path": f"{name}.csv",
                "schema": [[a, k.value] for a, k in rel.schema],
            }
        )

    core_roots = [
        _core_to_json(c)
        for c in gen.order.children
        if c.node_class is not NodeClass.RELATION_LEAF
    ]
    config = {
        "config_version": 1,
        "relations": rel_entries,
        "variable_order": core_roots[0] if len(core_roots) == 1 else core_roots,
        "feature_order": list(gen.feature_order.entries),
        "gd": {"alpha0": 0.003, "epsilon": 1e-6, "ridge_lambda": 0.006,
               "schedule": "divide3"},
        "scaling": {"enabled": True, "intercept_mode": "conv"},
        "metadata": {
            "generator": {
                "schema": args.schema,
                "seed": args.seed,
                "theta_expected": [float(v) for v in gen.theta_expected.values],
            }
        },
    }
    (out_dir / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"wrote {len(rel_entries)} relations and config.json to {out_dir}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="factoreg",
        description="linear regression over joins without materializing them",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_config(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", required=True, help="job config JSON")
        sp.add_argument("--out", help="write the JSON result here instead of stdout")
        sp.add_argument("--force-large", action="store_true",
                        help="ignore the join size guard")

    tr = sub.add_parser("train", help="train a model end to end")
    add_config(tr)
    tr.add_argument("--mode", choices=["fact", "nopre"],
                    help="cofactor route (fact) or rescan the materialized join")
    tr.add_argument("--theta0", choices=["conv", "labelavg"],
                    help="intercept recovery mode after rescaling")
    tr.add_argument("--no-scaling", action="store_true",
                    help="train on raw columns; no rescaling step")
    tr.add_argument("--epsilon", type=float, help="convergence threshold")
    tr.add_argument("--alpha0", type=float, help="initial step size")
    tr.add_argument("--max-iters", type=int, help="iteration cap")
    tr.add_argument("--alpha-schedule", choices=["divide3", "bold_driver"])
    tr.add_argument("--oracle", action="store_true",
                    help="add a brute-force error report over the join")
    tr.set_defaults(fn=cmd_train)

    co = sub.add_parser("cofactors", help="compute the cofactor matrix")
    add_config(co)
    co.add_argument("--scaled", action="store_true",
                    help="apply feature scaling before evaluating")
    co.add_argument("--oracle", action="store_true",
                    help="compare against the materialized-join computation")
    co.set_defaults(fn=cmd_cofactors)

    sq = sub.add_parser("sqlgen", help="emit the SQL script for this job")
    add_config(sq)
    sq.set_defaults(fn=cmd_sqlgen)

    def add_gen(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--schema", choices=["retail", "star"], default="star")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--k-dims", type=int, default=3)
        sp.add_argument("--fact-rows", type=int, default=1000)
        sp.add_argument("--fanout", type=int, default=1)
        sp.add_argument("--retail-rows", default="5,5,4")
        sp.add_argument("--noise-sigma", type=float, default=0.0)

    be = sub.add_parser("bench", help="generate data and time both modes")
    add_gen(be)
    be.add_argument("--modes", default="fact,nopre")
    be.add_argument("--epsilon", type=float)
    be.add_argument("--max-iters", type=int)
    be.add_argument("--out", help="write the JSON report here")
    be.set_defaults(fn=cmd_bench)

    ge = sub.add_parser("gen", help="write a synthetic dataset and its config")
    add_gen(ge)
    ge.add_argument("--out-dir", required=True)
    ge.set_defaults(fn=cmd_gen)

    return p


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except _USER_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
