"""End-to-end training: validate, scale, build cofactors, descend, rescale."""

from __future__ import annotations

import time
from dataclasses import dataclass

from .cofactor import CofactorMatrix, EvalStats, evaluate, extract_cofactor_matrix
from .gd import GdOptions, GdResult, Theta, bgd_cofactor, bgd_materialized
from .oracle import materialize_join
from .scaling import InterceptMode, ScaleFactors, rescale_theta, scale_database
from .storage import Database
from .varorder import (
    FeatureOrder,
    NodeClass,
    VariableNode,
    extend,
    validate,
    validate_feature_order,
)


class PipelineError(ValueError):
    pass


@dataclass
class TrainReport:
    mode: str
    feature_order: FeatureOrder
    theta: Theta
    theta_conv: Theta
    gd: GdResult
    scaling_enabled: bool
    factors: ScaleFactors | None
    eval_stats: EvalStats | None
    join_rows: int | None
    wall_ms: float

    def to_json(self) -> dict:
        out = {
            "mode": self.mode,
            "columns": list(self.feature_order.entries),
            "theta": [float(v) for v in self.theta.values],
            "theta_conv": [float(v) for v in self.theta_conv.values],
            "scaling": self.scaling_enabled,
            "wall_ms": self.wall_ms,
            "gd": self.gd.report(),
        }
        if self.factors is not None:
            out["scale_factors"] = {
                a: {"avg": self.factors.avg[a], "max": self.factors.max[a]}
                for a in (self.factors.label, *self.factors.features)
            }
        if self.eval_stats is not None:
            out["factorized_rows"] = self.eval_stats.total_rows
            out["eval_multiply_adds"] = self.eval_stats.multiply_adds
        if self.join_rows is not None:
            out["join_rows"] = self.join_rows
        return out


def prepare(
    db: Database,
    order: VariableNode,
    feature_order: FeatureOrder,
    intercept_name: str | None = None,
) -> VariableNode:
    """Extend a core order if needed and check every structural invariant."""
    if order.node_class is not NodeClass.INTERCEPT:
        order = extend(order, db, intercept_name or feature_order.intercept)
    problems = validate(order, db) + validate_feature_order(feature_order, order)
    if problems:
        raise PipelineError("; ".join(problems))
    return order


def train(
    db: Database,
    order: VariableNode,
    feature_order: FeatureOrder,
    opts: GdOptions | None = None,
    mode: str = "fact",
    scaling: bool = True,
    intercept_mode: InterceptMode = InterceptMode.THETA_CONV,
    max_join_rows: int = 10_000_000,
    force_large: bool = False,
) -> TrainReport:
    """Train one model; mode 'fact' never materializes the join, mode
    'nopre' materializes it and rescans it every iteration."""
    opts = opts or GdOptions()
    mode = mode.lower()
    if mode not in ("fact", "nopre"):
        raise PipelineError(f"unknown mode {mode!r}; use 'fact' or 'nopre'")
    t0 = time.perf_counter()
    order = prepare(db, order, feature_order)

    factors: ScaleFactors | None = None
    if scaling:
        db, order, factors = scale_database(db, order, feature_order)

    eval_stats: EvalStats | None = None
    join_rows: int | None = None
    if mode == "fact":
        eval_stats = EvalStats()
        root = evaluate(db, order, eval_stats)
        cof = extract_cofactor_matrix(root, feature_order, order)
        gd: GdResult = bgd_cofactor(cof, opts)
    else:
        join = materialize_join(db, order, max_rows=max_join_rows, force=force_large)
        join_rows = join.n_rows
        gd = bgd_materialized(join, feature_order, opts)

    theta = rescale_theta(gd.theta, factors, intercept_mode) if factors else gd.theta
    return TrainReport(
        mode=mode,
        feature_order=feature_order,
        theta=theta,
        theta_conv=gd.theta,
        gd=gd,
        scaling_enabled=scaling,
        factors=factors,
        eval_stats=eval_stats,
        join_rows=join_rows,
        wall_ms=(time.perf_counter() - t0) * 1e3,
    )


def cofactors(
    db: Database,
    order: VariableNode,
    feature_order: FeatureOrder,
    scaling: bool = False,
) -> tuple[CofactorMatrix, EvalStats, ScaleFactors | None]:
    """Just the factorized cofactor matrix (raw data unless scaling=True)."""
    order = prepare(db, order, feature_order)
    factors = None
    if scaling:
        db, order, factors = scale_database(db, order, feature_order)
    stats = EvalStats()
    root = evaluate(db, order, stats)
    return extract_cofactor_matrix(root, feature_order, order), stats, factors
