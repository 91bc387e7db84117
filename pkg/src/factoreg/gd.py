"""Batch gradient descent for least squares with ridge regularization.

Two interchangeable gradient routes: one reads the precomputed cofactor
matrix, so an iteration costs O(n^2) regardless of how many rows were joined;
the other rescans a materialized join every iteration at O(m*n). Both run the
same adaptive step-size loop and are deterministic bit for bit given equal
inputs, so they can be compared directly.

Convention: theta[0] belongs to the label and is pinned at -1, which folds the
prediction error h(x) - y into the single linear form sum_k theta_k * x_k.
The update for column j is

    eps_j = alpha * (sum_k theta_k * cofactor[k, j] + lambda * theta_j)

applied simultaneously for all non-label columns; the ridge term covers the
features and the intercept, never the label. The step size starts at alpha0
and is cut whenever the total step sum |eps_j| grows from one iteration to
the next.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .cofactor import CofactorMatrix
from .storage import AttributeKind, Relation
from .varorder import FeatureOrder


class GdError(ValueError):
    pass


class NumericError(ArithmeticError):
    """Non-finite value met during training; carries iteration and column."""


class AlphaSchedule(enum.Enum):
    # cut alpha to a third on any increase of the step sum; never raises it
    DIVIDE_ON_INCREASE = "divide3"
    # bold driver: grow 5% on decrease, halve on increase
    BOLD_DRIVER = "bold_driver"


@dataclass(frozen=True)
class GdOptions:
    alpha0: float = 0.003
    epsilon: float = 1e-6
    ridge_lambda: float = 0.006
    max_iters: int = 100_000_000
    alpha_floor: float = 1e-15
    schedule: AlphaSchedule = AlphaSchedule.DIVIDE_ON_INCREASE

    def __post_init__(self) -> None:
        if self.alpha0 <= 0 or self.epsilon <= 0 or self.max_iters <= 0:
            raise GdError("alpha0, epsilon and max_iters must be positive")
        if self.ridge_lambda < 0:
            raise GdError("ridge_lambda must be non-negative")


@dataclass(frozen=True)
class Theta:
    """Model vector laid out like the cofactor matrix columns."""

    feature_order: FeatureOrder
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (self.feature_order.n + 1,):
            raise GdError(
                f"theta has {self.values.shape[0]} entries for "
                f"{self.feature_order.n + 1} columns"
            )
        if self.values[0] != -1.0:
            raise GdError("label coefficient must stay pinned at -1")

    @property
    def intercept(self) -> float:
        return float(self.values[-1])

    def coefficient(self, name: str) -> float:
        return float(self.values[self.feature_order.index(name)])


@dataclass
class GdResult:
    theta: Theta
    iterations: int
    converged: bool
    final_delta: float
    alpha_initial: float
    alpha_final: float
    alpha_cuts: int
    alpha_raises: int
    multiply_adds: int
    wall_ms: float

    def report(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "final_step_sum": self.final_delta,
            "alpha": {
                "initial": self.alpha_initial,
                "final": self.alpha_final,
                "cuts": self.alpha_cuts,
                "raises": self.alpha_raises,
            },
            "multiply_adds": self.multiply_adds,
            "wall_ms": self.wall_ms,
            "theta": [float(v) for v in self.theta.values],
            "columns": list(self.theta.feature_order.entries),
        }


def _descend(
    grad: Callable[[np.ndarray], np.ndarray],
    feature_order: FeatureOrder,
    opts: GdOptions,
    ops_per_iter: int,
) -> GdResult:
    n1 = feature_order.n + 1
    theta = np.zeros(n1, dtype=np.float64)
    theta[0] = -1.0

    alpha = opts.alpha0
    prev_delta: float | None = None
    iterations = 0
    cuts = 0
    raises = 0
    converged = False
    delta = float("inf")
    t0 = time.perf_counter()

    while True:
        # overflow surfaces as the NumericError below, not as a numpy warning
        with np.errstate(over="ignore", invalid="ignore"):
            s = grad(theta)
            eps = alpha * (s[1:] + opts.ridge_lambda * theta[1:])
        if not np.all(np.isfinite(eps)):
            bad = int(np.flatnonzero(~np.isfinite(eps))[0]) + 1
            raise NumericError(
                f"non-finite step at iteration {iterations + 1}, column "
                f"{feature_order.entries[bad]}"
            )
        theta[1:] -= eps
        delta = float(np.abs(eps).sum())
        iterations += 1

        if delta < opts.epsilon:
            converged = True
            break
        if prev_delta is not None:
            if delta > prev_delta:
                cuts += 1
                alpha = alpha / 3.0 if opts.schedule is AlphaSchedule.DIVIDE_ON_INCREASE else alpha / 2.0
            elif opts.schedule is AlphaSchedule.BOLD_DRIVER and delta < prev_delta:
                raises += 1
                alpha *= 1.05
        prev_delta = delta
        if alpha < opts.alpha_floor or iterations >= opts.max_iters:
            break

    wall_ms = (time.perf_counter() - t0) * 1e3
    return GdResult(
        theta=Theta(feature_order, theta),
        iterations=iterations,
        converged=converged,
        final_delta=delta,
        alpha_initial=opts.alpha0,
        alpha_final=alpha,
        alpha_cuts=cuts,
        alpha_raises=raises,
        multiply_adds=iterations * ops_per_iter,
        wall_ms=wall_ms,
    )


def bgd_cofactor(cof: CofactorMatrix, opts: GdOptions | None = None) -> GdResult:
    """Train on the cofactor matrix alone; no row data is touched."""
    opts = opts or GdOptions()
    c = cof.entries
    n1 = cof.feature_order.n + 1
    return _descend(lambda th: c @ th, cof.feature_order, opts, n1 * n1)


def design_matrix(join: Relation, feature_order: FeatureOrder) -> np.ndarray:
    """Rows of the join as [label, features..., 1], NULLs coalesced to 0."""
    cols = []
    for name in (feature_order.label, *feature_order.features):
        if name not in join.attributes:
            raise GdError(f"column {name} missing from the joined relation")
        col = join.columns[name]
        if col.kind is not AttributeKind.NUMERIC:
            raise GdError(f"column {name} is categorical; matrix columns must be numeric")
        cols.append(col.coalesced())
    cols.append(np.ones(join.n_rows, dtype=np.float64))
    return np.column_stack(cols)


def bgd_materialized(
    join: Relation, feature_order: FeatureOrder, opts: GdOptions | None = None
) -> GdResult:
    """Train by rescanning the materialized join every iteration."""
    opts = opts or GdOptions()
    if join.n_rows == 0:
        raise GdError("cannot train on an empty join")
    x = design_matrix(join, feature_order)
    m, n1 = x.shape
    return _descend(lambda th: x.T @ (x @ th), feature_order, opts, 2 * m * n1)


def predict(theta: Theta, row: Mapping[str, float | None]) -> float:
    """Apply the model to one row of feature values; None coalesces to 0."""
    total = theta.intercept
    for name in theta.feature_order.features:
        if name not in row:
            raise GdError(f"row is missing feature {name}")
        v = row[name]
        total += theta.coefficient(name) * (0.0 if v is None else float(v))
    return total
