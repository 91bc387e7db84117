"""Brute-force ground truth: materialize the join, then compute directly.

This is the reference route the factorized engine is checked against, so it
deliberately shares no join or aggregation code with it: joins go through
pandas merges over decoded values, and cofactors come from dense dot products
over the materialized rows. Everything here is O(join size) or worse on
purpose.

Join semantics pinned for reproducibility: leaves are folded left-deep in
leaf traversal order, rows of the accumulated (probe) side keep their order,
matches within one key group follow build-side row order, and NULL join keys
never match anything.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .cofactor import CofactorMatrix
from .gd import Theta, design_matrix
from .storage import AttributeKind, Database, Relation, relation_from_rows
from .varorder import FeatureOrder, VariableNode, find_leaves

_LPOS = "__probe_pos__"
_RPOS = "__build_pos__"


class OracleError(ValueError):
    pass


class JoinTooLarge(OracleError):
    pass


def _frame(rel: Relation) -> pd.DataFrame:
    data = {}
    for attr in rel.attributes:
        col = rel.columns[attr]
        if col.kind is AttributeKind.NUMERIC:
            data[attr] = np.where(col.valid, col.data, np.nan)
        else:
            assert col.labels is not None
            data[attr] = np.array(
                [col.labels[int(c)] if ok else None for c, ok in zip(col.data, col.valid)],
                dtype=object,
            )
    df = pd.DataFrame(data, columns=list(rel.attributes))
    return df


def materialize_join(
    db: Database,
    order: VariableNode,
    max_rows: int = 10_000_000,
    force: bool = False,
) -> Relation:
    """Natural join of the order's leaf relations, materialized as one relation."""
    leaves = find_leaves(order)
    if not leaves:
        raise OracleError("order has no relation leaves to join")

    kinds: dict[str, AttributeKind] = {}
    attr_order: list[str] = []
    rels = []
    for leaf in leaves:
        rel = db[leaf.name]
        rels.append(rel)
        for attr in rel.attributes:
            k = rel.kind_of(attr)
            if attr in kinds and kinds[attr] is not k:
                raise OracleError(
                    f"attribute {attr} is numeric in one relation and "
                    f"categorical in another"
                )
            if attr not in kinds:
                kinds[attr] = k
                attr_order.append(attr)
        if _LPOS in rel.attributes or _RPOS in rel.attributes:
            raise OracleError("reserved column name in relation")

    acc = _frame(rels[0])
    acc[_LPOS] = np.arange(len(acc), dtype=np.int64)
    for rel in rels[1:]:
        right = _frame(rel)
        right[_RPOS] = np.arange(len(right), dtype=np.int64)
        shared = [a for a in acc.columns if a in right.columns]
        if shared:
            # SQL semantics: a NULL key matches nothing
            left_f = acc.dropna(subset=shared)
            right_f = right.dropna(subset=shared)
            merged = left_f.merge(right_f, on=shared, how="inner", sort=False)
        else:
            merged = acc.merge(right, how="cross")
        merged = merged.sort_values([_LPOS, _RPOS], kind="stable", ignore_index=True)
        merged[_LPOS] = np.arange(len(merged), dtype=np.int64)
        acc = merged.drop(columns=[_RPOS])
        if len(acc) > max_rows and not force:
            raise JoinTooLarge(
                f"join reached {len(acc)} rows, above the {max_rows} guard"
            )

    acc = acc.drop(columns=[_LPOS])
    rows = []
    for tup in acc.itertuples(index=False, name=None):
        row = []
        for attr, v in zip(acc.columns, tup):
            if v is None or (isinstance(v, float) and np.isnan(v)):
                row.append(None)
            elif kinds[attr] is AttributeKind.NUMERIC:
                row.append(float(v))
            else:
                row.append(str(v))
        rows.append(tuple(row))
    schema = [(a, kinds[a]) for a in attr_order]
    return relation_from_rows("join", schema, rows)


def brute_cofactors(join: Relation, feature_order: FeatureOrder) -> CofactorMatrix:
    """Dense sums of x_k * x_j over the materialized rows."""
    x = design_matrix(join, feature_order)
    n1 = x.shape[1]
    entries = np.zeros((n1, n1), dtype=np.float64)
    for k in range(n1):
        for j in range(k, n1):
            entries[k, j] = entries[j, k] = float(np.dot(x[:, k], x[:, j]))
    return CofactorMatrix(feature_order, entries, float(join.n_rows))


@dataclass(frozen=True)
class ErrorReport:
    avg_abs: float
    avg_rel: float
    m: int
    zero_label_rows: int


def evaluate_errors(
    theta: Theta, join: Relation, feature_order: FeatureOrder
) -> ErrorReport:
    """Average absolute and relative prediction error over the join rows.

    Rows with a zero label are excluded from the relative average and
    reported separately.
    """
    if join.n_rows == 0:
        raise OracleError("cannot evaluate errors on an empty join")
    x = design_matrix(join, feature_order)
    y = x[:, 0]
    pred = x[:, 1:] @ theta.values[1:]
    abs_err = np.abs(pred - y)
    nonzero = y != 0.0
    avg_rel = float((abs_err[nonzero] / np.abs(y[nonzero])).mean()) if nonzero.any() else 0.0
    return ErrorReport(
        avg_abs=float(abs_err.mean()),
        avg_rel=avg_rel,
        m=join.n_rows,
        zero_label_rows=int((~nonzero).sum()),
    )


def ridge_solution(
    join: Relation, feature_order: FeatureOrder, ridge_lambda: float = 0.006
) -> Theta:
    """Closed-form fixed point of the regularized least-squares update.

    Solves (A^T A + lambda I) w = A^T y over [features..., 1]. Exists as a
    reference for tests; the trained product path is gradient descent.
    """
    x = design_matrix(join, feature_order)
    y = x[:, 0]
    a = x[:, 1:]
    n = a.shape[1]
    w = np.linalg.solve(a.T @ a + ridge_lambda * np.eye(n), a.T @ y)
    return Theta(feature_order, np.concatenate([[-1.0], w]))
