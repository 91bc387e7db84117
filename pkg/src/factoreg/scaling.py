"""Feature scaling: mean normalization over the union of base tables.

Gradient descent on raw retail-sized magnitudes needs a uselessly small step
size, so each feature x is replaced by x_conv = (coalesce(x, 0) - avg) / max,
where avg and max(|.|) are taken over the union of every relation that stores
the attribute, not over the join result. That makes the statistics computable
before any join and keeps them join-independent.

The label's statistics are computed too (its average feeds one of the
intercept recovery modes), but the label column itself is left untouched:
only feature columns are rewritten into the *_conv relation copies.

After training on converted data, rescale_theta maps the model back to raw
units: theta_j = theta_j_conv / max_j, and the intercept absorbs the mean
shifts.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .gd import Theta
from .storage import AttributeKind, Column, Database, Relation, union_column
from .varorder import FeatureOrder, VariableNode, find_leaves, rename_leaves


class ScalingError(ValueError):
    pass


class InterceptMode(enum.Enum):
    # theta_n = theta_n_conv - sum_j theta_j * avg_j
    THETA_CONV = "conv"
    # theta_n = avg_label - sum_j theta_j * avg_j
    LABEL_AVG = "labelavg"


@dataclass(frozen=True)
class ScaleFactors:
    """Per-attribute (avg, max-abs) statistics plus the column roles."""

    avg: dict[str, float]
    max: dict[str, float]
    label: str
    features: tuple[str, ...]

    def pair(self, attr: str) -> tuple[float, float]:
        return self.avg[attr], self.max[attr]


def relations_with(order: VariableNode, attr: str) -> list[str]:
    """Leaf relation names whose attribute set contains attr, in leaf order."""
    return [leaf.name for leaf in find_leaves(order) if attr in leaf.key]


def compute_scale_factors(
    db: Database, order: VariableNode, feature_order: FeatureOrder
) -> ScaleFactors:
    """avg and max(|.|) for the label and every feature, NULLs as 0.

    An attribute stored in several relations contributes every stored copy of
    its column (bag union). An attribute stored nowhere is an error; an empty
    union yields (0, 0).
    """
    avg: dict[str, float] = {}
    mx: dict[str, float] = {}
    for attr in (feature_order.label, *feature_order.features):
        rel_names = relations_with(order, attr)
        if not rel_names:
            raise ScalingError(f"attribute {attr} is stored in no relation")
        vals, _ = union_column(db, attr, rel_names)
        if len(vals) == 0:
            avg[attr], mx[attr] = 0.0, 0.0
        else:
            avg[attr] = float(vals.mean())
            mx[attr] = float(np.abs(vals).max())
    return ScaleFactors(avg, mx, feature_order.label, feature_order.features)


def converted_names(db: Database, factors: ScaleFactors) -> dict[str, str]:
    """Which relations get a *_conv copy: those storing at least one feature."""
    out: dict[str, str] = {}
    for name in db.names():
        rel = db[name]
        if any(a in factors.features for a in rel.attributes):
            out[name] = f"{name}_conv"
    return out


def apply_scaling(db: Database, factors: ScaleFactors) -> Database:
    """Augment the catalog with *_conv copies of relations storing features.

    In a converted copy each feature column becomes
    (coalesce(x, 0) - avg) / max; the result is never NULL. All other
    columns, the label included, are copied unchanged. max = 0 means the
    coalesced column was identically zero, and the converted column is zero.
    """
    out = db.copy()
    for name, conv in converted_names(db, factors).items():
        rel = db[name]
        cols: dict[str, Column] = {}
        for attr in rel.attributes:
            col = rel.columns[attr]
            if attr in factors.features:
                if col.kind is not AttributeKind.NUMERIC:
                    raise ScalingError(f"feature {attr} of {name} is categorical")
                a, m = factors.pair(attr)
                base = col.coalesced()
                scaled = (base - a) / m if m != 0.0 else np.zeros_like(base)
                cols[attr] = Column(
                    AttributeKind.NUMERIC, scaled, np.ones(len(col), dtype=bool)
                )
            else:
                cols[attr] = col
        out.add(Relation(conv, rel.schema, cols), replace=True)
    return out


def scale_database(
    db: Database, order: VariableNode, feature_order: FeatureOrder
) -> tuple[Database, VariableNode, ScaleFactors]:
    """Compute factors, add converted relations, repoint the order's leaves."""
    factors = compute_scale_factors(db, order, feature_order)
    db2 = apply_scaling(db, factors)
    order2 = rename_leaves(order, converted_names(db, factors))
    return db2, order2, factors


def rescale_theta(
    theta_conv: Theta,
    factors: ScaleFactors,
    mode: InterceptMode = InterceptMode.THETA_CONV,
) -> Theta:
    """Map a model trained on converted columns back to raw units.

    A feature whose max is 0 carried no signal; a nonzero coefficient on it
    cannot be mapped back, so it is zeroed with a warning.
    """
    fo = theta_conv.feature_order
    values = theta_conv.values.copy()
    shift = 0.0
    for name in fo.features:
        j = fo.index(name)
        a, m = factors.pair(name)
        if m == 0.0:
            if values[j] != 0.0:
                warnings.warn(
                    f"feature {name}: max is 0, dropping coefficient "
                    f"{values[j]!r} to 0"
                )
            values[j] = 0.0
        else:
            values[j] = values[j] / m
        shift += values[j] * a
    if mode is InterceptMode.THETA_CONV:
        values[-1] = theta_conv.values[-1] - shift
    else:
        values[-1] = factors.avg[fo.label] - shift
    return Theta(fo, values)
