"""Generate the SQL script that computes the same cofactors in a database.

The emitted script mirrors the in-memory pipeline, statement family by
statement family: scaling probes and converted-relation views, the little
degree tables (one row per degree 0..2 for each variable, a single degree-0
row for each relation), one aggregate view per node evaluated bottom-up, a
final table at the intercept root, and LIKE-pattern SELECTs that pull single
cofactor entries out of it. Lineage travels as a concatenated text column,
e.g. '(C,1)(S,1)', built in child order.

The dialect sticks to portable constructs (CAST instead of the :: operator,
unparenthesized view bodies) so the same script runs on PostgreSQL and
SQLite. Two deliberate departures from a straight transliteration of the
engine: converted views cast to double precision rather than single, and a
converted view leaves NULL feature values NULL (the aggregate views coalesce
them later), whereas the in-memory transform coalesces before shifting. They
agree whenever features carry no NULLs.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from pathlib import Path

from .scaling import ScaleFactors, compute_scale_factors, converted_names, relations_with
from .storage import Database
from .varorder import (
    FeatureOrder,
    NodeClass,
    VariableNode,
    iter_nodes,
    iter_post_order,
    rename_leaves,
)

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class SqlGenError(ValueError):
    pass


class Dialect(enum.Enum):
    GENERIC = "generic"


@dataclass(frozen=True)
class SqlScript:
    statements: tuple[str, ...]
    dialect: Dialect = Dialect.GENERIC

    @property
    def text(self) -> str:
        return "\n\n".join(self.statements) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.text)


def _check_ident(name: str) -> str:
    if not _IDENT.match(name):
        raise SqlGenError(f"{name!r} is not usable as an SQL identifier")
    return name


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def emit_scaling(
    db: Database, order: VariableNode, factors: ScaleFactors
) -> list[str]:
    """Statistics probes plus one converted view per relation with features.

    The probes document how avg and max were obtained (union of every base
    table storing the attribute); the views inline the resulting constants to
    six decimals.
    """
    stmts: list[str] = []
    for attr in (factors.label, *factors.features):
        _check_ident(attr)
        rels = relations_with(order, attr)
        union = "\n    UNION ALL\n    ".join(
            f"SELECT {attr} FROM {_check_ident(r)}" for r in rels
        )
        role = "label" if attr == factors.label else "feature"
        avg, mx = factors.pair(attr)
        stmts.append(
            f"-- scale statistics for {role} {attr}: "
            f"avg = {_fmt(avg)}, max = {_fmt(mx)}\n"
            f"WITH union_{attr} AS (\n"
            f"    {union}\n"
            f")\n"
            f"SELECT AVG(COALESCE({attr}, 0)) AS avg_{attr}, "
            f"MAX(ABS(COALESCE({attr}, 0))) AS max_{attr}\n"
            f"FROM union_{attr};"
        )

    for name, conv in converted_names(db, factors).items():
        rel = db[name]
        select = []
        for attr in rel.attributes:
            _check_ident(attr)
            if attr in factors.features:
                avg, mx = factors.pair(attr)
                select.append(
                    f"CAST((({attr} - {_fmt(avg)}) / {_fmt(mx)}) "
                    f"AS double precision) AS {attr}"
                )
            else:
                select.append(attr)
        cols = ",\n    ".join(select)
        stmts.append(
            f"CREATE VIEW {_check_ident(conv)} AS\n"
            f"  SELECT {cols}\n"
            f"  FROM {name};"
        )
    return stmts


def emit_type_tables(order: VariableNode) -> list[str]:
    """Degree tables, one per node, in pre-order.

    Numeric variables carry degrees 0..2. Relation leaves and categorical
    variables never contribute their own value, so their table holds the
    single degree 0 and the lineage concatenation in the views stays inert.
    """
    stmts: list[str] = []
    for node in iter_nodes(order):
        if node.node_class is NodeClass.INTERCEPT:
            continue
        name = _check_ident(node.name)
        stmts.append(f"CREATE TABLE {name}_type ({name}_n text, {name}_d int);")
        no_own_degree = node.node_class is NodeClass.RELATION_LEAF or node.categorical
        degrees = (0,) if no_own_degree else (0, 1, 2)
        for d in degrees:
            stmts.append(f"INSERT INTO {name}_type VALUES ('{name}', {d});")
    return stmts


def _view_columns(node: VariableNode) -> tuple[str, ...]:
    """Columns a node's view exposes besides lineage/deg/agg."""
    return tuple(node.key)


def _from_clause(children: tuple[VariableNode, ...]) -> tuple[str, dict[str, str]]:
    """Left-deep join of the children's views; returns the clause and a map
    from attribute to its first carrying qualified reference."""
    avail: dict[str, str] = {}
    parts: list[str] = []
    for child in children:
        cname = _check_ident(child.name)
        cols = _view_columns(child)
        if not parts:
            parts.append(f"Q{cname}")
        else:
            shared = [a for a in cols if a in avail]
            if shared:
                conds = " AND ".join(f"{avail[a]} = Q{cname}.{a}" for a in shared)
                parts.append(f"JOIN Q{cname} ON {conds}")
            else:
                parts.append(f"CROSS JOIN Q{cname}")
        for a in cols:
            avail.setdefault(a, f"Q{cname}.{a}")
    return " ".join(parts), avail


def _leaf_view(leaf: VariableNode) -> str:
    name = _check_ident(leaf.name)
    attrs = ", ".join(_check_ident(a) for a in leaf.key)
    return (
        f"CREATE VIEW Q{name} AS\n"
        f"  SELECT {attrs}, CAST('' AS text) AS {name}_lineage, "
        f"{name}_d AS {name}_deg, 1 AS {name}_agg\n"
        f"  FROM {name}, {name}_type;"
    )


def _inner_view(node: VariableNode) -> str:
    name = _check_ident(node.name)
    children = node.children
    from_clause, avail = _from_clause(children)

    select: list[str] = []
    for a in node.key:
        if a not in avail:
            raise SqlGenError(f"key attribute {a} of {name} not exposed by children")
        select.append(avail[a])

    lineage_cat = " || ".join(f"Q{c.name}.{c.name}_lineage" for c in children)
    select.append(
        f"{lineage_cat} || CASE WHEN {name}_d > 0 THEN "
        f"'(' || {name}_n || ',' || {name}_d || ')' ELSE '' END "
        f"AS {name}_lineage"
    )

    deg_sum = " + ".join(f"Q{c.name}.{c.name}_deg" for c in children) + f" + {name}_d"
    select.append(f"{deg_sum} AS {name}_deg")

    agg_prod = " * ".join(f"Q{c.name}.{c.name}_agg" for c in children)
    if node.categorical:
        value = "1"
    else:
        if name not in avail:
            raise SqlGenError(f"value attribute {name} not exposed by children")
        value = f"POWER(COALESCE({avail[name]}, 0), {name}_d)"
    select.append(f"SUM({value} * {agg_prod}) AS {name}_agg")

    group_by = [avail[a] for a in node.key] + [f"{name}_lineage", deg_sum]
    cols = ",\n    ".join(select)
    return (
        f"CREATE VIEW Q{name} AS\n"
        f"  SELECT {cols}\n"
        f"  FROM {from_clause}, {name}_type\n"
        f"  WHERE {deg_sum} <= 2\n"
        f"  GROUP BY {', '.join(group_by)};"
    )


def _root_table(root: VariableNode) -> str:
    name = _check_ident(root.name)
    children = root.children
    from_clause, _ = _from_clause(children)
    lineage = " || ".join(f"Q{c.name}.{c.name}_lineage" for c in children)
    deg = " + ".join(f"Q{c.name}.{c.name}_deg" for c in children)
    agg = " * ".join(f"Q{c.name}.{c.name}_agg" for c in children)
    return (
        f"CREATE TABLE Q{name} AS\n"
        f"  SELECT {lineage} AS lineage,\n"
        f"    {deg} AS deg,\n"
        f"    SUM({agg}) AS agg\n"
        f"  FROM {from_clause}\n"
        f"  WHERE {deg} <= 2\n"
        f"  GROUP BY {lineage}, {deg};"
    )


def emit_views(order: VariableNode) -> list[str]:
    """One aggregate view per node, children before parents; a table at the
    root so extraction reads stored rows."""
    if order.node_class is not NodeClass.INTERCEPT:
        raise SqlGenError("emit_views expects an extended order")
    stmts: list[str] = []
    for node in iter_post_order(order):
        if node.node_class is NodeClass.RELATION_LEAF:
            stmts.append(_leaf_view(node))
        elif node.node_class is NodeClass.VARIABLE:
            stmts.append(_inner_view(node))
        else:
            stmts.append(_root_table(node))
    return stmts


def emit_extraction(feature_order: FeatureOrder, root_name: str = "T") -> list[str]:
    """One SELECT per upper-triangle cofactor entry, addressed by lineage
    LIKE patterns against the root table."""
    table = f"Q{_check_ident(root_name)}"
    cols = (feature_order.label, *feature_order.features)
    for c in cols:
        _check_ident(c)
    stmts: list[str] = []
    names = (*cols, feature_order.intercept)
    n = feature_order.n
    for i in range(n + 1):
        for j in range(i, n + 1):
            a, b = names[i], names[j]
            if i == n and j == n:
                where = "deg = 0"
            elif j == n:
                where = f"deg = 1 AND lineage LIKE '%({a},1)%'"
            elif i == j:
                where = f"lineage LIKE '%({a},2)%'"
            else:
                where = f"lineage LIKE '%({a},1)%' AND lineage LIKE '%({b},1)%'"
            stmts.append(
                f"-- cofactor ({a}, {b})\n"
                f"SELECT agg FROM {table} WHERE {where};"
            )
    return stmts


def emit_pipeline(
    db: Database,
    order: VariableNode,
    feature_order: FeatureOrder,
    factors: ScaleFactors | None = None,
) -> SqlScript:
    """The full script: scaling, degree tables, views, extraction.

    `order` is the extended order over the base (unconverted) relation names;
    the emitted views and type tables reference the converted names, exactly
    as the in-memory pipeline repoints its leaves after scaling.
    """
    if order.node_class is not NodeClass.INTERCEPT:
        raise SqlGenError("emit_pipeline expects an extended order")
    if factors is None:
        factors = compute_scale_factors(db, order, feature_order)
    conv_order = rename_leaves(order, converted_names(db, factors))

    stmts = ["-- feature scaling: statistics probes and converted relations"]
    stmts += emit_scaling(db, order, factors)
    stmts.append("-- degree tables")
    stmts += emit_type_tables(conv_order)
    stmts.append("-- aggregate views, children before parents")
    stmts += emit_views(conv_order)
    stmts.append("-- cofactor extraction")
    stmts += emit_extraction(feature_order, conv_order.name)
    return SqlScript(tuple(stmts))
