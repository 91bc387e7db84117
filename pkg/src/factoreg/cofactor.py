"""Factorized computation of the regression cofactor matrix.

The cofactor matrix of a join holds every degree-two sum aggregate
sum(x_k * x_j) over the join result, plus the first-degree sums and the row
count. Training batch gradient descent only needs these aggregates, never the
join itself. This module computes them bottom-up over an extended variable
order: each relation leaf yields a table of its rows with aggregate 1, and
each variable node joins its children's tables, multiplies in its own value at
degrees 0, 1 and 2, and regroups by its key. Group counts stay proportional to
the factorized representation, not to the join size.

Every partial aggregate is tagged with a lineage: the multiset of
(variable, degree) pairs it carries, capped at total degree 2. Lineages are
kept canonical (sorted by variable name), so one lineage names one aggregate
regardless of the evaluation order that produced it.

The multiply-add counter records the work the in-memory engine actually does:
one multiply per joined row (aggregate product), one per degree-1 contribution
and two per degree-2 contribution of a numeric variable, and one add per row
folded into a group sum. Categorical contributions multiply by one and are not
counted.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .storage import AttributeKind, Column, Database
from .varorder import (
    FeatureOrder,
    NodeClass,
    VariableNode,
    validate_feature_order,
)

Lineage = tuple[tuple[str, int], ...]

EMPTY_LINEAGE: Lineage = ()


class EvalError(ValueError):
    pass


def lineage_merge(a: Lineage, b: Lineage, cap: int = 2) -> Lineage | None:
    """Combine two lineages, summing degrees of shared variables.

    Returns None when any single variable's degree would exceed the cap.
    The caller separately filters on total degree.
    """
    degs: dict[str, int] = dict(a)
    for var, d in b:
        degs[var] = degs.get(var, 0) + d
        if degs[var] > cap:
            return None
    return tuple(sorted(degs.items()))


def lineage_add(lin: Lineage, var: str, d: int) -> Lineage | None:
    return lineage_merge(lin, ((var, d),))


def total_degree(lin: Lineage) -> int:
    return sum(d for _, d in lin)


def lineage_text(lin: Lineage) -> str:
    """Concatenated rendering, e.g. '(C,1)(S,1)'."""
    return "".join(f"({v},{d})" for v, d in lin)


def _row_group_ids(
    cols: Sequence[np.ndarray], n_rows: int
) -> tuple[np.ndarray, np.ndarray]:
    """Group identity over parallel int64 code columns.

    Returns (group_id per row, first-occurrence row index per group). Group
    numbering follows the lexicographic byte order of the codes, which is
    deterministic for fixed inputs.
    """
    if n_rows == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if not cols:
        return np.zeros(n_rows, dtype=np.int64), np.zeros(1, dtype=np.int64)
    mat = np.ascontiguousarray(np.column_stack([c.astype(np.int64) for c in cols]))
    view = mat.view([("", np.int64)] * mat.shape[1]).ravel()
    _, first, inverse = np.unique(view, return_index=True, return_inverse=True)
    return inverse.astype(np.int64), first.astype(np.int64)


def _group_codes(col: Column) -> np.ndarray:
    """Per-column int64 codes for grouping; NULL maps to -1 (one NULL group)."""
    if col.kind is AttributeKind.CATEGORICAL:
        codes = col.data.astype(np.int64, copy=True)
        codes[~col.valid] = -1
        return codes
    vals = col.data.astype(np.float64, copy=False)
    uniq = np.unique(vals[col.valid])
    codes = np.searchsorted(uniq, vals).astype(np.int64)
    codes[~col.valid] = -1
    return codes


def _harmonized_codes(a: Column, b: Column) -> tuple[np.ndarray, np.ndarray]:
    """Codes comparable across two columns of the same attribute; NULL -> -1."""
    if a.kind is not b.kind:
        raise EvalError("join attribute typed numeric on one side, categorical on the other")
    if a.kind is AttributeKind.CATEGORICAL:
        assert a.labels is not None and b.labels is not None
        combined: dict[str, int] = {}
        for lbl in a.labels + b.labels:
            combined.setdefault(lbl, len(combined))
        lut_a = np.array([combined[l] for l in a.labels] or [0], dtype=np.int64)
        lut_b = np.array([combined[l] for l in b.labels] or [0], dtype=np.int64)
        ca = np.where(a.valid, lut_a[np.where(a.valid, a.data, 0)], -1)
        cb = np.where(b.valid, lut_b[np.where(b.valid, b.data, 0)], -1)
        return ca.astype(np.int64), cb.astype(np.int64)
    uniq = np.unique(np.concatenate([a.data[a.valid], b.data[b.valid]]))
    ca = np.searchsorted(uniq, a.data).astype(np.int64)
    cb = np.searchsorted(uniq, b.data).astype(np.int64)
    ca[~a.valid] = -1
    cb[~b.valid] = -1
    return ca, cb


@dataclass
class EvalStats:
    """Operation and size accounting for one evaluation."""

    multiply_adds: int = 0
    node_rows: dict[str, int] = field(default_factory=dict)

    @property
    def total_rows(self) -> int:
        return sum(self.node_rows.values())


@dataclass
class AggregateTable:
    """Partial aggregates for one node, grouped by its key.

    Parallel arrays: row i carries key values key_cols[a].data[i], lineage
    lineages[lin[i]], total degree deg[i] and the summed aggregate agg[i].
    """

    name: str
    key_attrs: tuple[str, ...]
    key_cols: dict[str, Column]
    lineages: list[Lineage]
    lin: np.ndarray
    deg: np.ndarray
    agg: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.agg)
        if not (len(self.lin) == len(self.deg) == n):
            raise EvalError(f"table {self.name}: ragged row arrays")
        for a in self.key_attrs:
            if len(self.key_cols[a]) != n:
                raise EvalError(f"table {self.name}: key column {a} length mismatch")
        if n and int(self.deg.max(initial=0)) > 2:
            raise EvalError(f"table {self.name}: degree above 2 present")

    @property
    def n_rows(self) -> int:
        return len(self.agg)

    def rows(self) -> Iterator[tuple[dict, Lineage, int, float]]:
        """Decoded rows for inspection: (key values, lineage, degree, aggregate)."""
        for i in range(self.n_rows):
            keys = {a: self.key_cols[a].decode(i) for a in self.key_attrs}
            yield keys, self.lineages[int(self.lin[i])], int(self.deg[i]), float(self.agg[i])

    def aggregate(self, lin: Lineage) -> float:
        """Sum of rows carrying one lineage (keyless tables: the aggregate)."""
        want = tuple(sorted(lin))
        out = 0.0
        for i in range(self.n_rows):
            if self.lineages[int(self.lin[i])] == want:
                out += float(self.agg[i])
        return out


@dataclass
class _Joined:
    """Ungrouped working set while a node's children are being combined."""

    cols: dict[str, Column]
    lineages: list[Lineage]
    lin: np.ndarray
    deg: np.ndarray
    agg: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.agg)


def _as_joined(t: AggregateTable) -> _Joined:
    return _Joined(dict(t.key_cols), list(t.lineages), t.lin, t.deg, t.agg)


def _compact_lineages(
    lineages: list[Lineage], lin: np.ndarray
) -> tuple[list[Lineage], np.ndarray]:
    if len(lin) == 0:
        return [], lin.astype(np.int64)
    used = np.unique(lin)
    remap = {int(old): i for i, old in enumerate(used)}
    new_list = [lineages[int(old)] for old in used]
    lut = np.zeros(int(used.max()) + 1, dtype=np.int64)
    for old, new in remap.items():
        lut[old] = new
    return new_list, lut[lin]


def _join_pair(left: _Joined, right: _Joined, stats: EvalStats) -> _Joined:
    """Natural join on shared attributes; NULL keys never match.

    The smaller side is used as the build side. Row order follows the probe
    side, matches within a key group in build-side row order, which keeps the
    result deterministic for fixed inputs.
    """
    shared = [a for a in left.cols if a in right.cols]

    ml, mr = left.n_rows, right.n_rows
    if not shared:
        # cross product, probe side = left
        left_idx = np.repeat(np.arange(ml, dtype=np.int64), mr)
        right_idx = np.tile(np.arange(mr, dtype=np.int64), ml)
    else:
        codes_l, codes_r = [], []
        for a in shared:
            ca, cb = _harmonized_codes(left.cols[a], right.cols[a])
            codes_l.append(ca)
            codes_r.append(cb)
        ok_l = np.ones(ml, dtype=bool)
        for c in codes_l:
            ok_l &= c >= 0
        ok_r = np.ones(mr, dtype=bool)
        for c in codes_r:
            ok_r &= c >= 0
        idx_l = np.flatnonzero(ok_l)
        idx_r = np.flatnonzero(ok_r)
        joint = [
            np.concatenate([cl[idx_l], cr[idx_r]])
            for cl, cr in zip(codes_l, codes_r)
        ]
        gids, _ = _row_group_ids(joint, len(idx_l) + len(idx_r))
        g_l, g_r = gids[: len(idx_l)], gids[len(idx_l):]

        if len(idx_r) <= len(idx_l):
            probe_g, build_g, probe_map, build_map = g_l, g_r, idx_l, idx_r
            probe_is_left = True
        else:
            probe_g, build_g, probe_map, build_map = g_r, g_l, idx_r, idx_l
            probe_is_left = False

        order_b = np.argsort(build_g, kind="stable")
        sorted_b = build_g[order_b]
        lo = np.searchsorted(sorted_b, probe_g, side="left")
        hi = np.searchsorted(sorted_b, probe_g, side="right")
        counts = hi - lo
        total = int(counts.sum())
        probe_rep = np.repeat(np.arange(len(probe_g), dtype=np.int64), counts)
        starts = np.repeat(lo, counts)
        offs = np.arange(total, dtype=np.int64) - np.repeat(
            np.cumsum(counts) - counts, counts
        )
        build_pos = order_b[starts + offs]
        if probe_is_left:
            left_idx = probe_map[probe_rep]
            right_idx = build_map[build_pos]
        else:
            left_idx = build_map[build_pos]
            right_idx = probe_map[probe_rep]

    deg = left.deg[left_idx] + right.deg[right_idx]
    # overflow propagates as inf/nan in the aggregates; training reports it
    with np.errstate(over="ignore", invalid="ignore"):
        agg = left.agg[left_idx] * right.agg[right_idx]
    stats.multiply_adds += len(agg)

    # merge lineage pairs, dropping rows whose combination exceeds degree 2
    pair_l = left.lin[left_idx]
    pair_r = right.lin[right_idx]
    pair_gid, pair_first = _row_group_ids([pair_l, pair_r], len(agg))
    merged: list[Lineage] = []
    merged_id = np.empty(len(pair_first), dtype=np.int64)
    seen: dict[Lineage, int] = {}
    ok_pair = np.ones(len(pair_first), dtype=bool)
    for p, row in enumerate(pair_first):
        combo = lineage_merge(
            left.lineages[int(pair_l[row])], right.lineages[int(pair_r[row])]
        )
        if combo is None:
            ok_pair[p] = False
            merged_id[p] = 0
            continue
        merged_id[p] = seen.setdefault(combo, len(seen))
        if merged_id[p] == len(merged):
            merged.append(combo)

    keep = ok_pair[pair_gid] & (deg <= 2)
    left_idx = left_idx[keep]
    right_idx = right_idx[keep]

    cols = {a: c.take(left_idx) for a, c in left.cols.items()}
    for a, c in right.cols.items():
        if a not in cols:
            cols[a] = c.take(right_idx)

    return _Joined(
        cols,
        merged,
        merged_id[pair_gid[keep]],
        deg[keep],
        agg[keep],
    )


def _group(
    name: str,
    work: _Joined,
    out_keys: tuple[str, ...],
    stats: EvalStats,
) -> AggregateTable:
    codes = [_group_codes(work.cols[a]) for a in out_keys]
    codes.append(work.lin.astype(np.int64))
    codes.append(work.deg.astype(np.int64))
    gid, first = _row_group_ids(codes, work.n_rows)
    n_groups = len(first)
    agg = np.bincount(gid, weights=work.agg, minlength=n_groups)
    stats.multiply_adds += work.n_rows
    key_cols = {a: work.cols[a].take(first) for a in out_keys}
    lineages, lin = _compact_lineages(work.lineages, work.lin[first])
    table = AggregateTable(
        name,
        out_keys,
        key_cols,
        lineages,
        lin,
        work.deg[first].astype(np.int64),
        agg.astype(np.float64),
    )
    stats.node_rows[name] = table.n_rows
    return table


def eval_leaf(
    leaf: VariableNode, db: Database, stats: EvalStats | None = None
) -> AggregateTable:
    """Relation rows as an aggregate table: empty lineage, degree 0, aggregate 1."""
    if leaf.node_class is not NodeClass.RELATION_LEAF:
        raise EvalError(f"{leaf.name} is not a relation leaf")
    stats = stats if stats is not None else EvalStats()
    rel = db[leaf.name]
    if set(leaf.key) != set(rel.attributes):
        raise EvalError(
            f"leaf {leaf.name}: key {leaf.key} does not match relation "
            f"attributes {rel.attributes}"
        )
    n = rel.n_rows
    table = AggregateTable(
        leaf.name,
        tuple(leaf.key),
        {a: rel.columns[a] for a in leaf.key},
        [EMPTY_LINEAGE],
        np.zeros(n, dtype=np.int64),
        np.zeros(n, dtype=np.int64),
        np.ones(n, dtype=np.float64),
    )
    stats.node_rows[leaf.name] = n
    return table


def eval_inner(
    node: VariableNode,
    child_tables: Sequence[AggregateTable],
    db: Database | None = None,
    stats: EvalStats | None = None,
) -> AggregateTable:
    """Join the children, expand this variable at degrees 0..2, regroup by key.

    A numeric variable contributes pow(coalesce(x, 0), d); a categorical one
    contributes 1 at every degree. Rows whose total degree would exceed 2 are
    dropped before grouping.
    """
    if node.node_class is not NodeClass.VARIABLE:
        raise EvalError(f"{node.name} is not a variable node")
    if not child_tables:
        raise EvalError(f"variable {node.name} has no child tables")
    stats = stats if stats is not None else EvalStats()

    work = _as_joined(child_tables[0])
    for t in child_tables[1:]:
        work = _join_pair(work, _as_joined(t), stats)

    if node.name not in work.cols:
        raise EvalError(
            f"value attribute {node.name} absent from all child tables"
        )
    missing = [a for a in node.key if a not in work.cols]
    if missing:
        raise EvalError(
            f"key attributes {missing} of {node.name} absent from child tables"
        )

    xcol = work.cols[node.name]
    if node.categorical:
        x1 = None
    else:
        if xcol.kind is not AttributeKind.NUMERIC:
            raise EvalError(
                f"variable {node.name} is typed categorical in storage but "
                f"not flagged categorical in the order"
            )
        x1 = xcol.coalesced()

    lineages = list(work.lineages)
    add1 = np.empty(len(lineages), dtype=np.int64)
    add2 = np.empty(len(lineages), dtype=np.int64)
    seen = {l: i for i, l in enumerate(lineages)}
    for i, l in enumerate(work.lineages):
        for d, slot in ((1, add1), (2, add2)):
            combo = lineage_add(l, node.name, d)
            if combo is None:
                slot[i] = -1
                continue
            slot[i] = seen.setdefault(combo, len(seen))
            if slot[i] == len(lineages):
                lineages.append(combo)

    blocks_lin: list[np.ndarray] = []
    blocks_deg: list[np.ndarray] = []
    blocks_agg: list[np.ndarray] = []
    blocks_idx: list[np.ndarray] = []
    all_idx = np.arange(work.n_rows, dtype=np.int64)

    # d = 0: pass-through
    blocks_lin.append(work.lin)
    blocks_deg.append(work.deg)
    blocks_agg.append(work.agg)
    blocks_idx.append(all_idx)

    # d = 1
    sel = np.flatnonzero((work.deg <= 1) & (add1[work.lin] >= 0))
    if x1 is None:
        agg1 = work.agg[sel]
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            agg1 = work.agg[sel] * x1[sel]
        stats.multiply_adds += len(sel)
    blocks_lin.append(add1[work.lin[sel]])
    blocks_deg.append(work.deg[sel] + 1)
    blocks_agg.append(agg1)
    blocks_idx.append(sel)

    # d = 2
    sel = np.flatnonzero((work.deg == 0) & (add2[work.lin] >= 0))
    if x1 is None:
        agg2 = work.agg[sel]
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            agg2 = work.agg[sel] * (x1[sel] * x1[sel])
        stats.multiply_adds += 2 * len(sel)
    blocks_lin.append(add2[work.lin[sel]])
    blocks_deg.append(work.deg[sel] + 2)
    blocks_agg.append(agg2)
    blocks_idx.append(sel)

    idx = np.concatenate(blocks_idx)
    expanded = _Joined(
        {a: c.take(idx) for a, c in work.cols.items()},
        lineages,
        np.concatenate(blocks_lin).astype(np.int64),
        np.concatenate(blocks_deg).astype(np.int64),
        np.concatenate(blocks_agg).astype(np.float64),
    )
    return _group(node.name, expanded, tuple(node.key), stats)


def eval_root(
    intercept: VariableNode,
    child_tables: Sequence[AggregateTable],
    stats: EvalStats | None = None,
) -> AggregateTable:
    """Combine keyless child tables; no value is multiplied in at the root."""
    if intercept.node_class is not NodeClass.INTERCEPT:
        raise EvalError(f"{intercept.name} is not an intercept node")
    if not child_tables:
        raise EvalError("intercept has no child tables")
    for t in child_tables:
        if t.key_attrs:
            raise EvalError(
                f"child table {t.name} of the intercept still carries keys "
                f"{t.key_attrs}"
            )
    stats = stats if stats is not None else EvalStats()
    work = _as_joined(child_tables[0])
    for t in child_tables[1:]:
        work = _join_pair(work, _as_joined(t), stats)
    return _group(intercept.name, work, (), stats)


def evaluate(
    db: Database, order: VariableNode, stats: EvalStats | None = None
) -> AggregateTable:
    """Bottom-up evaluation of an extended order; returns the root table."""
    stats = stats if stats is not None else EvalStats()

    def rec(node: VariableNode) -> AggregateTable:
        if node.node_class is NodeClass.RELATION_LEAF:
            return eval_leaf(node, db, stats)
        children = [rec(c) for c in node.children]
        if node.node_class is NodeClass.VARIABLE:
            return eval_inner(node, children, db, stats)
        return eval_root(node, children, stats)

    return rec(order)


def join_count(root_table: AggregateTable) -> float:
    """Row count of the (unmaterialized) join: the degree-0 aggregate."""
    return root_table.aggregate(EMPTY_LINEAGE)


@dataclass
class CofactorMatrix:
    """Symmetric matrix of join aggregates in feature-order layout.

    Column 0 is the label, columns 1..n-1 the features, column n the
    intercept. entry[k, j] = sum over join rows of x_k * x_j, with the
    intercept behaving as the constant 1, so entry[n, n] is the join size m.
    """

    feature_order: FeatureOrder
    entries: np.ndarray
    m: float

    def __post_init__(self) -> None:
        n1 = self.feature_order.n + 1
        if self.entries.shape != (n1, n1):
            raise EvalError(
                f"cofactor matrix shape {self.entries.shape}, expected {(n1, n1)}"
            )
        # equal_nan: overflowed entries mirror as nan and are still symmetric
        if not np.array_equal(self.entries, self.entries.T, equal_nan=True):
            raise EvalError("cofactor matrix must be exactly symmetric")
        if self.entries[n1 - 1, n1 - 1] != self.m:
            raise EvalError("intercept/intercept entry must equal m")

    def entry(self, a: str, b: str) -> float:
        return float(
            self.entries[self.feature_order.index(a), self.feature_order.index(b)]
        )

    def __add__(self, other: "CofactorMatrix") -> "CofactorMatrix":
        if self.feature_order != other.feature_order:
            raise EvalError("cofactor matrices over different feature orders")
        return CofactorMatrix(
            self.feature_order, self.entries + other.entries, self.m + other.m
        )


def extract_cofactor_matrix(
    root_table: AggregateTable,
    feature_order: FeatureOrder,
    order: VariableNode | None = None,
) -> CofactorMatrix:
    """Read the requested matrix out of the root table's lineages.

    Variables outside the feature order are simply not read; dropping columns
    requires no re-evaluation. An empty root table (empty join) yields the
    zero matrix with m = 0 and a warning.
    """
    if order is not None:
        problems = validate_feature_order(feature_order, order)
        if problems:
            raise EvalError("; ".join(problems))

    by_lineage: dict[tuple[Lineage, int], float] = {}
    seen_vars: set[str] = set()
    for i in range(root_table.n_rows):
        l = root_table.lineages[int(root_table.lin[i])]
        by_lineage[(l, int(root_table.deg[i]))] = float(root_table.agg[i])
        for v, _ in l:
            seen_vars.add(v)

    if root_table.n_rows == 0:
        warnings.warn("empty join: cofactor matrix is all zeros with m = 0")
    elif order is None:
        for name in (feature_order.label, *feature_order.features):
            if name not in seen_vars:
                raise EvalError(
                    f"column {name} appears in no lineage and no order was "
                    f"given to vouch for it"
                )

    n = feature_order.n
    cols = (feature_order.label, *feature_order.features)
    entries = np.zeros((n + 1, n + 1), dtype=np.float64)
    m = by_lineage.get((EMPTY_LINEAGE, 0), 0.0)
    entries[n, n] = m
    for i, a in enumerate(cols):
        entries[i, n] = entries[n, i] = by_lineage.get((((a, 1),), 1), 0.0)
        entries[i, i] = by_lineage.get((((a, 2),), 2), 0.0)
        for j in range(i + 1, n):
            b = cols[j]
            key = tuple(sorted(((a, 1), (b, 1))))
            entries[i, j] = entries[j, i] = by_lineage.get((key, 2), 0.0)
    return CofactorMatrix(feature_order, entries, m)
