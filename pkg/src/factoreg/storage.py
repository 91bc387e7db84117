"""Column-oriented in-memory storage for normalized relations.

A Relation holds equal-length columns, each either numeric (float64) or
categorical (dictionary-encoded int64 codes). NULLs are represented with an
explicit per-column validity mask rather than NaN, so that a stored 0.0 and a
missing value stay distinguishable for joins and CSV round-trips. Aggregation
code coalesces missing numeric values to 0.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


class AttributeKind(enum.Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


class StorageError(ValueError):
    pass


@dataclass
class Column:
    """One attribute's values.

    Numeric columns keep data as float64 with 0.0 in invalid slots; categorical
    columns keep int64 codes into `labels` with -1 in invalid slots. `valid` is
    the authoritative NULL mask for both kinds.
    """

    kind: AttributeKind
    data: np.ndarray
    valid: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.data) != len(self.valid):
            raise StorageError("column data and validity mask differ in length")
        if self.kind is AttributeKind.CATEGORICAL and self.labels is None:
            raise StorageError("categorical column requires a label dictionary")

    def __len__(self) -> int:
        return len(self.data)

    def coalesced(self) -> np.ndarray:
        """Numeric values with NULL treated as 0.0."""
        if self.kind is not AttributeKind.NUMERIC:
            raise StorageError("coalesced() is only defined for numeric columns")
        out = np.where(self.valid, self.data, 0.0)
        return out.astype(np.float64, copy=False)

    def decode(self, i: int) -> float | str | None:
        if not self.valid[i]:
            return None
        if self.kind is AttributeKind.NUMERIC:
            return float(self.data[i])
        assert self.labels is not None
        return self.labels[int(self.data[i])]

    def take(self, idx: np.ndarray) -> "Column":
        return Column(self.kind, self.data[idx], self.valid[idx], self.labels)


def numeric_column(values: Iterable[float | None]) -> Column:
    vals = list(values)
    data = np.zeros(len(vals), dtype=np.float64)
    valid = np.ones(len(vals), dtype=bool)
    for i, v in enumerate(vals):
        if v is None:
            valid[i] = False
        else:
            data[i] = float(v)
    return Column(AttributeKind.NUMERIC, data, valid)


def categorical_column(values: Iterable[str | None]) -> Column:
    vals = list(values)
    labels: dict[str, int] = {}
    data = np.full(len(vals), -1, dtype=np.int64)
    valid = np.ones(len(vals), dtype=bool)
    for i, v in enumerate(vals):
        if v is None:
            valid[i] = False
        else:
            data[i] = labels.setdefault(v, len(labels))
    return Column(AttributeKind.CATEGORICAL, data, valid, tuple(labels))


@dataclass
class Relation:
    """A named relation with ordered attributes."""

    name: str
    schema: tuple[tuple[str, AttributeKind], ...]
    columns: dict[str, Column] = field(default_factory=dict)

    def __post_init__(self) -> None:
        names = [a for a, _ in self.schema]
        if len(set(names)) != len(names):
            raise StorageError(f"relation {self.name}: duplicate attribute names")
        if set(self.columns) != set(names):
            raise StorageError(f"relation {self.name}: columns do not match schema")
        lengths = {len(c) for c in self.columns.values()}
        if len(lengths) > 1:
            raise StorageError(f"relation {self.name}: ragged columns {lengths}")
        for attr, kind in self.schema:
            if self.columns[attr].kind is not kind:
                raise StorageError(
                    f"relation {self.name}: column {attr} kind mismatch"
                )

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(a for a, _ in self.schema)

    def kind_of(self, attr: str) -> AttributeKind:
        for a, k in self.schema:
            if a == attr:
                return k
        raise StorageError(f"relation {self.name} has no attribute {attr}")

    @property
    def n_rows(self) -> int:
        if not self.schema:
            return 0
        return len(self.columns[self.schema[0][0]])

    def __len__(self) -> int:
        return self.n_rows

    def row(self, i: int) -> tuple:
        return tuple(self.columns[a].decode(i) for a in self.attributes)

    def take(self, idx: np.ndarray) -> "Relation":
        cols = {a: self.columns[a].take(idx) for a in self.attributes}
        return Relation(self.name, self.schema, cols)


def relation_from_rows(
    name: str,
    schema: Sequence[tuple[str, AttributeKind]],
    rows: Iterable[Sequence],
) -> Relation:
    """Build a Relation from Python row tuples; None marks NULL."""
    schema = tuple(schema)
    rows = [tuple(r) for r in rows]
    for r in rows:
        if len(r) != len(schema):
            raise StorageError(f"relation {name}: row arity {len(r)} != {len(schema)}")
    cols: dict[str, Column] = {}
    for j, (attr, kind) in enumerate(schema):
        vals = [r[j] for r in rows]
        if kind is AttributeKind.NUMERIC:
            cols[attr] = numeric_column(vals)
        else:
            cols[attr] = categorical_column(
                [v if v is None else str(v) for v in vals]
            )
    return Relation(name, schema, cols)


@dataclass
class Database:
    """Catalog of relations by name."""

    relations: dict[str, Relation] = field(default_factory=dict)

    def add(self, rel: Relation, replace: bool = False) -> None:
        if rel.name in self.relations and not replace:
            raise StorageError(f"relation {rel.name} already in catalog")
        self.relations[rel.name] = rel

    def __getitem__(self, name: str) -> Relation:
        try:
            return self.relations[name]
        except KeyError:
            raise StorageError(f"unknown relation {name}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.relations

    def names(self) -> tuple[str, ...]:
        return tuple(self.relations)

    def copy(self) -> "Database":
        return Database(dict(self.relations))


@dataclass
class CsvOptions:
    delimiter: str = ","
    null_token: str = ""
    has_header: bool = True


def load_csv(
    path: str | Path,
    name: str,
    schema: Sequence[tuple[str, AttributeKind]],
    options: CsvOptions | None = None,
) -> Relation:
    """Load one relation from a CSV file against a declared schema.

    The header row, when present, must match the schema's attribute names in
    order. Cells equal to the null token become NULL. A numeric cell that does
    not parse raises with its line and column position.
    """
    opts = options or CsvOptions()
    schema = tuple(schema)
    path = Path(path)
    rows: list[tuple] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=opts.delimiter)
        for lineno, rec in enumerate(reader, start=1):
            if lineno == 1 and opts.has_header:
                expected = [a for a, _ in schema]
                if [c.strip() for c in rec] != expected:
                    raise StorageError(
                        f"{path}: header {rec!r} does not match schema {expected!r}"
                    )
                continue
            if len(rec) != len(schema):
                raise StorageError(
                    f"{path}:{lineno}: expected {len(schema)} fields, got {len(rec)}"
                )
            parsed: list = []
            for col, ((attr, kind), cell) in enumerate(zip(schema, rec), start=1):
                if cell == opts.null_token:
                    parsed.append(None)
                elif kind is AttributeKind.NUMERIC:
                    try:
                        parsed.append(float(cell))
                    except ValueError:
                        raise StorageError(
                            f"{path}:{lineno}:{col}: bad numeric value {cell!r} "
                            f"for attribute {attr}"
                        ) from None
                else:
                    parsed.append(cell)
            rows.append(tuple(parsed))
    return relation_from_rows(name, schema, rows)


def _format_numeric(v: float) -> str:
    # repr keeps round-trip fidelity; integers print without the trailing .0
    if np.isfinite(v) and v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


def write_csv(rel: Relation, path: str | Path, options: CsvOptions | None = None) -> None:
    opts = options or CsvOptions()
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter=opts.delimiter, lineterminator="\n")
        if opts.has_header:
            writer.writerow(rel.attributes)
        for i in range(rel.n_rows):
            out = []
            for attr in rel.attributes:
                v = rel.columns[attr].decode(i)
                if v is None:
                    out.append(opts.null_token)
                elif isinstance(v, float):
                    out.append(_format_numeric(v))
                else:
                    out.append(v)
            writer.writerow(out)


def union_column(
    db: Database, attr: str, relation_names: Sequence[str]
) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate one numeric attribute across relations (bag semantics).

    Returns (values, valid) where values holds 0.0 in invalid slots. Order
    follows the given relation sequence, rows in relation order.
    """
    vals: list[np.ndarray] = []
    masks: list[np.ndarray] = []
    for rname in relation_names:
        rel = db[rname]
        if attr not in rel.attributes:
            raise StorageError(f"relation {rname} has no attribute {attr}")
        col = rel.columns[attr]
        if col.kind is not AttributeKind.NUMERIC:
            raise StorageError(f"attribute {attr} of {rname} is not numeric")
        vals.append(col.coalesced())
        masks.append(col.valid.copy())
    if not vals:
        return np.zeros(0, dtype=np.float64), np.zeros(0, dtype=bool)
    return np.concatenate(vals), np.concatenate(masks)
