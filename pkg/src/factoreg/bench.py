"""Synthetic schemas and the factorized-versus-materialized benchmark.

Two generated shapes:

* star: a fact table F(k1..kK, x0, y) and one dimension D_i(k_i, f_i) per
  join key. Each dimension stores `fanout` copies of every key, so the join
  has fact_rows * fanout^K rows while the factorized representation stays
  near the input size. Dimension features are functions of their key and the
  label is the exact linear form over [x0, f1..fK] plus optional noise, so
  with noise_sigma = 0 the planted model fits every join row exactly.

* retail: a three-relation chain/branch shape, Sales(P, S), Inventory(L, P, I)
  and Competition(L, C), label I, features S and C. Sales values depend only
  on P and Competition values only on L for the same exact-fit property. When
  asked for the default 5/5/4 rows the generator reuses the worked example's
  key multiplicities, whose join has exactly 18 rows.

Generation is a pure function of the parameters: one seeded PRNG, no
ambient state.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .cofactor import EvalStats, evaluate, extract_cofactor_matrix, join_count
from .gd import GdOptions, GdResult, Theta, bgd_cofactor, bgd_materialized
from .oracle import evaluate_errors, materialize_join
from .scaling import InterceptMode, rescale_theta, scale_database
from .storage import AttributeKind, Database, Relation, relation_from_rows
from .varorder import FeatureOrder, VariableNode, derive_keys, extend, variable

NUM = AttributeKind.NUMERIC
CAT = AttributeKind.CATEGORICAL


class BenchError(ValueError):
    pass


class SchemaKind(enum.Enum):
    RETAIL = "retail"
    STAR = "star"


@dataclass(frozen=True)
class GenParams:
    schema: SchemaKind = SchemaKind.STAR
    seed: int = 0
    # star shape
    k_dims: int = 3
    fact_rows: int = 1000
    fanout: int = 1
    # retail shape: (sales, inventory, competition) row counts
    retail_rows: tuple[int, int, int] = (5, 5, 4)
    # planted model over [features..., intercept]; None draws one
    theta_expected: tuple[float, ...] | None = None
    noise_sigma: float = 0.0


@dataclass(frozen=True)
class GenResult:
    db: Database
    order: VariableNode  # extended, over the base relation names
    feature_order: FeatureOrder
    theta_expected: Theta
    params: GenParams


# The worked micro-instance: identical key multiplicities give an 18-row join.
_RETAIL_SALES_P = (1, 1, 2, 2, 3)
_RETAIL_INV_LP = ((1, 1), (1, 1), (1, 2), (2, 2), (2, 3))
_RETAIL_COMP_L = (1, 1, 2, 2)


def retail_reference_database(values: str = "twice_index") -> Database:
    """The five-plus-five-plus-four row instance used throughout the tests.

    values='twice_index' assigns every element twice its index (s1=2, s2=4,
    ..., c4=8, locations and products included); values='unit' stores 1.0
    everywhere, which leaves only the join structure.
    """
    if values not in ("twice_index", "unit"):
        raise BenchError(f"unknown value scheme {values!r}")

    def elem(i: int) -> float:
        return 2.0 * i if values == "twice_index" else 1.0

    sales = [(elem(p), elem(i + 1)) for i, p in enumerate(_RETAIL_SALES_P)]
    inv = [(elem(l), elem(p), elem(i + 1)) for i, (l, p) in enumerate(_RETAIL_INV_LP)]
    comp = [(elem(l), elem(i + 1)) for i, l in enumerate(_RETAIL_COMP_L)]
    db = Database()
    db.add(relation_from_rows("Sales", [("P", NUM), ("S", NUM)], sales))
    db.add(relation_from_rows("Inventory", [("L", NUM), ("P", NUM), ("I", NUM)], inv))
    db.add(relation_from_rows("Competition", [("L", NUM), ("C", NUM)], comp))
    return db


def retail_core_order() -> VariableNode:
    return variable(
        "L",
        children=[
            variable("C", key=["L"]),
            variable(
                "P",
                key=["L"],
                children=[
                    variable("S", key=["P"]),
                    variable("I", key=["L", "P"]),
                ],
            ),
        ],
    )


def _draw_theta(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.uniform(-200.0, 200.0, size=n)


def _gen_retail(params: GenParams, rng: np.random.Generator) -> GenResult:
    n_s, n_i, n_c = params.retail_rows
    if min(n_s, n_i, n_c) < 1:
        raise BenchError("retail row counts must be positive")
    if params.retail_rows == (5, 5, 4):
        sales_p = np.array(_RETAIL_SALES_P)
        inv_lp = np.array(_RETAIL_INV_LP)
        comp_l = np.array(_RETAIL_COMP_L)
    else:
        n_p = max(1, n_s // 2)
        n_l = max(1, n_c // 2)
        sales_p = rng.integers(1, n_p + 1, size=n_s)
        inv_lp = np.column_stack(
            [rng.integers(1, n_l + 1, size=n_i), rng.integers(1, n_p + 1, size=n_i)]
        )
        comp_l = rng.integers(1, n_l + 1, size=n_c)

    n_p = int(max(sales_p.max(), inv_lp[:, 1].max()))
    n_l = int(max(comp_l.max(), inv_lp[:, 0].max()))
    s_of_p = rng.uniform(-100.0, 100.0, size=n_p + 1)
    c_of_l = rng.uniform(-50.0, 50.0, size=n_l + 1)

    theta = (
        np.asarray(params.theta_expected, dtype=np.float64)
        if params.theta_expected is not None
        else _draw_theta(rng, 3)
    )
    if theta.shape != (3,):
        raise BenchError("retail expects theta_expected of length 3: (S, C, intercept)")

    sales = [(float(p), float(s_of_p[p])) for p in sales_p]
    comp = [(float(l), float(c_of_l[l])) for l in comp_l]
    noise = rng.normal(0.0, params.noise_sigma, size=len(inv_lp)) if params.noise_sigma else np.zeros(len(inv_lp))
    inv = [
        (float(l), float(p), float(theta[0] * s_of_p[p] + theta[1] * c_of_l[l] + theta[2] + e))
        for (l, p), e in zip(inv_lp, noise)
    ]

    db = Database()
    db.add(relation_from_rows("Sales", [("P", NUM), ("S", NUM)], sales))
    db.add(relation_from_rows("Inventory", [("L", NUM), ("P", NUM), ("I", NUM)], inv))
    db.add(relation_from_rows("Competition", [("L", NUM), ("C", NUM)], comp))
    order = extend(retail_core_order(), db)
    fo = FeatureOrder(("I", "S", "C", "T"))
    theta_full = Theta(fo, np.concatenate([[-1.0], theta]))
    return GenResult(db, order, fo, theta_full, params)


def _gen_star(params: GenParams, rng: np.random.Generator) -> GenResult:
    k, m, fanout = params.k_dims, params.fact_rows, params.fanout
    if k < 1 or m < 1 or fanout < 1:
        raise BenchError("star needs k_dims, fact_rows and fanout all positive")

    n_feat = k + 1  # x0 plus one per dimension
    theta = (
        np.asarray(params.theta_expected, dtype=np.float64)
        if params.theta_expected is not None
        else _draw_theta(rng, n_feat + 1)
    )
    if theta.shape != (n_feat + 1,):
        raise BenchError(
            f"star with {k} dimensions expects theta_expected of length "
            f"{n_feat + 1}: (x0, f1..f{k}, intercept)"
        )

    n_keys = max(2, m // 10)
    key_names = [f"k{i}" for i in range(1, k + 1)]
    feat_names = [f"f{i}" for i in range(1, k + 1)]

    db = Database()
    fact_keys = []
    feat_of_key = []
    for i in range(k):
        scale = 10.0 ** (i % 4)
        f_vals = rng.uniform(-5.0 * scale, 5.0 * scale, size=n_keys)
        feat_of_key.append(f_vals)
        rows = []
        for kk in range(n_keys):
            for _ in range(fanout):
                rows.append((f"{key_names[i]}_{kk}", float(f_vals[kk])))
        db.add(
            relation_from_rows(
                f"D{i + 1}", [(key_names[i], CAT), (feat_names[i], NUM)], rows
            )
        )
        fact_keys.append(rng.integers(0, n_keys, size=m))

    x0 = rng.uniform(-10.0, 10.0, size=m)
    noise = rng.normal(0.0, params.noise_sigma, size=m) if params.noise_sigma else np.zeros(m)
    y = theta[0] * x0 + theta[-1] + noise
    for i in range(k):
        y = y + theta[i + 1] * feat_of_key[i][fact_keys[i]]

    fact_rows = []
    for r in range(m):
        row = [f"{key_names[i]}_{fact_keys[i][r]}" for i in range(k)]
        row += [float(x0[r]), float(y[r])]
        fact_rows.append(tuple(row))
    fact_schema = [(kn, CAT) for kn in key_names] + [("x0", NUM), ("y", NUM)]
    db.add(relation_from_rows("F", fact_schema, fact_rows))

    # chain of keys, each with its dimension feature branching off
    node = variable("y", children=[])
    node = variable("x0", children=[node])
    for i in reversed(range(k)):
        branch = variable(feat_names[i])
        node = variable(key_names[i], categorical=True, children=[node, branch])
    core = derive_keys(node, db)
    order = extend(core, db)
    fo = FeatureOrder(("y", "x0", *feat_names, "T"))
    theta_full = Theta(fo, np.concatenate([[-1.0], theta]))
    return GenResult(db, order, fo, theta_full, params)


def gen_synthetic(params: GenParams) -> GenResult:
    """Deterministic database + order + planted model for the parameters."""
    rng = np.random.default_rng(params.seed)
    if params.schema is SchemaKind.RETAIL:
        return _gen_retail(params, rng)
    return _gen_star(params, rng)


@dataclass
class ModeResult:
    mode: str
    wall_ms: float
    multiply_adds: int
    iterations: int
    converged: bool
    theta: Theta
    avg_abs_err: float
    avg_rel_err: float
    theta_rel_err: tuple[float, ...] | None = None

    def to_json(self) -> dict:
        out = {
            "mode": self.mode,
            "wall_ms": self.wall_ms,
            "multiply_adds": self.multiply_adds,
            "iterations": self.iterations,
            "converged": self.converged,
            "theta": [float(v) for v in self.theta.values],
            "avg_abs_err": self.avg_abs_err,
            "avg_rel_err": self.avg_rel_err,
        }
        if self.theta_rel_err is not None:
            out["theta_rel_err"] = list(self.theta_rel_err)
        return out


@dataclass
class BenchReport:
    join_rows: int
    factorized_rows: int
    modes: dict[str, ModeResult] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "join_rows": self.join_rows,
            "factorized_rows": self.factorized_rows,
            "modes": {k: v.to_json() for k, v in self.modes.items()},
        }


def _rel_err(theta: Theta, expected: Theta) -> tuple[float, ...]:
    out = []
    for a, b in zip(theta.values[1:], expected.values[1:]):
        denom = max(abs(b), 1e-12)
        out.append(abs(a - b) / denom)
    return tuple(out)


def run_bench(
    db: Database,
    order: VariableNode,
    feature_order: FeatureOrder,
    modes: tuple[str, ...] = ("fact", "nopre"),
    opts: GdOptions | None = None,
    theta_expected: Theta | None = None,
    intercept_mode: InterceptMode = InterceptMode.THETA_CONV,
    max_join_rows: int = 10_000_000,
) -> BenchReport:
    """Run each mode end-to-end (scaling, cofactors or join, descent,
    rescaling) and evaluate both models over the raw join via the oracle.

    Counter semantics: 'fact' counts aggregate-evaluation multiply-adds plus
    the per-iteration O(n^2) descent cost; 'nopre' counts the per-iteration
    O(m*n) scans. Join materialization itself performs no multiply-adds.
    """
    opts = opts or GdOptions()
    raw_join = materialize_join(db, order, max_rows=max_join_rows)
    report = BenchReport(join_rows=raw_join.n_rows, factorized_rows=0)

    for mode in modes:
        mode_l = mode.lower()
        if mode_l not in ("fact", "nopre"):
            raise BenchError(f"unknown mode {mode!r}")
        t0 = time.perf_counter()
        db2, order2, factors = scale_database(db, order, feature_order)
        if mode_l == "fact":
            stats = EvalStats()
            root = evaluate(db2, order2, stats)
            cof = extract_cofactor_matrix(root, feature_order, order2)
            gd: GdResult = bgd_cofactor(cof, opts)
            build_ops = stats.multiply_adds
            report.factorized_rows = stats.total_rows
        else:
            join_conv = materialize_join(db2, order2, max_rows=max_join_rows)
            gd = bgd_materialized(join_conv, feature_order, opts)
            build_ops = 0
        theta = rescale_theta(gd.theta, factors, intercept_mode)
        wall_ms = (time.perf_counter() - t0) * 1e3

        errs = evaluate_errors(theta, raw_join, feature_order)
        report.modes[mode_l] = ModeResult(
            mode=mode_l,
            wall_ms=wall_ms,
            multiply_adds=build_ops + gd.multiply_adds,
            iterations=gd.iterations,
            converged=gd.converged,
            theta=theta,
            avg_abs_err=errs.avg_abs,
            avg_rel_err=errs.avg_rel,
            theta_rel_err=_rel_err(theta, theta_expected) if theta_expected else None,
        )
    return report
