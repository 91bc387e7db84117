"""Acceptance gate: every criterion at its stated tolerance, one line each.

Each test prints a single PASS/FAIL line (bypassing capture so the lines
appear in piped output) and then asserts. A failing criterion is reported
with its measured values rather than a loosened threshold.
"""

import time
import warnings

import numpy as np
import pytest

from factoreg.bench import (
    GenParams,
    SchemaKind,
    retail_core_order,
    retail_reference_database,
    gen_synthetic,
    run_bench,
)
from factoreg.cofactor import EvalStats, evaluate, extract_cofactor_matrix
from factoreg.gd import GdOptions, design_matrix
from factoreg.oracle import brute_cofactors, materialize_join, ridge_solution
from factoreg.pipeline import prepare, train
from factoreg.scaling import (
    apply_scaling,
    compute_scale_factors,
    rescale_theta,
    scale_database,
)
from factoreg.sqlgen import emit_pipeline
from factoreg.varorder import FeatureOrder, extend

from randgen import random_instance
from test_sqlgen import GOLDEN_DIR, normalize, snowflake_job, star_job

# worked example: five rows, coefficients far apart in magnitude
X1_SCALED = [0.2, 0.6, -1.0, -0.2, 0.4]
X2_SCALED = [0.965, -0.035, -1.01, 0.465, -0.385]
THETA1_TARGET = 200.0
THETA2_TARGET = 0.1


@pytest.fixture
def reporter(capsys):
    """One visible PASS/FAIL line per criterion, past pytest's capture."""

    def _report(num: int, ok: bool, detail: str) -> str:
        line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}: {detail}"
        with capsys.disabled():
            print(line, flush=True)
        return line

    return _report


def _retail_matrix():
    db = retail_reference_database("twice_index")
    order = extend(retail_core_order(), db)
    fo = FeatureOrder(("I", "S", "C", "T"))
    root = evaluate(db, order, EvalStats())
    return extract_cofactor_matrix(root, fo, order), db, order, fo


def test_criterion_01_join_cardinality_without_materializing(reporter):
    t0 = time.perf_counter()
    cof, db, order, _ = _retail_matrix()
    wall = time.perf_counter() - t0
    oracle_rows = materialize_join(db, order).n_rows
    ok = cof.m == 18.0 and cof.m == oracle_rows and wall < 1.0
    line = reporter(1, ok, f"reference join count m = {cof.m:g} "
                          f"(want 18 exact, oracle join has {oracle_rows} rows) "
                          f"in {wall * 1e3:.1f} ms (budget 1 s)")
    assert ok, line


def test_criterion_02_reference_cofactor_entry(reporter):
    cof, _, _, _ = _retail_matrix()
    got = cof.entry("S", "C")
    ok = got == 492.0 and cof.entry("C", "S") == 492.0
    line = reporter(2, ok, f"Cof(S,C) = {got:g} (want 492 exact)")
    assert ok, line


def test_criterion_03_worked_example_scaling_and_recovery(
    reporter, micro_db, micro_order, micro_fo
):
    factors = compute_scale_factors(micro_db, micro_order, micro_fo)
    conv = apply_scaling(micro_db, factors)["R_conv"]
    col_dev = max(
        max(abs(g - w) for g, w in zip(conv.columns["x1"].data, X1_SCALED)),
        max(abs(g - w) for g, w in zip(conv.columns["x2"].data, X2_SCALED)),
    )
    cols_ok = col_dev <= 1e-12

    rep = train(micro_db, micro_order, micro_fo)
    _, t1, t2, t0c = rep.theta.values
    d1 = abs(t1 - THETA1_TARGET) / THETA1_TARGET
    d2 = abs(t2 - THETA2_TARGET) / THETA2_TARGET
    bound0 = 0.02 * abs(factors.avg["y"])
    theta_ok = d1 <= 0.02 and d2 <= 0.02 and abs(t0c) <= bound0
    ok = cols_ok and theta_ok
    line = reporter(
        3,
        ok,
        f"scaled columns dev {col_dev:.1e} (tol 1e-12); "
        f"theta1 {t1:.6f} off {d1 * 100:.2f}% (tol 2%), "
        f"theta2 {t2:.9f} off {d2 * 100:.2f}% (tol 2%), "
        f"theta0 {t0c:.6f} (bound {bound0:.3f})",
    )
    assert ok, line


def test_criterion_04_random_corpus_matches_brute_force(reporter):
    t0 = time.perf_counter()
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for seed in range(200):
            inst = random_instance(seed)
            root = evaluate(inst.db, inst.order, EvalStats())
            f = extract_cofactor_matrix(root, inst.feature_order, inst.order)
            join = materialize_join(inst.db, inst.order, force=True)
            b = brute_cofactors(join, inst.feature_order)
            assert f.m == b.m, f"seed {seed}: m {f.m} vs {b.m}"
            tol = np.maximum(1e-12, 1e-9 * np.abs(b.entries))
            dev = np.abs(f.entries - b.entries)
            worst = max(worst, float((dev / tol).max()))
    wall = time.perf_counter() - t0
    ok = worst <= 1.0 and wall < 120.0
    line = reporter(
        4,
        ok,
        f"200 random schemas vs materialized join: worst dev "
        f"{worst:.2e} of tolerance max(1e-12, 1e-9|b|) in {wall:.1f} s "
        f"(budget 120 s)",
    )
    assert ok, line


def test_criterion_05_matrix_invariants_over_corpus(reporter):
    sym_ok = True
    add_ok = True
    proj_ok = True
    worst_add = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for seed in range(12):
            inst = random_instance(seed)
            fo = inst.feature_order
            root = evaluate(inst.db, inst.order, EvalStats())
            whole = extract_cofactor_matrix(root, fo, inst.order)

            # symmetry is exact, not merely within tolerance
            sym_ok = sym_ok and bool(np.array_equal(whole.entries, whole.entries.T))

            # partition the widest relation's rows; cofactors must add
            name = max(inst.db.names(), key=lambda r: inst.db[r].n_rows)
            rel = inst.db[name]
            half = rel.n_rows // 2
            parts = []
            for idx in (np.arange(half), np.arange(half, rel.n_rows)):
                db_part = inst.db.copy()
                db_part.add(rel.take(idx), replace=True)
                part_root = evaluate(db_part, inst.order, EvalStats())
                parts.append(extract_cofactor_matrix(part_root, fo, inst.order))
            summed = parts[0] + parts[1]
            add_dev = np.abs(summed.entries - whole.entries)
            add_tol = np.maximum(1e-12, 1e-9 * np.abs(whole.entries))
            worst_add = max(worst_add, float((add_dev / add_tol).max()))
            add_ok = add_ok and bool((add_dev <= add_tol).all())
            add_ok = add_ok and summed.m == whole.m

            # dropping the last feature reads the exact submatrix
            if len(fo.features) >= 2:
                small = FeatureOrder(
                    (fo.label, *fo.features[:-1], fo.intercept)
                )
                reduced = extract_cofactor_matrix(root, small, inst.order)
                keep = [fo.index(a) for a in small.entries]
                proj_ok = proj_ok and bool(
                    np.array_equal(
                        reduced.entries, whole.entries[np.ix_(keep, keep)]
                    )
                )

    ok = sym_ok and add_ok and proj_ok
    line = reporter(
        5,
        ok,
        f"over 12 random schemas: symmetry exact {sym_ok}; row-partition "
        f"additivity worst dev {worst_add:.2e} of tolerance "
        f"max(1e-12, 1e-9|whole|) {add_ok}; projection submatrix exact "
        f"{proj_ok}",
    )
    assert ok, line


def test_criterion_06_gradient_identity(reporter):
    instances = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for seed in range(8):
            inst = random_instance(seed)
            instances.append((inst.db, inst.order, inst.feature_order))
    gen = gen_synthetic(
        GenParams(schema=SchemaKind.STAR, seed=11, k_dims=2, fact_rows=50, fanout=1)
    )
    instances.append((gen.db, prepare(gen.db, gen.order, gen.feature_order),
                      gen.feature_order))

    rng = np.random.default_rng(0)
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for db, order, fo in instances:
            root = evaluate(db, order, EvalStats())
            cof = extract_cofactor_matrix(root, fo, order)
            x = design_matrix(materialize_join(db, order, force=True), fo)
            for _ in range(50):
                theta = rng.normal(size=cof.entries.shape[0])
                via_cof = cof.entries @ theta
                via_rows = x.T @ (x @ theta)
                dev = np.abs(via_cof - via_rows) / np.maximum(
                    1.0, np.abs(via_rows)
                )
                worst = max(worst, float(dev.max()))
    ok = worst <= 1e-9
    line = reporter(
        6,
        ok,
        f"cofactor gradient equals row-scan gradient, 50 random points on "
        f"each of {len(instances)} instances: worst relative dev "
        f"{worst:.2e} (tol 1e-9)",
    )
    assert ok, line


def test_criterion_07_both_routes_agree(reporter):
    gen = gen_synthetic(
        GenParams(schema=SchemaKind.STAR, seed=4, k_dims=2, fact_rows=80, fanout=2)
    )
    rep = run_bench(gen.db, gen.order, gen.feature_order)
    tf = rep.modes["fact"].theta.values
    tn = rep.modes["nopre"].theta.values
    dev = float(np.abs(np.asarray(tf) - np.asarray(tn)).max())
    ok = dev <= 1e-6
    line = reporter(
        7,
        ok,
        f"factorized vs rescanned training, join of {rep.join_rows} rows: "
        f"max theta deviation {dev:.2e} (tol 1e-6), iterations "
        f"{rep.modes['fact'].iterations} vs {rep.modes['nopre'].iterations}",
    )
    assert ok, line


def test_criterion_08_factorized_operation_advantage(reporter):
    gen = gen_synthetic(
        GenParams(schema=SchemaKind.STAR, seed=1, k_dims=2, fact_rows=1600, fanout=8)
    )
    rep = run_bench(
        gen.db,
        gen.order,
        gen.feature_order,
        opts=GdOptions(epsilon=1e-14, max_iters=300),
    )
    f, n = rep.modes["fact"], rep.modes["nopre"]
    n1 = len(gen.feature_order.entries)
    build_ops = f.multiply_adds - f.iterations * n1 * n1
    one_nopre_iter = n.multiply_adds // n.iterations
    size_ok = rep.join_rows >= 100_000
    iter_ok = f.iterations >= 100 and n.iterations >= 100
    ops_ok = build_ops < 10 * one_nopre_iter
    wall_ok = f.wall_ms < n.wall_ms
    ok = size_ok and iter_ok and ops_ok and wall_ok
    line = reporter(
        8,
        ok,
        f"join {rep.join_rows} rows (>= 1e5), {f.iterations} iterations: "
        f"cofactor build {build_ops} multiply-adds vs one rescan iteration "
        f"{one_nopre_iter} (10x bound, build is "
        f"{one_nopre_iter / build_ops:.1f}x cheaper); full-run ops "
        f"{f.multiply_adds} vs {n.multiply_adds} "
        f"({n.multiply_adds / f.multiply_adds:.0f}x); wall {f.wall_ms:.0f} ms "
        f"vs {n.wall_ms:.0f} ms",
    )
    assert ok, line


def test_criterion_09_noiseless_recovery(reporter):
    gen = gen_synthetic(
        GenParams(schema=SchemaKind.STAR, seed=9, k_dims=3, fact_rows=400, fanout=1)
    )
    rep = train(gen.db, gen.order, gen.feature_order)
    planted = gen.theta_expected.values
    plant_dev = max(
        abs(a - b) / max(1.0, abs(b)) for a, b in zip(rep.theta.values, planted)
    )

    order = prepare(gen.db, gen.order, gen.feature_order)
    db2, order2, factors = scale_database(gen.db, order, gen.feature_order)
    closed = rescale_theta(
        ridge_solution(materialize_join(db2, order2), gen.feature_order, 0.006),
        factors,
    )
    closed_dev = max(
        abs(a - b) / max(1.0, abs(b))
        for a, b in zip(rep.theta.values, closed.values)
    )
    ok = plant_dev <= 0.01 and closed_dev <= 1e-4
    line = reporter(
        9,
        ok,
        f"noiseless recovery: planted-model dev {plant_dev:.2e} (tol 1e-2), "
        f"closed-form ridge dev {closed_dev:.2e} (tol 1e-4)",
    )
    assert ok, line


def test_criterion_10_sql_scripts_match_goldens(reporter):
    import re

    results = []
    six_decimals = False
    for job, golden in (
        (snowflake_job, "snowflake_scaled.sql"),
        (star_job, "star_categorical.sql"),
    ):
        db, order, fo = job()
        script = emit_pipeline(
            db, order, fo, factors=compute_scale_factors(db, order, fo)
        )
        want = (GOLDEN_DIR / golden).read_text()
        results.append(normalize(script.text) == normalize(want))
        if re.search(r"\(\(\w+ - -?\d+\.\d{6}\) / \d+\.\d{6}\)", script.text):
            six_decimals = True
    ok = all(results) and six_decimals
    line = reporter(
        10,
        ok,
        f"generated SQL matches frozen scripts "
        f"(snowflake: {results[0]}, star: {results[1]}); scaling constants "
        f"embedded with 6 decimals: {six_decimals}",
    )
    assert ok, line
