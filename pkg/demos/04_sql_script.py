"""The same computation as SQL, executed here against sqlite.

Every aggregate table the in-memory engine builds has a SQL twin: a view
that unions the degree expansions and groups partial products by join key
and lineage string. The script below is emitted for the three-relation
snowflake, executed on an in-memory sqlite database, and its cofactor
extraction queries are checked against the engine's matrix.
"""

import sqlite3

from factoreg.bench import retail_core_order, retail_reference_database
from factoreg.cofactor import EvalStats, evaluate, extract_cofactor_matrix
from factoreg.scaling import compute_scale_factors, scale_database
from factoreg.sqlgen import emit_pipeline
from factoreg.varorder import FeatureOrder, extend

db = retail_reference_database("twice_index")
order = extend(retail_core_order(), db)
fo = FeatureOrder(("I", "S", "C", "T"))

script = emit_pipeline(db, order, fo, factors=compute_scale_factors(db, order, fo))
statements = [s for s in script.text.split(";") if s.strip()]
views = [s for s in statements if "CREATE VIEW" in s]
print(f"script: {len(statements)} statements, {len(views)} views, "
      f"{script.text.count('-- cofactor')} extraction queries")
print()
print("\n".join(script.text.splitlines()[:14]))
print("...")

# run it: base tables in, every statement verbatim, probe one entry
conn = sqlite3.connect(":memory:")
for name in db.names():
    rel = db[name]
    cols = ", ".join(f"{a} real" for a, _ in rel.schema)
    conn.execute(f"CREATE TABLE {name} ({cols})")
    rows = list(zip(*(rel.columns[a].data.tolist() for a, _ in rel.schema)))
    marks = ", ".join("?" for _ in rel.schema)
    conn.executemany(f"INSERT INTO {name} VALUES ({marks})", rows)
for stmt in statements:
    lines = [ln for ln in stmt.splitlines() if not ln.lstrip().startswith("--")]
    body = "\n".join(lines).strip()
    if body:
        cur = conn.execute(body)

row = conn.execute(
    "SELECT SUM(agg) FROM QT WHERE lineage LIKE '%(C,1)%' "
    "AND lineage LIKE '%(S,1)%' AND deg = 2"
).fetchone()

db2, order2, _ = scale_database(db, order, fo)
root = evaluate(db2, order2, EvalStats())
cof = extract_cofactor_matrix(root, fo, order2)
print()
print(f"Cof(S, C) from sqlite:  {row[0]:.9f}")
print(f"Cof(S, C) from engine:  {cof.entry('S', 'C'):.9f}")
