"""Feature scaling, training on converted columns, mapping the model back.

The five-row table mixes a feature living in [-0.05, 0.05] with one living in
[-20000, 20000]. Gradient descent on the raw columns would need wildly
different step sizes per coordinate, so every feature is shifted by its
average and divided by its largest magnitude first. The trained coefficients
then get divided back out, and the intercept can be recovered two ways.
"""

from factoreg.pipeline import prepare, train
from factoreg.scaling import (
    InterceptMode,
    apply_scaling,
    compute_scale_factors,
)
from factoreg.storage import AttributeKind, Database, relation_from_rows
from factoreg.varorder import FeatureOrder, variable

NUM = AttributeKind.NUMERIC
ROWS = [
    (2004.0, 0.01, 20000.0),
    (5.0, 0.03, 0.0),
    (-1955.0, -0.05, -19500.0),
    (999.0, -0.01, 10000.0),
    (-696.0, 0.02, -7000.0),
]

db = Database()
db.add(relation_from_rows("R", [("y", NUM), ("x1", NUM), ("x2", NUM)], ROWS))
core = variable(
    "y",
    children=[variable("x1", key=["y"], children=[variable("x2", key=["y", "x1"])])],
)
fo = FeatureOrder(("y", "x1", "x2", "T"))

order = prepare(db, core, fo)
factors = compute_scale_factors(db, order, fo)
for a in fo.features:
    avg, mx = factors.pair(a)
    print(f"{a}: average {avg:g}, max magnitude {mx:g}")

conv = apply_scaling(db, factors)["R_conv"]
print("x1 converted:", [round(float(v), 6) for v in conv.columns["x1"].data])
print("x2 converted:", [round(float(v), 6) for v in conv.columns["x2"].data])

rep = train(db, core, fo)
print()
print(f"descent took {rep.gd.iterations} iterations "
      f"(converged: {rep.gd.converged})")
print("theta on converted columns:", [f"{v:.6f}" for v in rep.theta_conv.values])
print("theta in raw units:        ", [f"{v:.6f}" for v in rep.theta.values])

# alternative intercept: pin it so predictions average to the label average
rep2 = train(db, core, fo, intercept_mode=InterceptMode.LABEL_AVG)
print("intercept via label average:", f"{rep2.theta.values[-1]:.6f}")
