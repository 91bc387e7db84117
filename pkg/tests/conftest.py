import numpy as np
import pytest

from factoreg.bench import retail_core_order, retail_reference_database
from factoreg.storage import AttributeKind, Database, relation_from_rows
from factoreg.varorder import FeatureOrder, extend, variable

NUM = AttributeKind.NUMERIC
CAT = AttributeKind.CATEGORICAL


# The worked micro-example: y over two features, five rows, heavily skewed
# magnitudes. Frozen derived values live in the tests that use them.
MICRO_ROWS = [
    (2004.0, 0.01, 20000.0),
    (5.0, 0.03, 0.0),
    (-1955.0, -0.05, -19500.0),
    (999.0, -0.01, 10000.0),
    (-696.0, 0.02, -7000.0),
]


@pytest.fixture
def retail_db():
    return retail_reference_database("twice_index")


@pytest.fixture
def retail_order(retail_db):
    return extend(retail_core_order(), retail_db)


@pytest.fixture
def retail_fo():
    return FeatureOrder(("I", "S", "C", "T"))


@pytest.fixture
def micro_db():
    db = Database()
    db.add(relation_from_rows("R", [("y", NUM), ("x1", NUM), ("x2", NUM)], MICRO_ROWS))
    return db


@pytest.fixture
def micro_core():
    return variable(
        "y",
        children=[variable("x1", key=["y"], children=[variable("x2", key=["y", "x1"])])],
    )


@pytest.fixture
def micro_order(micro_db, micro_core):
    return extend(micro_core, micro_db)


@pytest.fixture
def micro_fo():
    return FeatureOrder(("y", "x1", "x2", "T"))


def close(a, b, rel=1e-9, abs_tol=1e-12):
    a, b = float(a), float(b)
    return abs(a - b) <= max(abs_tol, rel * max(abs(a), abs(b)))


def matrices_close(a: np.ndarray, b: np.ndarray, rel=1e-9, abs_tol=1e-12) -> float:
    """Largest normalized deviation between two matrices (<= 1 means close)."""
    dev = np.abs(a - b)
    scale = np.maximum(abs_tol, rel * np.maximum(np.abs(a), np.abs(b)))
    return float((dev / scale).max()) if dev.size else 0.0
