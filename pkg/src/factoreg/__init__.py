"""Linear regression over normalized relations without materializing the join.

The engine computes the cofactor matrix (every degree-two sum aggregate of
the join result) by factorized evaluation over a variable order, then trains
with batch gradient descent on those aggregates alone. A brute-force oracle,
an SQL-script generator and a benchmark harness ride along.
"""

__version__ = "0.1.0"

from .bench import BenchReport, GenParams, GenResult, SchemaKind, gen_synthetic, run_bench
from .cofactor import (
    AggregateTable,
    CofactorMatrix,
    EvalStats,
    Lineage,
    eval_inner,
    eval_leaf,
    eval_root,
    evaluate,
    extract_cofactor_matrix,
    join_count,
)
from .config import JobConfig, load_config
from .gd import (
    AlphaSchedule,
    GdOptions,
    GdResult,
    Theta,
    bgd_cofactor,
    bgd_materialized,
    predict,
)
from .oracle import (
    ErrorReport,
    brute_cofactors,
    evaluate_errors,
    materialize_join,
    ridge_solution,
)
from .pipeline import TrainReport, cofactors, train
from .scaling import (
    InterceptMode,
    ScaleFactors,
    apply_scaling,
    compute_scale_factors,
    rescale_theta,
    scale_database,
)
from .sqlgen import (
    SqlScript,
    emit_extraction,
    emit_pipeline,
    emit_scaling,
    emit_type_tables,
    emit_views,
)
from .storage import (
    AttributeKind,
    Column,
    CsvOptions,
    Database,
    Relation,
    load_csv,
    relation_from_rows,
    union_column,
    write_csv,
)
from .varorder import (
    FeatureOrder,
    NodeClass,
    VariableNode,
    derive_keys,
    extend,
    find_leaves,
    validate,
    validate_feature_order,
    variable,
)
