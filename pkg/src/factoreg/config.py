"""Job configuration files: one JSON document describing a training job.

Layout (version 1):

    {
      "config_version": 1,
      "relations": [
        {"name": "Sales", "path": "sales.csv",
         "schema": [["P", "numeric"], ["S", "numeric"]],
         "csv": {"delimiter": ",", "null_token": "", "has_header": true}}
      ],
      "variable_order": {"name": "L", "children": [
        {"name": "C", "key": ["L"]},
        {"name": "P", "key": ["L"], "children": [
          {"name": "S", "key": ["P"]},
          {"name": "I", "key": ["L", "P"]}
        ]}
      ]},
      "feature_order": ["I", "S", "C", "T"],
      "gd": {"alpha0": 0.003, "epsilon": 1e-6, "ridge_lambda": 0.006,
             "max_iters": 100000000, "alpha_floor": 1e-15,
             "schedule": "divide3"},
      "scaling": {"enabled": true, "intercept_mode": "conv"},
      "metadata": {}
    }

`variable_order` holds core Variable nodes only (relations attach themselves
under the lowest of their attributes; the intercept root is the last entry of
`feature_order`). A forest is written as a list of root nodes. `key` is
either given on every node or on none; omitted keys are derived from the
relation schemas. Relation paths are resolved relative to the config file.
Unknown keys anywhere are rejected rather than ignored. `metadata` is free
form and uninterpreted.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .gd import AlphaSchedule, GdError, GdOptions
from .scaling import InterceptMode
from .storage import AttributeKind, CsvOptions, Database, StorageError, load_csv
from .varorder import FeatureOrder, OrderError, VariableNode, derive_keys, variable

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class JobConfig:
    db: Database
    core_order: VariableNode | list[VariableNode]
    feature_order: FeatureOrder
    gd: GdOptions
    scaling_enabled: bool
    intercept_mode: InterceptMode
    path: Path
    sha256: str


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    _require(not unknown, f"{where}: unknown keys {sorted(unknown)}")


_KIND = {"numeric": AttributeKind.NUMERIC, "categorical": AttributeKind.CATEGORICAL}
_SCHEDULE = {
    "divide3": AlphaSchedule.DIVIDE_ON_INCREASE,
    "bold_driver": AlphaSchedule.BOLD_DRIVER,
}
_MODE = {"conv": InterceptMode.THETA_CONV, "labelavg": InterceptMode.LABEL_AVG}


def _parse_node(obj: dict, where: str, key_presence: list[bool]) -> VariableNode:
    _require(isinstance(obj, dict), f"{where}: node must be an object")
    _check_keys(obj, {"name", "key", "categorical", "children"}, where)
    _require(isinstance(obj.get("name"), str), f"{where}: node needs a string name")
    name = obj["name"]
    key = obj.get("key")
    key_presence.append(key is not None)
    if key is not None:
        _require(
            isinstance(key, list) and all(isinstance(k, str) for k in key),
            f"{where}.{name}: key must be a list of strings",
        )
    categorical = obj.get("categorical", False)
    _require(isinstance(categorical, bool), f"{where}.{name}: categorical must be a bool")
    children = [
        _parse_node(c, f"{where}.{name}", key_presence)
        for c in obj.get("children", [])
    ]
    return variable(name, tuple(key or ()), children, categorical)


def _parse_order(
    obj: dict | list, db: Database
) -> VariableNode | list[VariableNode]:
    roots_raw = obj if isinstance(obj, list) else [obj]
    _require(len(roots_raw) > 0, "variable_order must have at least one root")
    key_presence: list[bool] = []
    try:
        roots = [_parse_node(r, "variable_order", key_presence) for r in roots_raw]
    except OrderError as e:
        raise ConfigError(str(e)) from None
    if any(key_presence) and not all(key_presence):
        raise ConfigError(
            "variable_order: give key on every node or on none "
            "(omitted keys are derived)"
        )
    if not any(key_presence):
        roots = [derive_keys(r, db) for r in roots]
    return roots if isinstance(obj, list) else roots[0]


def load_config(path: str | Path) -> JobConfig:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    try:
        doc = json.loads(blob)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None

    _require(isinstance(doc, dict), f"{path}: top level must be an object")
    _check_keys(
        doc,
        {"config_version", "relations", "variable_order", "feature_order",
         "gd", "scaling", "metadata"},
        str(path),
    )
    _require(
        doc.get("config_version") == CONFIG_VERSION,
        f"{path}: config_version must be {CONFIG_VERSION}",
    )

    rels = doc.get("relations")
    _require(
        isinstance(rels, list) and rels,
        f"{path}: relations must be a non-empty list",
    )
    db = Database()
    for i, r in enumerate(rels):
        where = f"relations[{i}]"
        _require(isinstance(r, dict), f"{where}: must be an object")
        _check_keys(r, {"name", "path", "schema", "csv"}, where)
        _require(isinstance(r.get("name"), str), f"{where}: needs a string name")
        _require(isinstance(r.get("path"), str), f"{where}: needs a csv path")
        schema_raw = r.get("schema")
        _require(
            isinstance(schema_raw, list) and schema_raw,
            f"{where}: schema must be a non-empty list",
        )
        schema = []
        for ent in schema_raw:
            _require(
                isinstance(ent, list) and len(ent) == 2 and ent[1] in _KIND,
                f"{where}: schema entries are [name, 'numeric'|'categorical']",
            )
            schema.append((ent[0], _KIND[ent[1]]))
        csv_raw = r.get("csv", {})
        _check_keys(csv_raw, {"delimiter", "null_token", "has_header"}, f"{where}.csv")
        csv_opts = CsvOptions(
            delimiter=csv_raw.get("delimiter", ","),
            null_token=csv_raw.get("null_token", ""),
            has_header=csv_raw.get("has_header", True),
        )
        rel_path = (path.parent / r["path"]).resolve()
        try:
            db.add(load_csv(rel_path, r["name"], schema, csv_opts))
        except FileNotFoundError:
            raise ConfigError(f"{where}: no such file: {rel_path}") from None
        except StorageError as e:
            raise ConfigError(str(e)) from None

    _require("variable_order" in doc, f"{path}: variable_order is required")
    core = _parse_order(doc["variable_order"], db)

    fo_raw = doc.get("feature_order")
    _require(
        isinstance(fo_raw, list) and all(isinstance(x, str) for x in fo_raw),
        f"{path}: feature_order must be a list of strings",
    )
    try:
        fo = FeatureOrder(tuple(fo_raw))
    except OrderError as e:
        raise ConfigError(str(e)) from None

    gd_raw = doc.get("gd", {})
    _check_keys(
        gd_raw,
        {"alpha0", "epsilon", "ridge_lambda", "max_iters", "alpha_floor", "schedule"},
        f"{path}.gd",
    )
    sched_name = gd_raw.get("schedule", "divide3")
    _require(sched_name in _SCHEDULE, f"{path}.gd: unknown schedule {sched_name!r}")
    try:
        gd_opts = GdOptions(
            alpha0=float(gd_raw.get("alpha0", 0.003)),
            epsilon=float(gd_raw.get("epsilon", 1e-6)),
            ridge_lambda=float(gd_raw.get("ridge_lambda", 0.006)),
            max_iters=int(gd_raw.get("max_iters", 100_000_000)),
            alpha_floor=float(gd_raw.get("alpha_floor", 1e-15)),
            schedule=_SCHEDULE[sched_name],
        )
    except (GdError, TypeError, ValueError) as e:
        raise ConfigError(f"{path}.gd: {e}") from None

    sc_raw = doc.get("scaling", {})
    _check_keys(sc_raw, {"enabled", "intercept_mode"}, f"{path}.scaling")
    mode_name = sc_raw.get("intercept_mode", "conv")
    _require(mode_name in _MODE, f"{path}.scaling: unknown intercept_mode {mode_name!r}")

    return JobConfig(
        db=db,
        core_order=core,
        feature_order=fo,
        gd=gd_opts,
        scaling_enabled=bool(sc_raw.get("enabled", True)),
        intercept_mode=_MODE[mode_name],
        path=path,
        sha256=hashlib.sha256(blob).hexdigest(),
    )
