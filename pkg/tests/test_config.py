import json

import pytest

from factoreg.config import ConfigError, load_config
from factoreg.gd import AlphaSchedule
from factoreg.scaling import InterceptMode
from factoreg.storage import AttributeKind
from factoreg.varorder import iter_nodes, node_by_name


def write_retail_config(tmp_path, mutate=None, with_keys=True):
    (tmp_path / "sales.csv").write_text("P,S\n1,2\n1,4\n2,6\n2,8\n3,10\n")
    (tmp_path / "inventory.csv").write_text(
        "L,P,I\n1,1,2\n1,1,4\n1,2,6\n2,2,8\n2,3,10\n"
    )
    (tmp_path / "competition.csv").write_text("L,C\n1,2\n1,4\n2,6\n2,8\n")
    node_p = {
        "name": "P",
        "children": [
            {"name": "S"},
            {"name": "I"},
        ],
    }
    node_l = {"name": "L", "children": [{"name": "C"}, node_p]}
    if with_keys:
        node_l["key"] = ["L"]
        node_p["key"] = ["L"]
        node_p["children"][0]["key"] = ["P"]
        node_p["children"][1]["key"] = ["L", "P"]
        node_l["children"][0]["key"] = ["L"]
    doc = {
        "config_version": 1,
        "relations": [
            {
                "name": "Sales",
                "path": "sales.csv",
                "schema": [["P", "numeric"], ["S", "numeric"]],
            },
            {
                "name": "Inventory",
                "path": "inventory.csv",
                "schema": [["L", "numeric"], ["P", "numeric"], ["I", "numeric"]],
            },
            {
                "name": "Competition",
                "path": "competition.csv",
                "schema": [["L", "numeric"], ["C", "numeric"]],
            },
        ],
        "variable_order": node_l,
        "feature_order": ["I", "S", "C", "T"],
    }
    if mutate:
        mutate(doc)
    path = tmp_path / "job.json"
    path.write_text(json.dumps(doc))
    return path


def test_load_full_config(tmp_path):
    cfg = load_config(write_retail_config(tmp_path))
    assert set(cfg.db.names()) == {"Sales", "Inventory", "Competition"}
    assert cfg.db["Sales"].n_rows == 5
    assert cfg.feature_order.entries == ("I", "S", "C", "T")
    assert cfg.gd.alpha0 == 0.003
    assert cfg.scaling_enabled is True
    assert cfg.intercept_mode is InterceptMode.THETA_CONV
    assert len(cfg.sha256) == 64
    names = {n.name for n in iter_nodes(cfg.core_order)}
    assert names == {"L", "C", "P", "S", "I"}


def test_keys_derived_when_absent(tmp_path):
    cfg = load_config(write_retail_config(tmp_path, with_keys=False))
    assert set(node_by_name(cfg.core_order, "I").key) == {"L", "P"}
    assert set(node_by_name(cfg.core_order, "S").key) == {"P"}


def test_mixed_key_presence_rejected(tmp_path):
    def strip_one(doc):
        doc["variable_order"]["children"][0].pop("key")

    with pytest.raises(ConfigError) as err:
        load_config(write_retail_config(tmp_path, mutate=strip_one))
    assert "key" in str(err.value)


def test_unknown_top_level_key_rejected(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_config(write_retail_config(tmp_path, mutate=lambda d: d.update(extra=1)))
    assert "extra" in str(err.value)


def test_unknown_nested_key_rejected(tmp_path):
    def mutate(doc):
        doc["relations"][0]["fmt"] = "?"

    with pytest.raises(ConfigError) as err:
        load_config(write_retail_config(tmp_path, mutate=mutate))
    assert "fmt" in str(err.value)


def test_metadata_is_free_form(tmp_path):
    cfg = load_config(
        write_retail_config(
            tmp_path, mutate=lambda d: d.update(metadata={"anything": [1, {"x": 2}]})
        )
    )
    assert cfg.db["Sales"].n_rows == 5


def test_wrong_version_rejected(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_config(write_retail_config(tmp_path, mutate=lambda d: d.update(config_version=9)))
    assert "version" in str(err.value)


def test_gd_overrides_and_schedule_names(tmp_path):
    def mutate(doc):
        doc["gd"] = {"alpha0": 0.01, "epsilon": 1e-8, "schedule": "bold_driver"}
        doc["scaling"] = {"enabled": False, "intercept_mode": "labelavg"}

    cfg = load_config(write_retail_config(tmp_path, mutate=mutate))
    assert cfg.gd.alpha0 == 0.01
    assert cfg.gd.epsilon == 1e-8
    assert cfg.gd.schedule is AlphaSchedule.BOLD_DRIVER
    assert cfg.gd.ridge_lambda == 0.006  # untouched default
    assert cfg.scaling_enabled is False
    assert cfg.intercept_mode is InterceptMode.LABEL_AVG


def test_bad_schedule_name_rejected(tmp_path):
    def mutate(doc):
        doc["gd"] = {"schedule": "warp"}

    with pytest.raises(ConfigError) as err:
        load_config(write_retail_config(tmp_path, mutate=mutate))
    assert "warp" in str(err.value)


def test_categorical_schema_kind(tmp_path):
    (tmp_path / "f.csv").write_text("k,y\na,1\nb,2\n")
    (tmp_path / "d.csv").write_text("k,f\na,5\nb,6\n")
    doc = {
        "config_version": 1,
        "relations": [
            {"name": "F", "path": "f.csv", "schema": [["k", "categorical"], ["y", "numeric"]]},
            {"name": "D", "path": "d.csv", "schema": [["k", "categorical"], ["f", "numeric"]]},
        ],
        "variable_order": {
            "name": "k",
            "categorical": True,
            "children": [{"name": "f"}, {"name": "y"}],
        },
        "feature_order": ["y", "f", "T"],
    }
    path = tmp_path / "job.json"
    path.write_text(json.dumps(doc))
    cfg = load_config(path)
    assert cfg.db["F"].kind_of("k") is AttributeKind.CATEGORICAL
    assert node_by_name(cfg.core_order, "k").categorical


def test_missing_csv_reported_with_path(tmp_path):
    path = write_retail_config(tmp_path)
    (tmp_path / "sales.csv").unlink()
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert "sales.csv" in str(err.value)


def test_forest_order(tmp_path):
    (tmp_path / "r1.csv").write_text("a,b\n1,2\n")
    (tmp_path / "r2.csv").write_text("c,d\n3,4\n")
    doc = {
        "config_version": 1,
        "relations": [
            {"name": "R1", "path": "r1.csv", "schema": [["a", "numeric"], ["b", "numeric"]]},
            {"name": "R2", "path": "r2.csv", "schema": [["c", "numeric"], ["d", "numeric"]]},
        ],
        "variable_order": [
            {"name": "a", "children": [{"name": "b"}]},
            {"name": "c", "children": [{"name": "d"}]},
        ],
        "feature_order": ["b", "c", "d", "T"],
    }
    path = tmp_path / "job.json"
    path.write_text(json.dumps(doc))
    cfg = load_config(path)
    assert isinstance(cfg.core_order, list)
    assert len(cfg.core_order) == 2


def test_sha256_tracks_file_bytes(tmp_path):
    path = write_retail_config(tmp_path)
    a = load_config(path).sha256
    path.write_text(path.read_text() + "\n")
    b = load_config(path).sha256
    assert a != b
