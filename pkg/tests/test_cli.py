"""CLI tests: config validation with field-path messages, preset integrity,
CSV/manifest contracts, and byte-identical reruns."""

import csv
import json

import pytest
import yaml

from fednorm.cli import (
    METRIC_COLUMNS,
    available_presets,
    load_preset,
    main,
    parse_config,
)
from fednorm.errors import ConfigError

SMALL = {
    "dataset": {"kind": "synth", "classes": 3, "train_per_class": 20,
                "test_per_class": 10, "features": 5, "center_scale": 0.5,
                "components_per_class": 2},
    "network": {"hidden": [8]},
    "partition": {"label_mode": "noniid", "size_mode": "unbalanced",
                  "classes_per_client": 2},
    "training": {"rounds": 2, "clients": 3, "batch_size": 16,
                 "local_epochs": 2, "seed": 1},
    "strategies": [
        {"kind": "fedavg"},
        {"kind": "fednnnn", "beta": 0.7, "gamma": 0.8},
    ],
}


def write_config(tmp_path, overrides=None, name="exp.yaml"):
    raw = yaml.safe_load(yaml.safe_dump(SMALL))
    if overrides:
        raw.update(overrides)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return path


# -------------------------------------------------------------- config parsing

def test_parse_full_config():
    plan = parse_config(SMALL)
    assert plan.rounds == 2
    assert plan.clients == 3
    assert plan.hidden == (8,)
    assert plan.partition.label_mode == "noniid"
    assert [e.label for e in plan.strategies] == ["fedavg", "fednnnn"]
    assert plan.strategies[1].strategy.beta == 0.7


def test_parse_minimal_config_uses_defaults():
    plan = parse_config({})
    assert plan.rounds == 10
    assert plan.clients == 10
    assert plan.hidden == (64,)
    assert plan.weight_mode == "uniform"
    assert [e.label for e in plan.strategies] == ["fedavg"]


def test_gamma_out_of_range_names_the_field():
    bad = {"strategies": [{"kind": "fedavg"},
                          {"kind": "fednnnn", "beta": 0.7, "gamma": 1.2}]}
    with pytest.raises(ConfigError, match=r"strategies\[1\].gamma.*\[0, 1\).*1.2"):
        parse_config(bad)


def test_unknown_field_is_named():
    with pytest.raises(ConfigError, match="training.leraning_rate: unknown field"):
        parse_config({"training": {"leraning_rate": 0.05}})
    with pytest.raises(ConfigError, match="dataset.noise: unknown field"):
        parse_config({"dataset": {"kind": "synth", "noise": 1.0}})


def test_bad_values_are_rejected_with_paths():
    with pytest.raises(ConfigError, match="dataset.kind"):
        parse_config({"dataset": {"kind": "csv"}})
    with pytest.raises(ConfigError, match="training.participation"):
        parse_config({"training": {"participation": 1.5}})
    with pytest.raises(ConfigError, match="network.hidden"):
        parse_config({"network": {"hidden": [0]}})
    with pytest.raises(ConfigError, match=r"strategies\[0\].kind"):
        parse_config({"strategies": [{"kind": "fedsum"}]})
    with pytest.raises(ConfigError, match=r"strategies\[0\].kind: required"):
        parse_config({"strategies": [{"beta": 1.0}]})
    with pytest.raises(ConfigError, match="strategies"):
        parse_config({"strategies": []})
    with pytest.raises(ConfigError, match="partition"):
        parse_config({"partition": {"label_mode": "sorted"}})
    with pytest.raises(ConfigError, match="training.rounds"):
        parse_config({"training": {"rounds": 0}})


def test_mu_only_for_fedprox():
    with pytest.raises(ConfigError, match=r"strategies\[0\].mu"):
        parse_config({"strategies": [{"kind": "fedavg", "mu": 0.1}]})
    plan = parse_config({"strategies": [{"kind": "fedprox", "mu": 0.02}]})
    assert plan.strategies[0].mu == 0.02
    assert plan.strategies[0].strategy.kind == "fedprox"


def test_repeated_kinds_get_distinct_labels():
    plan = parse_config({"strategies": [
        {"kind": "fednnnn", "beta": 0.6},
        {"kind": "fednnnn", "beta": 0.8},
    ]})
    assert [e.label for e in plan.strategies] == ["fednnnn", "fednnnn_2"]


# --------------------------------------------------------------------- presets

def test_all_presets_parse():
    names = available_presets()
    assert "mnist_noniid_unbalanced" in names
    assert "desk_divergence" in names
    for name in names:
        plan = parse_config(load_preset(name))
        assert plan.strategies


def test_unknown_preset_lists_available():
    with pytest.raises(ConfigError, match="desk_quick"):
        load_preset("nonexistent")


def test_hardest_split_preset_hyperparameters():
    plan = parse_config(load_preset("mnist_noniid_unbalanced"))
    by_label = {e.label: e for e in plan.strategies}
    assert by_label["fedprox"].mu == 0.02
    assert by_label["normnorm"].strategy.beta == 0.9
    assert by_label["momentum"].strategy.gamma == 0.8
    assert by_label["fednnnn"].strategy.beta == 0.7
    assert by_label["fednnnn"].strategy.gamma == 0.8
    assert plan.rounds == 100
    assert plan.clients == 100


# ------------------------------------------------------------------ run command

def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_csvs_and_manifest(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert manifest["strategies"] == ["fedavg", "fednnnn"]
    assert manifest["files"]["fedavg"]["metrics"] == "fedavg_metrics.csv"

    rows = read_csv(out / "fedavg_metrics.csv")
    assert rows[0] == METRIC_COLUMNS
    assert len(rows) == 1 + 2  # header + one per round
    assert [r[0] for r in rows[1:]] == ["1", "2"]
    assert all(r[1] == "fedavg" for r in rows[1:])
    # fedavg distributes the plain average: no separate averaged accuracy
    assert all(r[8] == "" for r in rows[1:])
    float(rows[1][2]), float(rows[1][3]), float(rows[1][4])

    fnn = read_csv(out / "fednnnn_metrics.csv")
    assert all(r[8] != "" for r in fnn[1:])

    layers = read_csv(out / "fednnnn_layers.csv")
    assert layers[0] == ["round", "strategy", "layer", "N", "E"]
    layer_names = {r[2] for r in layers[1:]}
    assert layer_names == {"fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"}


def test_run_full_float_precision(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    main(["run", "--config", str(cfg), "--out", str(out)])
    rows = read_csv(out / "fedavg_metrics.csv")
    # 17 significant digits survive a text round trip exactly
    value = float(rows[1][2])
    assert f"{value:.17g}" == rows[1][2]


def test_rerun_and_worker_count_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    for name, extra in (("a", []), ("b", []), ("c", ["--workers", "4"])):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / name)]
                    + extra) == 0
    for fname in ("fedavg_metrics.csv", "fednnnn_metrics.csv", "fednnnn_layers.csv",
                  "manifest.json"):
        a = (tmp_path / "a" / fname).read_bytes()
        assert a == (tmp_path / "b" / fname).read_bytes()
        assert a == (tmp_path / "c" / fname).read_bytes()


def test_seed_override_changes_results(tmp_path):
    cfg = write_config(tmp_path)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "d"), "--seed", "9"])
    assert ((tmp_path / "a" / "fedavg_metrics.csv").read_bytes()
            != (tmp_path / "d" / "fedavg_metrics.csv").read_bytes())


def test_strategy_filter(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "only"
    assert main(["run", "--config", str(cfg), "--out", str(out),
                 "--strategies", "fednnnn"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["strategies"] == ["fednnnn"]
    assert not (out / "fedavg_metrics.csv").exists()


def test_strategy_filter_unknown_name(tmp_path, capsys):
    cfg = write_config(tmp_path)
    rc = main(["run", "--config", str(cfg), "--out", str(tmp_path / "x"),
               "--strategies", "fedavg,fedmax"])
    assert rc == 2
    assert "fedmax" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump(
        {"strategies": [{"kind": "fednnnn", "gamma": 1.2}]}
    ))
    rc = main(["run", "--config", str(bad), "--out", str(tmp_path / "x")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "gamma" in err and "1.2" in err


def test_missing_idx_dir_fails_cleanly(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("FEDNORM_DATA_DIR", raising=False)
    cfg = tmp_path / "idx.yaml"
    cfg.write_text(yaml.safe_dump({"dataset": {"kind": "idx"}}))
    rc = main(["run", "--config", str(cfg), "--out", str(tmp_path / "x")])
    assert rc == 2
    cfg2 = tmp_path / "idx2.yaml"
    cfg2.write_text(yaml.safe_dump(
        {"dataset": {"kind": "idx", "dir": str(tmp_path / "nowhere")}}
    ))
    rc2 = main(["run", "--config", str(cfg2), "--out", str(tmp_path / "x")])
    assert rc2 == 2
    assert "error" in capsys.readouterr().err


def test_failure_mid_run_marks_manifest(tmp_path, monkeypatch):
    cfg = write_config(tmp_path)
    out = tmp_path / "boom"

    import fednorm.cli as cli_mod

    def explode(*a, **k):
        raise RuntimeError("disk full")
    monkeypatch.setattr(cli_mod, "run_experiment", explode)
    with pytest.raises(RuntimeError):
        main(["run", "--config", str(cfg), "--out", str(out)])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "failed"


def test_zero_learning_rate_gives_empty_ratio_cells(tmp_path):
    raw = yaml.safe_load(yaml.safe_dump(SMALL))
    raw["training"]["learning_rate"] = 0.0
    raw["training"]["rounds"] = 1
    raw["strategies"] = [{"kind": "fedavg"}]
    cfg = tmp_path / "frozen.yaml"
    cfg.write_text(yaml.safe_dump(raw))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "fedavg_metrics.csv")
    assert rows[1][2] == "0"  # N
    assert rows[1][4] == ""  # ratio column empty when nothing moved


# -------------------------------------------------------------------- compare

def test_compare_table_and_csv(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    main(["run", "--config", str(cfg), "--out", str(out)])
    summary = tmp_path / "summary.csv"
    rc = main(["compare", str(out / "fedavg_metrics.csv"),
               str(out / "fednnnn_metrics.csv"), "--out", str(summary)])
    assert rc == 0
    shown = capsys.readouterr().out
    assert "fedavg" in shown and "fednnnn" in shown
    rows = read_csv(summary)
    assert rows[0][0] == "strategy"
    assert {r[0] for r in rows[1:]} == {"fedavg", "fednnnn"}


def test_compare_rejects_non_metrics_csv(tmp_path, capsys):
    junk = tmp_path / "junk.csv"
    junk.write_text("a,b\n1,2\n")
    assert main(["compare", str(junk)]) == 2
    assert "not a metrics CSV" in capsys.readouterr().err


# ----------------------------------------------------------------- analyze-nwda

def test_analyze_nwda_triptych(tmp_path, capsys):
    out = tmp_path / "nwda"
    rc = main(["analyze-nwda", "--rounds", "2", "--seed", "0",
               "--out", str(out)])
    assert rc == 0
    shown = capsys.readouterr().out
    assert "mean N/E" in shown
    for name in ("k1", "iid", "noniid"):
        assert (out / f"{name}_metrics.csv").exists()
    k1 = read_csv(out / "k1_metrics.csv")
    assert all(float(r[4]) == 1.0 for r in k1[1:])


def test_analyze_nwda_validation(capsys):
    assert main(["analyze-nwda", "--rounds", "0"]) == 2
    assert "rounds" in capsys.readouterr().err
