import json
import shutil

import pytest

from airgrid.cli import execute
from airgrid.config import parse_config, validate_config
from airgrid.errors import ConfigError

FAST_TRAIN = "[train]\nnum_leaves = 15\nmax_trees = 40\n"


@pytest.fixture
def cfg(fixture_dir, tmp_path):
    """A fixture config with a small model so CLI runs stay quick."""
    text = (fixture_dir / "run.toml").read_text()
    head, _, tail = text.partition("[train]")
    tail = tail[tail.index("[search]"):]
    p = tmp_path / "run.toml"
    p.write_text(head.replace('"stations.csv"', f'"{fixture_dir / "stations.csv"}"')
                 .replace('"measurements.csv"', f'"{fixture_dir / "measurements.csv"}"')
                 .replace('"covariates"', f'"{fixture_dir / "covariates"}"')
                 .replace('"daqi.csv"', f'"{fixture_dir / "daqi.csv"}"') + FAST_TRAIN + "\n" + tail)
    return p


def test_qc_on_fixture(cfg, tmp_path):
    out = tmp_path / "o"
    assert execute(["qc", "--config", str(cfg), "--out", str(out)]) == 0
    # the synthetic world is clean, so the report is just its header
    assert (out / "qc_report.csv").read_text() == "station_id,rule_id,detail\n"
    assert (out / "measurements_clean.csv").stat().st_size > 0
    man = json.loads((out / "manifest_qc.json").read_text())
    assert man["seed"] == 7 and "qc_report.csv" in man["outputs"] and len(man["config_sha256"]) == 64


def test_usage_errors(cfg, capsys):
    assert execute(["qc", "--config", str(cfg), "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err
    assert execute(["nonsense"]) == 2
    assert execute(["experiment", "sideways", "--config", str(cfg)]) == 2
    assert execute(["qc"]) == 2


def test_missing_measurements_names_key(tmp_path, capsys):
    (tmp_path / "c.toml").write_text('[run]\npollutant = "NO2"\n')
    assert execute(["train", "--config", str(tmp_path / "c.toml"), "--out", str(tmp_path / "o")]) == 2
    assert "paths.measurements" in capsys.readouterr().err


def test_bad_path_is_config_error(tmp_path, capsys):
    (tmp_path / "c.toml").write_text('[paths]\nmeasurements = "nope.csv"\n')
    assert execute(["qc", "--config", str(tmp_path / "c.toml")]) == 2
    assert "nope.csv" in capsys.readouterr().err


def test_minimal_config_defaults(tmp_path):
    (tmp_path / "c.toml").write_text("")
    c = validate_config(tmp_path / "c.toml")
    assert c.get("run.pollutant") == "NO2" and c.seed == 0 and c.get("train.max_bin") == 63
    p = c.train_params()
    assert p.early_stopping_rounds == 10 and p.goss_top_rate == 0.2 and p.goss_other_rate == 0.1
    assert c.get("paths.out") is not None


@pytest.mark.parametrize("text, needle", [
    ("[train]\nmax_bin = 64\n", "max_bin"),
    ("[train]\nnum_leaves = 10\nnum_leaves = 12\n", "duplicate key train.num_leaves"),
    ("[train]\nbogus = 1\n", "bogus"),
    ("[nowhere]\nx = 1\n", "nowhere"),
    ('[train]\nnum_leaves = "many"\n', "num_leaves"),
    ('[run]\npollutant = "CO"\n', "pollutant"),
])
def test_config_rejections(text, needle):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert any(needle in p for p in exc.value.problems)


def test_problems_are_itemized():
    with pytest.raises(ConfigError) as exc:
        parse_config("[train]\nmax_bin = 64\nbogus = 2\n")
    assert len(exc.value.problems) == 2


def test_train_reproducible(cfg, tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert execute(["train", "--config", str(cfg), "--out", str(o)]) == 0
    for name in ("model_NO2.json", "scores_train.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    man = json.loads((outs[0] / "manifest_train.json").read_text())
    assert set(man["outputs"]) == {"model_NO2.json", "scores_train.csv"}


def test_seed_flag_changes_manifest(cfg, tmp_path):
    assert execute(["split", "--config", str(cfg), "--out", str(tmp_path), "--seed", "3"]) == 0
    assert json.loads((tmp_path / "manifest_split.json").read_text())["seed"] == 3
    assert (tmp_path / "split_rows.csv").exists()


def test_pipeline_products(cfg, tmp_path):
    out = str(tmp_path)
    for argv in (["train"], ["predict-grid"], ["aqi"], ["experiment", "between-country"], ["report"]):
        assert execute(argv + ["--config", str(cfg), "--out", out]) == 0, argv
    tiles = sorted(p.name for p in tmp_path.glob("*.aptile"))
    assert "NO2_20220115T08_Point.aptile" in tiles and "NO2_IndexSum.aptile" in tiles
    for name in ("manifest_predict-grid.json", "manifest_aqi.json", "manifest_experiment_between_country.json",
                 "continent_table.csv", "scores_between_country.csv"):
        assert (tmp_path / name).exists(), name


def test_fixture_subcommand(tmp_path):
    assert execute(["fixture", str(tmp_path / "w"), "--days", "8"]) == 0
    assert (tmp_path / "w" / "run.toml").exists()
    shutil.rmtree(tmp_path / "w")
