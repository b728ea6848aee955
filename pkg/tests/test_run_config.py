import pytest

from config.config import get_run_paths
from config.run_config import RunConfig, load_run_config, parse_run_config
from modules.errors import ConfigError


def test_defaults_are_valid():
    config = RunConfig()
    assert config.validate() == []
    assert config.omega_ms == 500
    assert config.n_subsamples == 20
    assert config.bg_loads == (200.0, 300.0, 400.0)
    assert config.vr_ingress_gap_us == 12


def test_overrides_skip_missing_flags():
    config = RunConfig().with_overrides(seed=7, omega_ms=None, family="dt")
    assert config.seed == 7
    assert config.omega_ms == 500
    assert config.family == "dt"


def test_overrides_coerce_loads():
    assert RunConfig().with_overrides(bg_loads=[100, 250]).bg_loads == (100.0, 250.0)


def test_overrides_reject_unknown_keys_and_bad_values():
    with pytest.raises(ConfigError, match="unknown key"):
        RunConfig().with_overrides(colour="red")
    with pytest.raises(ConfigError) as err:
        RunConfig().with_overrides(n_subsamples=1, family="svm")
    assert len(err.value.problems) == 2


def test_parse_collects_every_problem():
    with pytest.raises(ConfigError) as err:
        parse_run_config({"seed": "abc", "oracle": "maybe", "shape": "round"})
    problems = err.value.problems
    assert len(problems) == 3
    assert any(p.startswith("seed:") for p in problems)
    assert "unknown key: shape" in problems


def test_parse_types():
    config = parse_run_config({"seed": "3", "bg_loads": "100, 200", "oracle": "yes", "family": " knn "})
    assert config.seed == 3
    assert config.bg_loads == (100.0, 200.0)
    assert config.oracle is True
    assert config.family == "knn"


def test_parse_validates_ranges():
    with pytest.raises(ConfigError, match="warmup_s"):
        parse_run_config({"warmup_s": "10", "sim_duration_s": "5"})


def test_load_from_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# reproduction settings\nseed=11\nomega_ms=1000\nscheduler=fifo\n")
    config = load_run_config(path)
    assert (config.seed, config.omega_ms, config.scheduler) == (11, 1000, "fifo")


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_run_config(tmp_path / "absent.cfg")


def test_run_paths(tmp_path):
    paths = get_run_paths(tmp_path / "run")
    assert paths["manifest"] == tmp_path / "run" / "corpus" / "manifest.json"
    assert paths["model"].name == "model.json"
