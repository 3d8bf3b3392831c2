import pytest

from pidlcf.config import from_dict, load_config, resolved, sim_config, train_config
from pidlcf.errors import ConfigError


def test_defaults_are_materialised():
    d = resolved(from_dict({}))
    assert d["train"]["alpha"] == 0.7 and d["split"]["ratio"] == [0.5, 0.25, 0.25]
    assert d["sweep"]["alpha"] == [0.1, 0.4, 0.7, 1.0]
    assert set(d) == {"experiment", "seed", "model", "data", "split", "train", "calibrate", "evaluate", "sweep",
                      "ingest"}


@pytest.mark.parametrize("raw", [
    {"sede": 1},
    {"train": {"alpah": 0.5}},
    {"data": {"sim": {"noise": 0.1}}},
    {"model": {"family": "IDM", "params": {"v1": 3.0}}},
    {"seed": "zero"},
    {"seed": True},
    {"train": {"hidden": 60}},
    {"train": {"alpha": 1.5}},
    {"train": {"mode": "both"}},
    {"train": {"physics": "calibrated"}},
    {"data": {"source": "files"}},
    {"data": {"regime": "jam"}},
    {"calibrate": {"population": 1}},
    {"ingest": {"sg_window": 20}},
    {"sweep": {"alpha": []}},
    {"model": {"family": "XYZ"}},
    {"split": {"collocation_mode": "sobol"}},
    {"train": []},
])
def test_schema_violations(raw):
    with pytest.raises(ConfigError):
        from_dict(raw)


def test_seed_override_and_mappings():
    cfg = from_dict({"seed": 3, "data": {"regime": "accelerating", "sim": {"spacing_range": [5, 20]}},
                     "train": {"alpha": 0.4, "hidden": [10, 10]}}, seed=9)
    assert cfg.seed == 9
    assert sim_config(cfg).spacing_range == (5.0, 20.0) and sim_config(cfg).seed == 9
    tc = train_config(cfg)
    assert tc.hidden == (10, 10) and tc.alpha == 0.4 and tc.seed == 9
    assert cfg.model.family == "IDM"


def test_load_config_errors(tmp_path):
    (tmp_path / "bad.yaml").write_text("train: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.yaml")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "ok.yaml").write_text("experiment: x\nevaluate: {params: p.json}\n")
    cfg = load_config(tmp_path / "ok.yaml")
    assert cfg.resolve_path(cfg.evaluate.params) == str(tmp_path / "p.json")
