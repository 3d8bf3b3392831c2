import numpy as np
import pytest

from pidlcf.errors import ConfigError, DataError
from pidlcf.experiments import CellSpec, bound_midpoint, build_dataset, cell_physics, relative_errors
from pidlcf.physics import make_params


def test_cell_dataset_sizes_and_reuse():
    spec = CellSpec(regime="accelerating", n_observed=20, n_collocation=30, seed=4)
    ds, floor = build_dataset(spec, make_params("IDM"))
    assert len(ds.train_observed) == 20 and len(ds.val) == 10 and len(ds.collocation) == 30
    assert floor is None
    ds2, _ = build_dataset(CellSpec(regime="accelerating", n_observed=40, seed=4), make_params("IDM"))
    assert ds2.train_observed[:20] == ds.train_observed and ds2.test == ds.test


def test_collocation_sources():
    base = dict(regime="accelerating", n_observed=20, n_collocation=25, seed=1)
    first = build_dataset(CellSpec(**base, collocation_source="observed_first"), make_params("IDM"))[0]
    assert [c.state for c in first.collocation[:20]] == [p.state for p in first.train_observed]
    box = build_dataset(CellSpec(**base, collocation_source="box", collocation_mode="uniform_grid"),
                        make_params("IDM"))[0]
    assert len(box.collocation) == 25
    assert build_dataset(CellSpec(**base))[0].collocation == []


def test_too_many_observations():
    with pytest.raises(DataError):
        build_dataset(CellSpec(regime="accelerating", n_trajectories=1, n_observed=10**6))


def test_spec_validation():
    with pytest.raises(ConfigError):
        CellSpec(collocation_source="grid")
    with pytest.raises(ConfigError):
        cell_physics(CellSpec(data_path="/x"), "ground_truth")


def test_midpoint_and_errors():
    mid = bound_midpoint("OVM")
    assert mid.values["v_max"] == 32.5
    errs = relative_errors(mid, make_params("OVM"))
    assert errs["v_max"] == pytest.approx(2.5 / 30)
    assert np.isfinite(list(errs.values())).all()
