import json

import numpy as np
import pytest

from nnopf.errors import EmptySplit
from nnopf.grid import run_power_flow
from nnopf.scenarios import (
    ConstantColumnWarning,
    ScenarioConfig,
    compute_norm_stats,
    generate_dataset,
    input_header,
    load_dataset,
    min_voltage_targets,
    save_dataset,
    split_indices,
    target_header,
)


def test_stored_voltages_are_rederivable(desk_net, desk_dataset):
    n = desk_net.n_load
    rows = np.random.default_rng(0).choice(len(desk_dataset.inputs), 60, replace=False)
    for i in rows:
        x = desk_dataset.inputs[i]
        res = run_power_flow(desk_net, x[:n], x[n:])
        assert np.max(np.abs(res.load_bus_voltages(desk_net) - desk_dataset.targets_full[i])) <= 1e-8


def test_dataset_shapes_and_min_target(desk_net, desk_dataset):
    ds = desk_dataset
    assert ds.inputs.shape == (2000, 2 * desk_net.n_load)
    assert ds.targets_full.shape == (2000, desk_net.n_load)
    assert np.array_equal(ds.targets_min, ds.targets_full.min(axis=1))
    assert ds.load_buses == desk_net.load_buses
    assert 0.8 < ds.targets_full.min() and ds.targets_full.max() < 1.1


def test_split_is_a_partition():
    tr, va, te = split_indices(1000, 3)
    allidx = np.concatenate([tr, va, te])
    assert len(allidx) == 1000 and len(np.unique(allidx)) == 1000
    assert (len(tr), len(va), len(te)) == (800, 100, 100)
    tr2, _, _ = split_indices(1000, 3)
    assert np.array_equal(tr, tr2)


def test_generation_is_deterministic_and_worker_independent(desk_net, desk_fleet):
    cfg = ScenarioConfig(n_samples=60, seed=5)
    a = generate_dataset(desk_net, desk_fleet, cfg)
    b = generate_dataset(desk_net, desk_fleet, cfg, workers=2)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.targets_full, b.targets_full)
    c = generate_dataset(desk_net, desk_fleet, ScenarioConfig(n_samples=60, seed=6))
    assert not np.array_equal(a.inputs, c.inputs)


def test_norm_stats_use_training_split_only(desk_dataset):
    stats = compute_norm_stats(desk_dataset)
    tr = desk_dataset.inputs[desk_dataset.train]
    assert np.allclose(stats.mu_x, tr.mean(axis=0))
    assert np.allclose(stats.sigma_x, tr.std(axis=0))
    xn = stats.normalize_x(desk_dataset.inputs)
    assert np.allclose(stats.denormalize_x(xn), desk_dataset.inputs)


def test_constant_columns_warn(desk_dataset):
    view, _ = min_voltage_targets(desk_dataset)
    view.inputs = view.inputs.copy()
    view.inputs[:, 0] = 0.3
    with pytest.warns(ConstantColumnWarning):
        stats = compute_norm_stats(view)
    assert stats.sigma_x[0] == 1.0 and stats.constant_x == [0]


def test_min_voltage_view(desk_dataset):
    view, stats = min_voltage_targets(desk_dataset)
    assert view.targets_full.shape == (len(desk_dataset.inputs), 1)
    assert stats.mu_y.shape == (1,)
    assert stats.mu_y[0] == pytest.approx(desk_dataset.targets_min[desk_dataset.train].mean())


def test_empty_split_rejected(desk_dataset):
    view, _ = min_voltage_targets(desk_dataset)
    view.train = np.array([], dtype=int)
    with pytest.raises(EmptySplit):
        compute_norm_stats(view)


def test_invalid_config():
    with pytest.raises(ValueError):
        ScenarioConfig(n_samples=0)
    with pytest.raises(ValueError):
        ScenarioConfig(load_scale_range=(1.0, 0.5))


def test_dataset_round_trip(tmp_path, desk_dataset):
    paths = save_dataset(desk_dataset, tmp_path)
    assert {p.name for p in paths} >= {"inputs.csv", "targets.csv", "dataset.json"}
    back = load_dataset(tmp_path)
    assert np.array_equal(back.inputs, desk_dataset.inputs)
    assert np.array_equal(back.targets_full, desk_dataset.targets_full)
    assert np.array_equal(back.test, desk_dataset.test)
    header = (tmp_path / "inputs.csv").read_text().splitlines()[0].split(",")
    assert header == input_header(desk_dataset.load_buses)
    assert (tmp_path / "targets.csv").read_text().splitlines()[0].split(",") == target_header(desk_dataset.load_buses)
    meta = json.loads((tmp_path / "dataset.json").read_text())
    assert meta["load_buses"] == list(desk_dataset.load_buses)
