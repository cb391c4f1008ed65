import numpy as np
import pytest

from smoothmpf.lsq import fit_smooth_auto
from smoothmpf.simulation import (
    SimConfig,
    assign_folds,
    cv_select_df,
    rng_stream,
    sim_panels,
    simulate,
    simulate_ar_panel,
    simulation_study,
    split_locations,
)
from smoothmpf.panel import Predictor, TaskSpec, build_design


def test_deterministic_and_stream_independent():
    a = simulate(SimConfig(n_locations=50, seed=7))
    b = simulate(SimConfig(n_locations=50, seed=7))
    np.testing.assert_array_equal(a.design.Y, b.design.Y)
    np.testing.assert_array_equal(a.design.W, b.design.W)
    # changing the SNR changes the noise scale only, not the draws
    c = simulate(SimConfig(n_locations=50, seed=7, snr=4.0))
    np.testing.assert_array_equal(a.design.X, c.design.X)
    np.testing.assert_array_equal(a.design.W, c.design.W)
    assert rng_stream(1, "noise").random() != rng_stream(1, "mask").random()


def test_mask_count():
    sim = simulate(SimConfig(n_locations=37, q_aheads=11, missing_frac=0.23, seed=2))
    assert int((sim.design.W == 0).sum()) == round(0.23 * 37 * 11)
    assert np.all(sim.design.Y[sim.design.W == 0] == 0)
    full = simulate(SimConfig(n_locations=37, q_aheads=11, missing_frac=0.0))
    assert np.all(full.design.W == 1)


@pytest.mark.parametrize("snr", [0.5, 2.0])
def test_snr(snr):
    sim = simulate(SimConfig(n_locations=1000, snr=snr, missing_frac=0.0, seed=3))
    signal = sim.design.X @ sim.Theta.T @ sim.basis.H.T
    assert np.var(signal) / sim.sigma**2 == pytest.approx(snr, rel=1e-12)
    realized = np.var(signal) / np.var(sim.Y_full - signal)
    assert realized == pytest.approx(snr, rel=0.03)


def test_noiseless_recovery():
    sim = simulate(SimConfig(n_locations=100, snr=float("inf"), missing_frac=0.2, seed=1))
    coef = fit_smooth_auto(sim.design, sim.basis)
    np.testing.assert_allclose(coef.Theta, sim.Theta, atol=1e-8)


def test_panels_rebuild_the_design():
    sim = simulate(SimConfig(n_locations=20, p_predictors=3, q_aheads=5, missing_frac=0.2, seed=4))
    observed, full = sim_panels(sim)
    ds = build_design(observed, sim.task)
    np.testing.assert_array_equal(ds.X, sim.design.X)
    np.testing.assert_array_equal(ds.W, sim.design.W)
    np.testing.assert_array_equal(ds.Y, sim.design.Y)
    np.testing.assert_array_equal(build_design(full, sim.task).Y, sim.Y_full)


def test_split_locations():
    sim = simulate(SimConfig(n_locations=11, seed=0))
    train, test = split_locations(sim.design)
    assert train.n_rows + test.n_rows == 11
    assert not set(train.locations) & set(test.locations)


def test_study_small():
    res = simulation_study(snrs=(1.0,), dfs=(1, 3, 6), seeds=(0, 1), n_locations=200)
    assert res.smooth_mae.shape == (1, 2, 3) and res.baseline_mae.shape == (1, 2)
    assert res.best_df(0) == 3
    assert np.all(res.se_curve(0) >= 0)


def test_cv_single_grid_point():
    sim = simulate(SimConfig(n_locations=60, seed=0))
    res = cv_select_df(sim.design, [4], folds=3)
    assert res.best_df == 4 and res.fold_mae.shape == (1, 3)
    assert len(res.table()) == 3


def test_folds_by_time_are_contiguous():
    panel = simulate_ar_panel(n_locations=3, n_times=40, seed=0)
    ds = build_design(panel, TaskSpec("y", (Predictor("y", (1,)),), (0, 1), forecast_times=tuple(range(1, 39))))
    fold = assign_folds(ds, 4, "by_time")
    times = np.array(ds.forecast_times)
    for f in range(4):
        t = np.unique(times[fold == f])
        assert np.all(np.diff(t) == 1)
    assert np.all(np.diff([times[fold == f].min() for f in range(4)]) > 0)


def test_folds_by_location_keep_locations_together():
    sim = simulate(SimConfig(n_locations=23, seed=0))
    fold = assign_folds(sim.design, 5, "by_location", seed=9)
    assert sorted(np.bincount(fold).tolist()) == [4, 4, 5, 5, 5]
    np.testing.assert_array_equal(fold, assign_folds(sim.design, 5, "by_location", seed=9))


@pytest.mark.slow
def test_cv_recovers_true_df():
    # default generator size (n=1000); at n=300 the d=4 overfit wins more often
    hits = 0
    for seed in range(10):
        sim = simulate(SimConfig(snr=1.0, seed=seed))
        hits += cv_select_df(sim.design, range(1, 7), folds=5, seed=seed).best_df == 3
    assert hits >= 8


def test_ar_panel_is_stationary():
    panel = simulate_ar_panel(n_locations=200, n_times=100, phi=0.5, seed=1)
    y = np.array([r.value for r in panel.records]).reshape(200, 100)
    assert np.var(y) == pytest.approx(1 / (1 - 0.25), rel=0.05)
