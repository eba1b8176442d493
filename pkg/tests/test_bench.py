import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from camp.bench.config import ConfigError, SweepConfig, default_theta_grid, format_config, parse_config
from camp.bench.sweep import (
    PLOT_HEADER,
    TRIAL_HEADER,
    TrialRecord,
    _select,
    aggregate,
    aggregate_csv,
    draw_problem,
    emit_plot_data,
    prepare_taps,
    read_plot_data,
    run_sweep,
    threshold_search,
    trials_csv,
)
from camp.spectral import taps_geometric_closed_form

SMALL = dict(M=154, N=256, T=20, trials=4, pilot_trials=3, condition_numbers=(1.0, 100.0),
             theta_grid=(0.1, 0.5, 1.0, 3.0))


# --- configuration --------------------------------------------------------------

def test_paper_defaults():
    cfg = SweepConfig()
    assert (cfg.M, cfg.N, cfg.rho, cfg.snr_db, cfg.T) == (614, 1024, 0.1, 30.0, 100)
    assert cfg.noise_variance == pytest.approx(1e-3)
    assert cfg.trials == 200 and cfg.pilot_trials == 64
    assert cfg.condition_numbers == (1.0, 10.0, 100.0, 1000.0)
    assert len(default_theta_grid()) == 30


def test_parse_config_with_comments_and_lists():
    cfg = parse_config("""
        # desk run
        M = 100   # rows
        N = 128
        condition_numbers = 1, 10
        algorithms = camp, amp
        theta_grid = 0.5, 1.5
        output_path = out dir
    """)
    assert cfg.M == 100 and cfg.condition_numbers == (1.0, 10.0)
    assert cfg.algorithms == ("camp", "amp")
    assert cfg.output_path == "out dir"


@pytest.mark.parametrize("text", [
    "N = 1000", "trials = 0", "theta_grid = ", "foo = 1", "M = x", "M 5", "algorithms = ista",
    "M = 3\nM = 4", "condition_numbers = 0.5", "master_seed = -1", "rho = 0",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@given(
    M=st.integers(2, 512), trials=st.integers(1, 10**6), seed=st.integers(0, 2**64 - 1),
    kappas=st.lists(st.floats(1.0, 1e6), min_size=1, max_size=5),
    grid=st.lists(st.floats(0.0, 100.0), min_size=1, max_size=8),
    algs=st.lists(st.sampled_from(["camp", "amp", "oamp-vamp"]), min_size=1, max_size=3, unique=True),
)
@settings(max_examples=60)
def test_config_round_trip(M, trials, seed, kappas, grid, algs):
    cfg = SweepConfig(M=M, N=512, trials=trials, master_seed=seed, condition_numbers=tuple(kappas),
                      theta_grid=tuple(grid), algorithms=tuple(algs), max_diverged_fraction=0.25)
    assert parse_config(format_config(cfg)) == cfg


# --- problem generation ---------------------------------------------------------

def test_draws_are_paired_and_reproducible():
    cfg = SweepConfig(**SMALL)
    e1, x1, m1 = draw_problem(cfg, 100.0, 2)
    e2, x2, m2 = draw_problem(cfg, 100.0, 2)
    np.testing.assert_array_equal(x1, x2)
    np.testing.assert_array_equal(m1.y, m2.y)
    np.testing.assert_array_equal(e1.row_selection, e2.row_selection)
    _, x3, _ = draw_problem(cfg, 100.0, 3)
    _, x4, _ = draw_problem(cfg, 100.0, 2, stream="pilot")
    _, x5, _ = draw_problem(cfg.replace(master_seed=1), 100.0, 2)
    for other in (x3, x4, x5):
        assert not np.array_equal(x1, other)


def test_prepare_taps():
    np.testing.assert_allclose(prepare_taps(0.6, 1.0, 10), 1 / 0.6 - 1, rtol=1e-12)
    np.testing.assert_array_equal(prepare_taps(0.6, 10.0, 10), taps_geometric_closed_form(0.6, 10.0, 10))


# --- threshold search -----------------------------------------------------------

def test_select_prefers_larger_threshold_on_ties():
    assert _select((0.1, 0.2, 0.3), [2.0, 1.0, 1.0]) == 2
    assert _select((0.1, 0.2, 0.3), [0.5, 1.0, 1.0]) == 0


def test_single_point_grid():
    cfg = SweepConfig(**{**SMALL, "theta_grid": (0.7,)})
    assert threshold_search(cfg, "camp", 100.0).theta == 0.7


def test_single_pilot_trial_is_deterministic():
    cfg = SweepConfig(**{**SMALL, "pilot_trials": 1})
    a = threshold_search(cfg, "amp", 100.0)
    b = threshold_search(cfg, "amp", 100.0)
    assert a == b
    assert a.theta in cfg.theta_grid


def test_search_minimizes_mean_final_mse():
    cfg = SweepConfig(**SMALL)
    choice = threshold_search(cfg, "oamp-vamp", 1.0)
    i = choice.grid.index(choice.theta)
    assert choice.pilot_mean[i] == min(choice.pilot_mean)


def test_all_diverged_is_flagged_not_raised():
    cfg = SweepConfig(**{**SMALL, "theta_grid": (0.01,), "T": 60, "condition_numbers": (1000.0,)})
    choice = threshold_search(cfg, "amp", 1000.0)
    assert choice.all_diverged
    res = run_sweep(cfg.replace(algorithms=("amp",)))
    assert res.reports[0].threshold_flagged
    assert res.reports[0].diverged == cfg.trials


def test_amp_needs_larger_threshold_than_camp_at_high_condition_number():
    cfg = SweepConfig(theta_grid=(0.5, 1.0, 1.5))
    amp = threshold_search(cfg, "amp", 1000.0)
    camp = threshold_search(cfg, "camp", 1000.0)
    assert amp.theta > camp.theta, (amp, camp)


# --- sweep outputs ----------------------------------------------------------------

def test_sweep_records_and_aggregates():
    cfg = SweepConfig(**SMALL)
    res = run_sweep(cfg)
    assert len(res.records) == 3 * 2 * cfg.trials
    keys = [(r.algorithm, r.kappa, r.trial) for r in res.records]
    assert keys == sorted(keys)
    text = trials_csv(res.records)
    assert text.splitlines()[0] == TRIAL_HEADER
    # aggregates are recomputable from the per-trial file alone
    rows = [line.split(",") for line in text.strip().splitlines()[1:]]
    parsed = [TrialRecord(a, float(k), float(th), int(i), float(m)) for a, k, th, i, m, _ in rows]
    assert aggregate_csv(aggregate(parsed, cfg.divergence_mse)) == aggregate_csv(res.reports)
    for rep in res.reports:
        vals = [r.final_mse for r in res.records if (r.algorithm, r.kappa) == (rep.algorithm, rep.kappa)]
        assert rep.mean_mse == pytest.approx(np.mean(vals), rel=1e-12)
        assert rep.stderr_mse == pytest.approx(np.std(vals, ddof=1) / math.sqrt(len(vals)), rel=1e-12)


def test_sweep_with_fixed_thresholds_skips_search():
    cfg = SweepConfig(**{**SMALL, "condition_numbers": (10.0,), "algorithms": ("camp",)})
    res = run_sweep(cfg, thetas={("camp", 10.0): 0.9})
    assert res.thresholds == []
    assert res.reports[0].theta == 0.9


def test_plot_data():
    assert emit_plot_data([]) == PLOT_HEADER + "\n"
    cfg = SweepConfig(**{**SMALL, "algorithms": ("amp",)})
    res = run_sweep(cfg)
    series = read_plot_data(emit_plot_data(res.reports))
    assert list(series) == ["amp"]
    for kappa, db, se in series["amp"]:
        rep = res.report("amp", kappa)
        assert db == rep.mean_mse_db and (se == rep.stderr_db or math.isnan(se))


def test_full_outputs_written(tmp_path):
    cfg = SweepConfig(**{**SMALL, "output_path": str(tmp_path / "o")})
    res = run_sweep(cfg)
    out = tmp_path / "o"
    for name in ("trials.csv", "aggregate.csv", "thresholds.csv", "plot_data.csv", "mse_vs_kappa.png"):
        assert (out / name).exists(), name
    series = read_plot_data((out / "plot_data.csv").read_text())
    assert sorted(series) == ["amp", "camp", "oamp-vamp"]
    assert all(len(v) == 2 for v in series.values())
    assert b"\r\n" not in (out / "trials.csv").read_bytes()
    assert (out / "plot_data.csv").read_text() == emit_plot_data(res.reports)


def test_csv_identical_across_worker_counts():
    cfg = SweepConfig(**SMALL)
    a = run_sweep(cfg, workers=1)
    b = run_sweep(cfg, workers=3)
    assert trials_csv(a.records) == trials_csv(b.records)
    assert aggregate_csv(a.reports) == aggregate_csv(b.reports)


@pytest.mark.parametrize("alg", ["camp", "amp", "oamp-vamp"])
def test_noiseless_orthogonal_sanity_mode(alg):
    # kappa = 1, M = N, no noise, theta = 0: MSE after two iterations
    cfg = SweepConfig(M=256, N=256, T=2, snr_db=math.inf, condition_numbers=(1.0,), algorithms=(alg,), trials=3)
    res = run_sweep(cfg, thetas={(alg, 1.0): 0.0})
    assert max(r.final_mse for r in res.records) <= 1e-20


def test_oamp_beats_amp_by_3db_at_kappa_1000():
    cfg = SweepConfig(condition_numbers=(1000.0,), algorithms=("amp", "oamp-vamp"), trials=32, pilot_trials=16)
    res = run_sweep(cfg)
    assert res.report("oamp-vamp", 1000.0).mean_mse_db <= res.report("amp", 1000.0).mean_mse_db - 3.0


def test_plot_handles_off_scale_means(tmp_path):
    from camp.bench.plotting import plot_mse_vs_kappa

    series = {"amp": [(1.0, -20.0, 0.1), (10.0, 1193.4, float("nan")), (100.0, float("inf"), float("nan"))],
              "camp": [(1.0, -33.0, 0.1)]}
    plot_mse_vs_kappa(series, tmp_path / "p.png")
    assert (tmp_path / "p.png").read_bytes()[:4] == b"\x89PNG"
