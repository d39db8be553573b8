import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cyclogps.experiments import (ConvergenceConfig, CurvePoint, TrialConfig, calibrate, config_hash, crossing,
                                  draw_signal, roc_from_peaks, run_convergence, run_pd_curve, run_roc,
                                  settle_iteration, wilson_point, write_run)

SMALL = dict(duration=4e-3, doppler_min=-500.0, doppler_max=500.0, trials_per_point=20, noise_trials=40)


@given(st.integers(0, 200), st.integers(1, 200))
def test_wilson_contains_point(k, n):
    k = min(k, n)
    p = wilson_point(1.0, k, n)
    assert 0 <= p.ci_low <= p.y <= p.ci_high <= 1 and p.n_trials == n


def test_wilson_frozen():
    # 18/20 against the closed-form Wilson interval, z = 1.959964
    k, n, z = 18, 20, 1.959963984540054
    centre = (k + z * z / 2) / (n + z * z)
    half = z / (n + z * z) * np.sqrt(k * (n - k) / n + z * z / 4)
    p = wilson_point(0.0, k, n)
    assert p.ci_low == pytest.approx(centre - half, abs=1e-12)
    assert p.ci_high == pytest.approx(centre + half, abs=1e-12)


def test_curve_point_validation():
    with pytest.raises(ValueError):
        CurvePoint(0.0, 0.5, 0.6, 0.7, 10)
    with pytest.raises(ValueError):
        CurvePoint(0.0, 1.2, 0.5, 1.3, 10)


def test_trial_config_validation_and_roundtrip():
    for bad in (dict(trials_per_point=0), dict(pfa_target=1.0), dict(pfa_target=0.0), dict(channel="rician")):
        with pytest.raises(ValueError):
            TrialConfig(**bad)
    cfg = TrialConfig(**SMALL)
    back = TrialConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg
    assert config_hash(cfg.to_dict()) == config_hash(back.to_dict())


def test_draw_signal_pinned_and_paired():
    cfg = TrialConfig(**SMALL, true_delay=100, true_doppler=250.0)
    r1, d, fd = draw_signal(cfg, 40.0, 0, 3)
    r2, _, _ = draw_signal(cfg, 40.0, 0, 3)
    assert (d, fd) == (100.0, 250.0)
    assert r1.samples.tobytes() == r2.samples.tobytes()
    r3, _, _ = draw_signal(cfg, 40.0, 0, 4)
    assert r3.samples.tobytes() != r1.samples.tobytes()


def test_rayleigh_channel_draws():
    cfg = TrialConfig(**SMALL, channel="rayleigh")
    powers = [np.mean(np.abs(draw_signal(cfg, 80.0, 0, t)[0].samples) ** 2) for t in range(200)]
    # exponential block power with unit mean
    assert np.mean(powers) == pytest.approx(1.0, abs=0.2)
    assert np.std(powers) == pytest.approx(1.0, abs=0.3)


def test_roc_endpoint_and_monotone():
    rng = np.random.default_rng(0)
    pts = roc_from_peaks(rng.rayleigh(size=300), rng.rayleigh(size=300) + 1.0)
    assert (pts[-1].x, pts[-1].y) == (1.0, 1.0)
    ys = [p.y for p in pts]
    assert ys == sorted(ys)


def test_crossing():
    curve = [wilson_point(c, k, 10) for c, k in ((26, 2), (28, 9), (30, 10))]
    assert crossing(curve).x == 28
    assert crossing(curve, 1.1) is None


def test_settle_iteration():
    assert settle_iteration(np.array([2.0, 1.0, 0.1, 0.1]), 0.5) == 2
    assert settle_iteration(np.array([0.1, 0.2]), 0.5) == 0
    assert settle_iteration(np.array([0.1, 0.9]), 0.5) is None


def test_pd_curve_deterministic_files(tmp_path):
    cfg = TrialConfig(**SMALL, cnr_list=(40.0, 44.0), base_seed=11)
    paths = []
    for sub in ("a", "b"):
        curves = run_pd_curve(cfg)
        paths.append(write_run(tmp_path / sub, "pd", cfg.to_dict(), curves, wall_time=0.1 if sub == "a" else 9.9))
    assert paths[0].name == paths[1].name
    for name in ("joint.csv", "conventional.csv", "manifest.json"):
        assert (paths[0] / name).read_bytes() == (paths[1] / name).read_bytes()
    assert (paths[0] / "timing.json").exists()
    head = (paths[0] / "joint.csv").read_text().splitlines()
    assert head[0] == "x,y,ci_low,ci_high,n_trials" and len(head) == 3


def test_strong_signal_saturates():
    cfg = TrialConfig(duration=20e-3, doppler_min=-500.0, doppler_max=500.0, trials_per_point=200,
                      noise_trials=200, cnr_list=(50.0,), methods=("joint", "conventional", "cyclic_phase"),
                      true_doppler=0.0)
    curves = run_pd_curve(cfg)
    for m, c in curves.items():
        assert c[0].y == 1.0, m


def test_calibrate_thresholds_positive():
    thr = calibrate(TrialConfig(**SMALL))
    assert set(thr) == {"joint", "conventional"} and all(v > 0 for v in thr.values())


def test_run_roc_shape():
    cfg = TrialConfig(**SMALL, cnr_list=(40.0,))
    roc = run_roc(cfg)
    for curve in roc.values():
        assert [p.x for p in curve] == sorted(p.x for p in curve)
        assert curve[-1].y == 1.0


def test_convergence_noiseless():
    cfg = ConvergenceConfig(cnr=np.inf, seeds=2)
    out = run_convergence(cfg, variants=(("cyclic", None),))["cyclic"]
    for e in out["errors"]:
        mag = np.abs(e)
        assert mag[-1] < 1e-3
        assert np.all(np.diff(mag) <= 1e-12)
    assert out["converged"] == 2
