"""Seeded Monte Carlo harness: ROC, Pd-vs-CNR and iterative-convergence curves.

All arms of a comparison run on the same realization.  Every random draw is
keyed by ``SeedSequence([base_seed, stream, point, trial])`` so results do not
depend on evaluation order.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import binomtest

from . import __version__
from .acquisition import AcquisitionConfig, SpectrumConfig, iterative_phase_estimate, make_searcher, noise_only
from .fading import SosChannel
from .signal_model import SampledSignal, SignalParams, bandlimited_delay, noise_variance, replica, synthesize

log = logging.getLogger(__name__)

# stream ids keep noise-only, signal and convergence draws independent
NOISE, SIGNAL, CONVERGE = 0, 1, 2


@dataclass(frozen=True)
class TrialConfig:
    methods: tuple = ("joint", "conventional")
    cnr_list: tuple = (26.0, 28.0, 30.0, 32.0, 34.0, 36.0)
    trials_per_point: int = 2000
    noise_trials: int = 10000
    pfa_target: float = 0.01
    prn: int = 1
    sample_rate: float = 2.046e6
    duration: float = 20e-3
    alpha: float = 1000.0
    doppler_min: float = -1000.0
    doppler_max: float = 1000.0
    doppler_step: float = 250.0
    true_delay: float | None = None
    true_doppler: float | None = None
    channel: str = "awgn"
    fading_L: int = 16
    fading_fd: float = 100.0
    base_seed: int = 0
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)

    def __post_init__(self):
        if self.trials_per_point < 1 or self.noise_trials < 1:
            raise ValueError("trial counts must be >= 1")
        if not 0 < self.pfa_target < 1:
            raise ValueError("pfa_target must be in (0, 1)")
        if self.channel not in ("awgn", "rayleigh"):
            raise ValueError(f"channel must be 'awgn' or 'rayleigh', got {self.channel!r}")
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "cnr_list", tuple(float(c) for c in self.cnr_list))

    def acquisition(self) -> AcquisitionConfig:
        return AcquisitionConfig(prn=self.prn, sample_rate=self.sample_rate, duration=self.duration,
                                 alpha=self.alpha, doppler_min=self.doppler_min,
                                 doppler_max=self.doppler_max, doppler_step=self.doppler_step,
                                 spectrum=self.spectrum)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrialConfig":
        d = dict(d)
        if "spectrum" in d and isinstance(d["spectrum"], dict):
            d["spectrum"] = SpectrumConfig(**d["spectrum"])
        return cls(**d)


@dataclass(frozen=True)
class ConvergenceConfig:
    cnr: float = 44.0
    seeds: int = 10
    sample_rate: float = 5e6
    duration: float = 20e-3
    prn: int = 1
    alpha: float = 1000.0
    mu: float = 0.03
    max_iters: int = 500
    P: int = 2500
    n_tau_max: int = 2500
    d0: float = 1.0
    delay_range: tuple = (2.0, 5.0)
    error_tol: float = 0.5
    base_seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CurvePoint:
    x: float
    y: float
    ci_low: float
    ci_high: float
    n_trials: int

    def __post_init__(self):
        if not (0 <= self.ci_low <= self.y <= self.ci_high <= 1):
            raise ValueError(f"inconsistent curve point {self}")


def wilson_point(x: float, successes: int, n: int) -> CurvePoint:
    ci = binomtest(int(successes), int(n)).proportion_ci(confidence_level=0.95, method="wilson")
    y = successes / n
    return CurvePoint(float(x), y, min(float(ci.low), y), max(float(ci.high), y), int(n))


def trial_seed(base_seed: int, stream: int, point: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([base_seed, stream, point, trial])


def config_hash(d: dict) -> str:
    blob = json.dumps(d, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


# --- trial generation ------------------------------------------------------------

def draw_signal(cfg: TrialConfig, cnr: float, point: int, trial: int) -> tuple[SampledSignal, float, float]:
    """One received realization and its true (delay samples, Doppler Hz)."""
    acq = cfg.acquisition()
    rng = np.random.default_rng(trial_seed(cfg.base_seed, SIGNAL, point, trial))
    delays = acq.delay_axis()
    dopplers = acq.doppler_axis()
    d = float(cfg.true_delay) if cfg.true_delay is not None else float(rng.choice(delays))
    fd = float(cfg.true_doppler) if cfg.true_doppler is not None else float(rng.choice(dopplers))
    phase = rng.uniform(0, 2 * np.pi)
    amp = 1.0
    if cfg.channel == "rayleigh":
        ch = SosChannel(cfg.fading_L, cfg.fading_fd, cfg.duration, rng_seed=int(rng.integers(2 ** 31)))
        i, q = ch.advance(1)
        gain = complex(i[0], q[0]) / np.sqrt(cfg.fading_L)
        amp, phase = abs(gain), phase + np.angle(gain)
    chip_delay = d * 1.023e6 / cfg.sample_rate
    params = SignalParams(prn=cfg.prn, code_delay=chip_delay, doppler=fd, carrier_phase=phase,
                          amplitude=max(amp, 1e-12), sample_rate=cfg.sample_rate, duration=cfg.duration,
                          cnr=cnr, noise_ref_power=1.0)
    return synthesize(params, rng_seed=int(rng.integers(2 ** 63))), d, fd


def noise_peaks(cfg: TrialConfig, searchers: dict, n_trials: int, point: int = 0) -> dict:
    acq = cfg.acquisition()
    out = {m: np.empty(n_trials) for m in searchers}
    for t in range(n_trials):
        r = noise_only(acq.n_samples, acq.sample_rate, trial_seed(cfg.base_seed, NOISE, point, t))
        for m, s in searchers.items():
            out[m][t] = s(r, 0.0)[1].peak
    return out


def signal_peaks(cfg: TrialConfig, searchers: dict, cnr: float, point: int, n_trials: int) -> dict:
    out = {m: np.empty(n_trials) for m in searchers}
    for t in range(n_trials):
        r, _, _ = draw_signal(cfg, cnr, point, t)
        for m, s in searchers.items():
            out[m][t] = s(r, 0.0)[1].peak
    return out


def calibrate(cfg: TrialConfig, searchers: dict | None = None) -> dict:
    """Per-method thresholds at ``cfg.pfa_target`` from paired noise-only trials."""
    searchers = searchers or {m: make_searcher(m, cfg.acquisition()) for m in cfg.methods}
    peaks = noise_peaks(cfg, searchers, cfg.noise_trials)
    return {m: float(np.quantile(p, 1 - cfg.pfa_target)) for m, p in peaks.items()}


# --- curves ------------------------------------------------------------------

def run_pd_curve(cfg: TrialConfig, thresholds: dict | None = None) -> dict:
    """Pd vs CNR per method at the calibrated false-alarm rate."""
    searchers = {m: make_searcher(m, cfg.acquisition()) for m in cfg.methods}
    thresholds = thresholds or calibrate(cfg, searchers)
    curves = {m: [] for m in cfg.methods}
    for k, cnr in enumerate(cfg.cnr_list):
        peaks = signal_peaks(cfg, searchers, cnr, k, cfg.trials_per_point)
        for m in cfg.methods:
            hits = int(np.sum(peaks[m] > thresholds[m]))
            curves[m].append(wilson_point(cnr, hits, cfg.trials_per_point))
        log.info("cnr %.1f: %s", cnr, {m: curves[m][-1].y for m in cfg.methods})
    return curves


DEFAULT_PFA_GRID = (0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0)


def roc_from_peaks(noise: np.ndarray, signal: np.ndarray, pfa_grid=DEFAULT_PFA_GRID) -> list[CurvePoint]:
    """(Pfa, Pd) at thresholds chosen as noise quantiles; ``Pfa = 1`` uses threshold 0."""
    pts = []
    for pfa in sorted(pfa_grid):
        thr = 0.0 if pfa >= 1 else float(np.quantile(noise, 1 - pfa))
        hits = int(np.sum(signal > thr))
        pts.append(wilson_point(pfa, hits, signal.size))
    return pts


def run_roc(cfg: TrialConfig, cnr: float | None = None, pfa_grid=DEFAULT_PFA_GRID) -> dict:
    """ROC per method at one CNR: noise-only and signal trial populations share trial indices."""
    cnr = cfg.cnr_list[0] if cnr is None else cnr
    searchers = {m: make_searcher(m, cfg.acquisition()) for m in cfg.methods}
    n = cfg.trials_per_point
    noise = noise_peaks(cfg, searchers, n)
    sig = signal_peaks(cfg, searchers, cnr, 0, n)
    return {m: roc_from_peaks(noise[m], sig[m], pfa_grid) for m in cfg.methods}


def crossing(curve: list[CurvePoint], level: float = 0.9) -> CurvePoint | None:
    """First point whose Pd reaches ``level``."""
    for p in curve:
        if p.y >= level:
            return p
    return None


# --- convergence ------------------------------------------------------------------

def convergence_signal(cfg: ConvergenceConfig, seed: int) -> tuple[SampledSignal, np.ndarray, float]:
    point = int(round(cfg.cnr * 100)) if np.isfinite(cfg.cnr) else 2 ** 32  # noiseless runs get their own stream
    rng = np.random.default_rng(trial_seed(cfg.base_seed, CONVERGE, point, seed))
    n = int(round(cfg.duration * cfg.sample_rate))
    g = replica(cfg.prn, cfg.sample_rate, n)
    d = float(rng.uniform(*cfg.delay_range))
    x = bandlimited_delay(g, d)
    var = noise_variance(cfg.cnr, 1.0, cfg.sample_rate)
    x = x + np.sqrt(var / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return SampledSignal(x, cfg.sample_rate), g, d


def settle_iteration(err: np.ndarray, tol: float) -> int | None:
    """First iteration after which ``|err|`` stays below ``tol``."""
    bad = np.nonzero(np.abs(err) >= tol)[0]
    if bad.size == 0:
        return 0
    k = int(bad[-1]) + 1
    return k if k < err.size else None


def run_convergence(cfg: ConvergenceConfig, variants=(("cyclic", None), ("baseline", 0.0))) -> dict:
    """Iterative-estimator error curves per seed for the cyclic and alpha=0 variants."""
    out = {}
    for name, alpha in variants:
        alpha = cfg.alpha if alpha is None else alpha
        errs, settle, finals = [], [], []
        for s in range(cfg.seeds):
            r, g, d = convergence_signal(cfg, s)
            tr = iterative_phase_estimate(r, cfg.prn, alpha, cfg.mu, cfg.max_iters, cfg.P, cfg.n_tau_max,
                                          cfg.d0, g=g)
            e = tr.d_hat_per_iter - d
            errs.append(e)
            finals.append(float(e[-1]) if not tr.diverged else float("inf"))
            settle.append(settle_iteration(e, cfg.error_tol) if not tr.diverged else None)
        ok = [k for k in settle if k is not None]
        out[name] = {
            "alpha": alpha,
            "errors": errs,
            "final_error": finals,
            "settle_iteration": settle,
            "converged": sum(k is not None for k in settle),
            "median_iterations": float(np.median(ok)) if ok else None,
        }
    return out


# --- output ----------------------------------------------------------------------

def write_curve_csv(path: Path, curve: list[CurvePoint], header_note: str = "") -> None:
    lines = []
    if header_note:
        lines.append(f"# {header_note}")
    lines.append("x,y,ci_low,ci_high,n_trials")
    lines += [f"{p.x:.10g},{p.y:.10g},{p.ci_low:.10g},{p.ci_high:.10g},{p.n_trials}" for p in curve]
    path.write_text("\n".join(lines) + "\n")


def write_run(out_root, kind: str, config: dict, curves: dict, extra: dict | None = None,
              wall_time: float | None = None, header_note: str = "") -> Path:
    """Write curves under ``out_root/<kind>-<config hash>/``.

    ``manifest.json`` and the curve CSVs are deterministic; wall time goes to
    ``timing.json`` so reruns stay byte-identical.
    """
    run_dir = Path(out_root) / f"{kind}-{config_hash({'kind': kind, **config})}"
    run_dir.mkdir(parents=True, exist_ok=True)
    for name, curve in curves.items():
        write_curve_csv(run_dir / f"{name}.csv", curve, header_note)
    manifest = {"kind": kind, "version": __version__, "config": config, "curves": sorted(curves),
                "seeding": "SeedSequence([base_seed, stream, point, trial]); streams noise=0 signal=1 converge=2"}
    if extra:
        manifest.update(extra)
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    if wall_time is not None:
        (run_dir / "timing.json").write_text(json.dumps({"wall_time_s": wall_time}) + "\n")
    return run_dir


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    res = fn(*args, **kwargs)
    return res, time.perf_counter() - t0
