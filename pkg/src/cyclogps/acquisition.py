"""Code-phase and Doppler acquisition: conventional and cyclostationary.

Every grid statistic is normalised by the measured received power (raised to
the statistic's degree of homogeneity) so noise-only distributions do not
depend on the noise level and calibrated thresholds carry across CNR.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.signal import fftconvolve

from .cyclostat import bin_shift, cross_spectrum_from_segments, moving_average, segment_spectra
from .signal_model import CODE_PERIOD, SampledSignal, replica, samples_per_code

METHODS = ("conventional", "cyclic_phase", "cyclic_doppler", "joint", "iterative")


@dataclass(frozen=True)
class SpectrumConfig:
    """Cyclic periodogram settings; ``segment_len=None`` picks the shortest whole-code-period M."""

    segment_len: int | None = None
    smoothing_bins: int = 11
    window: str = "rect"
    n_tau_max: int | None = None

    def resolve_segment_len(self, alpha: float, fs: float) -> int:
        if self.segment_len is not None:
            return self.segment_len
        spc = samples_per_code(fs)
        for k in range(1, 65):
            phi = alpha * k * spc / fs
            if abs(phi - round(phi)) < 1e-9 and round(phi) % 2 == 0:
                return k * spc
        raise ValueError(f"no whole-period segment length aligns alpha={alpha} at fs={fs}")


@dataclass(frozen=True)
class AcquisitionConfig:
    prn: int = 1
    sample_rate: float = 2.046e6
    duration: float = 20e-3
    alpha: float = 1000.0
    doppler_min: float = -5000.0
    doppler_max: float = 5000.0
    doppler_step: float = 250.0
    delay_step: int = 1
    spectrum: SpectrumConfig = field(default_factory=SpectrumConfig)

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    def delay_axis(self) -> np.ndarray:
        return np.arange(0, samples_per_code(self.sample_rate), self.delay_step)

    def doppler_axis(self) -> np.ndarray:
        n = int(round((self.doppler_max - self.doppler_min) / self.doppler_step)) + 1
        return self.doppler_min + self.doppler_step * np.arange(n)


@dataclass(frozen=True)
class SearchGrid:
    delay_axis: np.ndarray
    doppler_axis: np.ndarray
    statistic: np.ndarray

    def __post_init__(self):
        d, f = np.asarray(self.delay_axis), np.asarray(self.doppler_axis)
        if d.size == 0 or f.size == 0:
            raise ValueError("search axes must be non-empty")
        if np.any(np.diff(d) <= 0) or np.any(np.diff(f) <= 0):
            raise ValueError("search axes must be strictly increasing")
        if self.statistic.shape != (d.size, f.size):
            raise ValueError("statistic shape does not match axes")

    def argmax(self) -> tuple[int, int]:
        # C-order argmax: lowest delay index first, then lowest Doppler index
        i = int(np.argmax(self.statistic))
        return divmod(i, self.statistic.shape[1])

    def write_csv(self, path) -> None:
        dd, ff = np.meshgrid(self.delay_axis, self.doppler_axis, indexing="ij")
        table = np.column_stack([dd.ravel(), ff.ravel(), self.statistic.ravel()])
        np.savetxt(path, table, delimiter=",", header="delay_samples,doppler_hz,statistic",
                   comments="", fmt=["%.10g", "%.10g", "%.17g"])


@dataclass(frozen=True)
class AcquisitionResult:
    d_hat: float
    fd_hat: float
    peak: float
    threshold: float
    detected: bool
    method: str

    def to_json(self, **extra) -> str:
        return json.dumps({**asdict(self), **extra}, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _finish(method, delay_axis, doppler_axis, stat, threshold) -> tuple[SearchGrid, AcquisitionResult]:
    stat = np.nan_to_num(np.abs(np.asarray(stat, dtype=float)))
    grid = SearchGrid(np.asarray(delay_axis), np.asarray(doppler_axis, dtype=float), stat)
    i, j = grid.argmax()
    peak = float(stat[i, j])
    res = AcquisitionResult(float(grid.delay_axis[i]), float(grid.doppler_axis[j]), peak,
                            float(threshold), bool(peak > threshold), method)
    return grid, res


def _axes(delay_axis, doppler_axis):
    d = np.atleast_1d(np.asarray(delay_axis))
    f = np.atleast_1d(np.asarray(doppler_axis, dtype=float))
    if d.size == 0 or f.size == 0:
        raise ValueError("search axes must be non-empty")
    return d, f


def _power(x: np.ndarray) -> float:
    p = float(np.mean(np.abs(x) ** 2))
    if p <= 0:
        raise ValueError("received signal has zero power")
    return p


def _wipe(x: np.ndarray, dopplers: np.ndarray, fs: float) -> np.ndarray:
    t = np.arange(x.size) / fs
    return x[None, :] * np.exp(-2j * np.pi * dopplers[:, None] * t[None, :])


# --- conventional -------------------------------------------------------------

def conventional_acquire(r: SampledSignal, prn: int, delay_axis, doppler_axis, threshold: float = 0.0,
                         coherent_periods: int = 1) -> tuple[SearchGrid, AcquisitionResult]:
    """Parallel code-phase search: coherent 1 ms blocks, noncoherent envelope sum across blocks."""
    d, f = _axes(delay_axis, doppler_axis)
    fs = r.sample_rate
    spc = samples_per_code(fs)
    blk = spc * coherent_periods
    nb = len(r) // blk
    if nb < 1:
        raise ValueError("signal shorter than one coherent block")
    x = r.samples[: nb * blk]
    code_fft = np.conj(np.fft.fft(replica(prn, fs, blk)))
    stat = np.empty((f.size, blk))
    for k, fd in enumerate(f):
        w = _wipe(x, np.array([fd]), fs)[0].reshape(nb, blk)
        corr = np.fft.ifft(np.fft.fft(w, axis=1) * code_fft, axis=1)
        stat[k] = np.abs(corr).sum(axis=0)
    stat /= nb * np.sqrt(blk * _power(x))
    return _finish("conventional", d, f, stat[:, np.asarray(d) % blk].T, threshold)


# --- cyclic phase ---------------------------------------------------------------

def _spectral_setup(r: SampledSignal, alpha: float, spec_cfg: SpectrumConfig):
    fs = r.sample_rate
    m = spec_cfg.resolve_segment_len(alpha, fs)
    n = len(r) // m
    if n < 1:
        raise ValueError(f"signal of {len(r)} samples is shorter than one segment of {m}")
    return m, n, bin_shift(alpha, m, fs)


def cyclic_phase_estimate(r: SampledSignal, prn: int, alpha: float, delay_axis,
                          spec_cfg: SpectrumConfig | None = None,
                          threshold: float = 0.0) -> tuple[SearchGrid, AcquisitionResult]:
    """Similarity of smoothed cyclic spectra S_{G',G} and S_{R,G} over replica delay.

    Doppler is assumed already removed; the Doppler axis is the singleton {0}.
    """
    spec_cfg = spec_cfg or SpectrumConfig()
    d, _ = _axes(delay_axis, [0.0])
    fs = r.sample_rate
    m, n, shift = _spectral_setup(r, alpha, spec_cfg)
    x = r.samples[: n * m]
    g = replica(prn, fs, n * m)
    R = segment_spectra(x, m, n, spec_cfg.window)
    G = segment_spectra(g, m, n, spec_cfg.window)
    s_rg = cross_spectrum_from_segments(R, G, shift)
    s_gg = cross_spectrum_from_segments(G, G, shift)
    width = spec_cfg.smoothing_bins
    # <h*A, h*B> = <A, h*h*B> for the symmetric smoothing kernel h
    b2 = moving_average(moving_average(s_rg, width), width)
    w = np.conj(s_gg) * b2
    dec = m * np.fft.ifft(w)
    h = shift // 2
    delays = np.asarray(d)
    vals = dec[delays % m] * np.exp(2j * np.pi * h * delays / m)
    ref = np.sqrt(np.sum(np.abs(moving_average(s_gg, width)) ** 2))
    stat = np.abs(vals) / (np.sqrt(_power(x)) * ref)
    return _finish("cyclic_phase", d, [0.0], stat[:, None], threshold)


# --- cyclic Doppler --------------------------------------------------------------

def _cyclic_xcorr_all_lags(X: np.ndarray, y: np.ndarray, alpha: float, fs: float) -> np.ndarray:
    """Symmetric-lag cyclic correlation of x (given by its FFT ``X``) with rows of ``y`` at all circular lags."""
    n = y.shape[-1]
    idx = np.arange(n)
    yw = y * np.exp(2j * np.pi * alpha * idx / fs)
    full = np.fft.ifft(X * np.conj(np.fft.fft(yw, axis=-1)), axis=-1) / n
    lag = np.where(idx < n / 2, idx, idx - n)
    return full * np.exp(-1j * np.pi * alpha * lag / fs)


def cyclic_doppler_estimate(r: SampledSignal, prn: int, alpha: float, doppler_axis,
                            spec_cfg: SpectrumConfig | None = None,
                            threshold: float = 0.0) -> tuple[SearchGrid, AcquisitionResult]:
    """Lag-domain inner product of R^a_{R,G_fdl} with R^a_R over |tau| <= n_tau_max.

    The code phase is assumed aligned; the delay axis is the singleton {0}.
    """
    spec_cfg = spec_cfg or SpectrumConfig()
    _, f = _axes([0], doppler_axis)
    fs = r.sample_rate
    L = len(r)
    if abs(alpha * L / fs - round(alpha * L / fs)) > 1e-9:
        raise ValueError("record must hold a whole number of cycles of alpha")
    ntau = spec_cfg.n_tau_max if spec_cfg.n_tau_max is not None else samples_per_code(fs) // 2
    if ntau >= L / 2:
        raise ValueError(f"n_tau_max={ntau} must be below half the record ({L / 2})")
    x = r.samples
    X = np.fft.fft(x)
    r_self = _cyclic_xcorr_all_lags(X, x[None, :], alpha, fs)[0]
    lag_idx = np.arange(-ntau, ntau + 1) % L
    stat = np.empty(f.size)
    g0 = replica(prn, fs, L)
    t = np.arange(L) / fs
    for k, fdl in enumerate(f):
        g = g0 * np.exp(2j * np.pi * fdl * t)
        r_rg = _cyclic_xcorr_all_lags(X, g[None, :], alpha, fs)[0]
        stat[k] = np.abs(np.sum(r_rg[lag_idx] * np.conj(r_self[lag_idx])))
    stat /= _power(x) ** 1.5 * (2 * ntau + 1)
    return _finish("cyclic_doppler", [0], f, stat[None, :], threshold)


# --- joint ---------------------------------------------------------------------

class JointSearch:
    """Reusable joint delay-Doppler cyclic search for one (prn, fs, length, alpha, grid).

    The replica side is Doppler-free pure code, so shifting it by Theta inside an
    M-sample segment (M a whole number of code periods) is an exact phase ramp.
    Doppler hypotheses are applied by wiping ``exp(-j 2 pi f_dl t)`` off r, which
    leaves the product S_{R,L} conj(S_R) unchanged in the lag domain.
    """

    def __init__(self, prn, fs, n_samples, alpha, delay_axis, doppler_axis, spec_cfg=None):
        self.spec_cfg = spec_cfg or SpectrumConfig()
        self.delay_axis, self.doppler_axis = _axes(delay_axis, doppler_axis)
        self.fs = fs
        self.m = self.spec_cfg.resolve_segment_len(alpha, fs)
        if self.m % samples_per_code(fs):
            raise ValueError("joint search needs a segment length that is a whole number of code periods")
        self.n = n_samples // self.m
        if self.n < 1:
            raise ValueError("signal shorter than one segment")
        self.shift = bin_shift(alpha, self.m, fs)
        self.alpha = alpha
        code = replica(prn, fs, self.m)
        self.C = segment_spectra(code, self.m, 1, self.spec_cfg.window)
        t = np.arange(self.n * self.m) / fs
        self.carriers = np.exp(-2j * np.pi * self.doppler_axis[:, None] * t[None, :])
        h = self.shift // 2
        dl = np.asarray(self.delay_axis)
        self.ramp = np.exp(-2j * np.pi * h * dl / self.m)
        self.delay_idx = dl % self.m

    def statistic(self, r: np.ndarray) -> np.ndarray:
        x = r[: self.n * self.m]
        K = self.doppler_axis.size
        width = self.spec_cfg.smoothing_bins
        xw = (x[None, :] * self.carriers).reshape(K, self.n, self.m)
        R = segment_spectra(xw.reshape(K * self.n, self.m), self.m, K * self.n, self.spec_cfg.window)
        R = R.reshape(K, self.n, self.m)
        s_rl = cross_spectrum_from_segments(R, self.C[None, :, :], self.shift)
        s_r = cross_spectrum_from_segments(R, R, self.shift)
        b2 = moving_average(moving_average(s_r, width), width)
        lam = self.m * np.fft.ifft(s_rl * np.conj(b2), axis=-1)
        vals = lam[:, self.delay_idx] * self.ramp[None, :]
        return (np.abs(vals) / (_power(x) ** 1.5 * self.m)).T

    def __call__(self, r: SampledSignal, threshold: float = 0.0):
        return _finish("joint", self.delay_axis, self.doppler_axis, self.statistic(r.samples), threshold)


def joint_acquire(r: SampledSignal, prn: int, alpha: float, delay_axis, doppler_axis,
                  spec_cfg: SpectrumConfig | None = None,
                  threshold: float = 0.0) -> tuple[SearchGrid, AcquisitionResult]:
    """Peak search of |Lambda_de(Theta, f_dl)| = |sum_f S~_{R,L}(f) conj(S~_R(f))|."""
    search = JointSearch(prn, r.sample_rate, len(r), alpha, delay_axis, doppler_axis, spec_cfg)
    return search(r, threshold)


# --- iterative -------------------------------------------------------------------

def sinc_slope(x: np.ndarray) -> np.ndarray:
    """``(cos(pi x) - sinc(x)) / x``, the derivative of the normalised sinc."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-4
    xs = x[~small]
    out[~small] = (np.cos(np.pi * xs) - np.sinc(xs)) / xs
    out[small] = -(np.pi ** 2 / 3) * x[small]
    return out


def one_sided_cyclic_xcorr(x: np.ndarray, y: np.ndarray, alpha: float, fs: float, lags: np.ndarray) -> np.ndarray:
    """``(1/L) sum_n x[n] conj(y[n - k]) exp(-j 2 pi alpha n / fs)`` at circular lags ``k``."""
    n = x.size
    xw = x * np.exp(-2j * np.pi * alpha * np.arange(n) / fs)
    full = np.fft.ifft(np.fft.fft(xw) * np.conj(np.fft.fft(y))) / n
    return full[np.asarray(lags) % n]


@dataclass(frozen=True)
class IterativeTrace:
    d_hat_per_iter: np.ndarray
    mu: float
    P: int
    n_tau_max: int
    converged: bool
    converged_at: int | None = None
    diverged: bool = False
    alpha: float = 0.0

    @property
    def iterations(self) -> int:
        return self.d_hat_per_iter.size - 1


class IterativeProblem:
    """Least-squares fit of R_{R,G}[n_tau] by a sinc-interpolated, phase-rotated R_G.

    Correlations use the one-sided lag ``x[n] conj(y[n - k])``, for which the
    replica index shift ``i`` carries the phase ``exp(-j 2 pi alpha i / fs)``.
    """

    def __init__(self, r: np.ndarray, g: np.ndarray, alpha: float, fs: float, P: int, n_tau_max: int):
        L = r.size
        if n_tau_max + P >= L / 2:
            raise ValueError(f"n_tau_max + P = {n_tau_max + P} must be below half the record ({L / 2})")
        self.P, self.n_tau_max, self.alpha, self.fs = P, n_tau_max, alpha, fs
        self.taps = np.arange(-P, P + 1)
        self.r_rg = one_sided_cyclic_xcorr(r, g, alpha, fs, np.arange(-n_tau_max, n_tau_max + 1))
        self.r_g = one_sided_cyclic_xcorr(g, g, alpha, fs, np.arange(-n_tau_max - P, n_tau_max + P + 1))
        self.rot = np.exp(-2j * np.pi * alpha * self.taps / fs)

    def _filter(self, kernel: np.ndarray) -> np.ndarray:
        return fftconvolve(self.r_g, kernel, mode="valid")

    def residual(self, d: float) -> np.ndarray:
        return self.r_rg - self._filter(np.sinc(self.taps - d) * self.rot)

    def cost(self, d: float) -> float:
        return float(np.sum(np.abs(self.residual(d)) ** 2))

    def gradient(self, d: float) -> float:
        eps = self.residual(d)
        basis = self._filter(sinc_slope(self.taps - d) * self.rot)
        return float(2 * np.real(np.sum(np.conj(eps) * basis)))


def iterative_phase_estimate(r: SampledSignal, prn: int, alpha: float, mu: float, max_iters: int,
                             P: int, n_tau_max: int, d0: float, g: np.ndarray | None = None,
                             tol: float = 1e-4, patience: int = 10) -> IterativeTrace:
    """Gradient descent ``D[k+1] = D[k] - mu * grad J(D[k])`` on the cyclostatistic fit.

    Divergence (|D| > P) stops the iteration and is flagged in the trace.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    if g is None:
        g = replica(prn, r.sample_rate, len(r))
    problem = IterativeProblem(r.samples, g, alpha, r.sample_rate, P, n_tau_max)
    d = float(d0)
    trace = [d]
    run, converged_at, diverged = 0, None, False
    for k in range(max_iters):
        d_next = d - mu * problem.gradient(d)
        trace.append(d_next)
        if not np.isfinite(d_next) or abs(d_next) > P:
            diverged = True
            break
        run = run + 1 if abs(d_next - d) < tol else 0
        if run >= patience and converged_at is None:
            converged_at = k + 1
        d = d_next
    return IterativeTrace(np.array(trace), mu, P, n_tau_max, converged_at is not None, converged_at,
                          diverged, alpha)


# --- thresholds -----------------------------------------------------------------

def make_searcher(method: str, cfg: AcquisitionConfig) -> Callable[[SampledSignal, float], tuple]:
    """Bind a grid method to a configuration; returns ``f(r, threshold) -> (grid, result)``."""
    d, f = cfg.delay_axis(), cfg.doppler_axis()
    if method == "conventional":
        return lambda r, thr=0.0: conventional_acquire(r, cfg.prn, d, f, thr)
    if method == "cyclic_phase":
        return lambda r, thr=0.0: cyclic_phase_estimate(r, cfg.prn, cfg.alpha, d, cfg.spectrum, thr)
    if method == "cyclic_doppler":
        return lambda r, thr=0.0: cyclic_doppler_estimate(r, cfg.prn, cfg.alpha, f, cfg.spectrum, thr)
    if method == "joint":
        search = JointSearch(cfg.prn, cfg.sample_rate, cfg.n_samples, cfg.alpha, d, f, cfg.spectrum)
        return search
    raise ValueError(f"unknown grid method {method!r}; expected one of {METHODS[:4]}")


def noise_only(n_samples: int, fs: float, seed) -> SampledSignal:
    rng = np.random.default_rng(seed)
    x = (rng.standard_normal(n_samples) + 1j * rng.standard_normal(n_samples)) / np.sqrt(2)
    return SampledSignal(x, fs)


def calibrate_threshold(method: str, noise_trials: int, target_pfa: float, cfg: AcquisitionConfig,
                        rng_seed: int = 0) -> float:
    """Empirical (1 - target_pfa) quantile of the grid-maximum statistic under noise only."""
    if not 0 < target_pfa < 1:
        raise ValueError(f"target_pfa must be in (0, 1), got {target_pfa}")
    if noise_trials < 1:
        raise ValueError("noise_trials must be >= 1")
    search = make_searcher(method, cfg)
    peaks = np.empty(noise_trials)
    for i in range(noise_trials):
        r = noise_only(cfg.n_samples, cfg.sample_rate, np.random.SeedSequence([rng_seed, i]))
        peaks[i] = search(r, 0.0)[1].peak
    return float(np.quantile(peaks, 1 - target_pfa))
