"""Cyclic autocorrelation and cyclic (cross) spectrum estimators.

Lag products use the conjugate convention ``x(t + tau/2) conj(y(t - tau/2))``
weighted by ``exp(-j 2 pi alpha t)``.  All sums are circular over the record,
which makes the single-segment periodogram and the lag-domain transform agree
exactly when the cyclic shift is a whole even number of bins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .signal_model import SampledSignal


class AlignmentError(ValueError):
    """Cyclic frequency does not fall on the bin grid of the chosen segment length."""


@dataclass(frozen=True)
class CyclicAutocorr:
    alpha: float
    lags: np.ndarray
    values: np.ndarray
    averaging_span: int


@dataclass(frozen=True)
class CyclicSpectrum:
    alpha: float
    freq_bin_hz: float
    values: np.ndarray
    segment_count: int
    segment_len: int
    smoothing_bins: int = 1
    window: str = "rect"
    sample_rate: float = 0.0

    @property
    def freqs(self) -> np.ndarray:
        return np.fft.fftfreq(self.segment_len, 1.0 / self.sample_rate)

    def metadata(self) -> dict:
        return {
            "alpha": self.alpha, "M": self.segment_len, "N": self.segment_count,
            "I": self.smoothing_bins, "fs": self.sample_rate, "window": self.window,
        }


def _check_pair(x: SampledSignal, y: SampledSignal):
    if x.sample_rate != y.sample_rate:
        raise ValueError(f"sample rates differ: {x.sample_rate} vs {y.sample_rate}")


def _cycles_per_record(alpha: float, n: int, fs: float) -> float | None:
    c = alpha * n / fs
    return c if abs(c - round(c)) < 1e-9 else None


def cyclic_autocorr(x: SampledSignal, y: SampledSignal, alpha: float, lags) -> CyclicAutocorr:
    """Circular cyclic cross-correlation at cyclic frequency ``alpha`` (Hz).

    Odd lags put the extra sample on the ``x`` side (ceil/floor split) and
    carry a half-sample phase correction so the product stays centred.
    """
    _check_pair(x, y)
    if len(x) != len(y):
        raise ValueError(f"signal lengths differ: {len(x)} vs {len(y)}")
    lags = np.atleast_1d(np.asarray(lags, dtype=np.int64))
    n = len(x)
    if lags.size and np.max(np.abs(lags)) > n / 2:
        raise ValueError(f"|lag| must not exceed {n / 2}")
    fs = x.sample_rate
    xs, ys = x.samples, y.samples
    idx = np.arange(n)

    if _cycles_per_record(alpha, n, fs) is not None:
        # phase wrap is harmless: R(tau) = e^{-j pi alpha tau/fs} sum_b x[b+tau] conj(y[b] e^{j 2 pi alpha b/fs})
        yw = ys * np.exp(2j * np.pi * alpha * idx / fs)
        full = np.fft.ifft(np.fft.fft(xs) * np.conj(np.fft.fft(yw)))
        vals = full[lags % n] * np.exp(-1j * np.pi * alpha * lags / fs)
    else:
        w = np.exp(-2j * np.pi * alpha * idx / fs)
        vals = np.empty(lags.size, dtype=np.complex128)
        for k, tau in enumerate(lags):
            fwd, back = -(-tau // 2), tau // 2
            prod = np.roll(xs, -fwd) * np.conj(np.roll(ys, back))
            vals[k] = np.sum(prod * w) * np.exp(-1j * np.pi * alpha * (tau % 2) / fs)
    return CyclicAutocorr(alpha, lags, vals / n, n)


def bin_shift(alpha: float, segment_len: int, fs: float) -> int:
    """Integer spectral shift ``round(alpha M / fs)``; must be even."""
    phi = alpha * segment_len / fs
    r = round(phi)
    if abs(phi - r) > 1e-9 or r % 2:
        raise AlignmentError(
            f"alpha={alpha} Hz gives alpha*M/fs={phi:.6g} with M={segment_len}, fs={fs}; "
            "need an even integer")
    return int(r)


def _window(kind: str, m: int) -> np.ndarray:
    if kind == "rect":
        return np.ones(m)
    if kind == "hann":
        w = np.hanning(m + 1)[:m]
        return w / np.sqrt(np.mean(w ** 2))
    raise ValueError(f"unknown window {kind!r}")


def segment_spectra(x: np.ndarray, segment_len: int, segment_count: int, window: str = "rect") -> np.ndarray:
    """Row ``n`` is the length-M DFT of contiguous segment ``n``, scaled by 1/sqrt(M)."""
    seg = x[: segment_len * segment_count].reshape(segment_count, segment_len)
    return np.fft.fft(seg * _window(window, segment_len), axis=1) / np.sqrt(segment_len)


def cross_spectrum_from_segments(R: np.ndarray, G: np.ndarray, shift: int) -> np.ndarray:
    """``(1/N) sum_n R_n[m + shift/2] conj(G_n[m - shift/2])`` with circular bins."""
    h = shift // 2
    return np.mean(np.roll(R, -h, axis=-1) * np.conj(np.roll(G, h, axis=-1)), axis=-2)


def cyclic_periodogram(r: SampledSignal, g: SampledSignal, alpha: float, segment_len: int,
                       segment_count: int, window: str = "rect") -> CyclicSpectrum:
    """Time-averaged cyclic cross periodogram over ``segment_count`` contiguous segments."""
    _check_pair(r, g)
    fs = r.sample_rate
    if segment_len < 2 or segment_count < 1:
        raise ValueError("need segment_len >= 2 and segment_count >= 1")
    if segment_len * segment_count > min(len(r), len(g)):
        raise ValueError(
            f"N*M = {segment_len * segment_count} exceeds signal length {min(len(r), len(g))}")
    shift = bin_shift(alpha, segment_len, fs)
    R = segment_spectra(r.samples, segment_len, segment_count, window)
    G = R if g is r else segment_spectra(g.samples, segment_len, segment_count, window)
    S = cross_spectrum_from_segments(R, G, shift)
    return CyclicSpectrum(alpha, fs / segment_len, S, segment_count, segment_len, 1, window, fs)


def smoothing_width(delta_f: float, freq_bin_hz: float) -> int:
    """Largest odd bin count not exceeding ``delta_f / freq_bin_hz``."""
    ratio = delta_f / freq_bin_hz
    if ratio < 1 - 1e-12:
        raise ValueError(f"delta_f={delta_f} Hz is narrower than one bin ({freq_bin_hz} Hz)")
    i = int(np.floor(ratio + 1e-9))
    return i if i % 2 else i - 1


def moving_average(values: np.ndarray, width: int) -> np.ndarray:
    """Centred circular moving average over ``width`` (odd) bins along the last axis."""
    if width == 1:
        return values.copy()
    m = values.shape[-1]
    kernel = np.zeros(m)
    half = width // 2
    kernel[np.arange(-half, half + 1) % m] = 1.0 / width
    return np.fft.ifft(np.fft.fft(values, axis=-1) * np.fft.fft(kernel), axis=-1)


def smooth_spectrum(s: CyclicSpectrum, delta_f: float) -> CyclicSpectrum:
    width = smoothing_width(delta_f, s.freq_bin_hz)
    if width >= s.segment_len:
        raise ValueError(f"smoothing width {width} must be below M={s.segment_len}")
    vals = s.values.copy() if width == 1 else moving_average(s.values, width)
    return CyclicSpectrum(s.alpha, s.freq_bin_hz, vals, s.segment_count, s.segment_len,
                          width, s.window, s.sample_rate)


def write_spectrum_csv(path, s: CyclicSpectrum) -> None:
    """CSV of the spectrum plus a ``.json`` metadata sidecar next to it."""
    m = np.arange(s.segment_len)
    v = s.values
    table = np.column_stack([m, s.freqs, v.real, v.imag, np.abs(v)])
    np.savetxt(path, table, delimiter=",", header="bin_index,freq_hz,re,im,magnitude",
               comments="", fmt=["%d", "%.10g", "%.17g", "%.17g", "%.17g"])
    sidecar = str(path)
    sidecar = sidecar[:-4] + ".json" if sidecar.endswith(".csv") else sidecar + ".json"
    with open(sidecar, "w") as f:
        json.dump(s.metadata(), f, indent=2)
