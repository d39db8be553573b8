"""GPS L1 C/A code generation and sampled-signal synthesis.

Codes come from the usual pair of 10-stage LFSRs (G1 taps 3,10; G2 taps
2,3,6,8,9,10) with a per-PRN G2 phase-select tap pair.  Code bit 0 maps to
chip +1 and bit 1 to chip -1.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

CHIP_RATE = 1.023e6
CODE_LENGTH = 1023
CODE_PERIOD = 1e-3

# G2 phase-select taps (1-based register stages), PRN 1..32
G2_TAPS = {
    1: (2, 6), 2: (3, 7), 3: (4, 8), 4: (5, 9), 5: (1, 9), 6: (2, 10),
    7: (1, 8), 8: (2, 9), 9: (3, 10), 10: (2, 3), 11: (3, 4), 12: (5, 6),
    13: (6, 7), 14: (7, 8), 15: (8, 9), 16: (9, 10), 17: (1, 4), 18: (2, 5),
    19: (3, 6), 20: (4, 7), 21: (5, 8), 22: (6, 9), 23: (1, 3), 24: (4, 6),
    25: (5, 7), 26: (6, 8), 27: (7, 9), 28: (8, 10), 29: (1, 6), 30: (2, 7),
    31: (3, 8), 32: (4, 9),
}


class ConfigurationError(ValueError):
    """Signal parameters that cannot be synthesized (e.g. aliasing)."""


@dataclass(frozen=True)
class CaCode:
    prn: int
    chips: np.ndarray

    def __post_init__(self):
        chips = np.asarray(self.chips, dtype=np.int8)
        if chips.shape != (CODE_LENGTH,):
            raise ValueError(f"C/A code must have {CODE_LENGTH} chips, got {chips.shape}")
        if not np.all(np.abs(chips) == 1):
            raise ValueError("chips must be +1/-1")
        chips = chips.copy()
        chips.setflags(write=False)
        object.__setattr__(self, "chips", chips)

    def bits(self) -> np.ndarray:
        """Logic-level code bits (chip +1 -> 0, chip -1 -> 1)."""
        return ((1 - self.chips) // 2).astype(np.uint8)

    def first_chips_octal(self, n: int = 10) -> str:
        value = int("".join(str(b) for b in self.bits()[:n]), 2)
        return format(value, "o")


def _lfsr_sequence(taps: tuple[int, ...], select: tuple[int, ...] | None) -> np.ndarray:
    reg = [1] * 10
    out = np.empty(CODE_LENGTH, dtype=np.uint8)
    for k in range(CODE_LENGTH):
        if select is None:
            out[k] = reg[9]
        else:
            out[k] = reg[select[0] - 1] ^ reg[select[1] - 1]
        fb = 0
        for t in taps:
            fb ^= reg[t - 1]
        reg = [fb] + reg[:9]
    return out


_G1 = None
_CACHE: dict[int, CaCode] = {}


def generate_ca_code(prn: int) -> CaCode:
    """Return the 1023-chip +-1 C/A code for satellite ``prn`` (1..32)."""
    global _G1
    if not isinstance(prn, (int, np.integer)) or not 1 <= prn <= 32:
        raise ValueError(f"prn must be an integer in 1..32, got {prn!r}")
    prn = int(prn)
    if prn not in _CACHE:
        if _G1 is None:
            _G1 = _lfsr_sequence((3, 10), None)
        g2 = _lfsr_sequence((2, 3, 6, 8, 9, 10), G2_TAPS[prn])
        bits = _G1 ^ g2
        _CACHE[prn] = CaCode(prn, 1 - 2 * bits.astype(np.int8))
    return _CACHE[prn]


def samples_per_code(fs: float) -> int:
    """Samples in one 1 ms code period; ``fs`` must give an integer count."""
    spc = fs * CODE_PERIOD
    if abs(spc - round(spc)) > 1e-6:
        raise ConfigurationError(f"fs={fs} does not give an integer number of samples per code period")
    return int(round(spc))


def _chip_index(n: np.ndarray, delay_samples: float, fs: float) -> np.ndarray:
    if float(delay_samples).is_integer() and float(fs).is_integer():
        # exact rational arithmetic avoids floor() flips at chip boundaries
        ratio = Fraction(int(CHIP_RATE), int(fs))
        m = (n - int(delay_samples)) * ratio.numerator
        return (m // ratio.denominator) % CODE_LENGTH
    t_chips = (n - delay_samples) * (CHIP_RATE / fs)
    return np.floor(np.mod(t_chips, CODE_LENGTH) + 1e-12).astype(np.int64) % CODE_LENGTH


def code_samples(prn: int, fs: float, n_samples: int, delay_samples: float = 0.0) -> np.ndarray:
    """Rectangular-chip code waveform ``c(floor(((n/fs - delay) mod T0)/Tc))``."""
    chips = generate_ca_code(prn).chips.astype(np.float64)
    n = np.arange(n_samples, dtype=np.int64)
    return chips[_chip_index(n, delay_samples, fs)]


@dataclass(frozen=True)
class SignalParams:
    """Parameters of one received C/A signal.

    ``code_delay`` is in chips.  ``cnr`` in dB-Hz, ``None`` for noiseless.
    ``noise_ref_power`` overrides the carrier power used by the C/N0
    convention (needed when ``amplitude`` is 0).
    """

    prn: int = 1
    code_delay: float = 0.0
    doppler: float = 0.0
    carrier_freq: float = 0.0
    carrier_phase: float = 0.0
    amplitude: float = 1.0
    sample_rate: float = 2.046e6
    duration: float = 1e-3
    cnr: float | None = None
    mode: str = "complex"
    fractional_delay: bool = False
    noise_ref_power: float | None = None

    def __post_init__(self):
        if self.mode not in ("complex", "real"):
            raise ConfigurationError(f"mode must be 'complex' or 'real', got {self.mode!r}")
        if not 0 <= self.code_delay < CODE_LENGTH:
            raise ConfigurationError(f"code_delay must be in [0, 1023) chips, got {self.code_delay}")
        periods = self.duration / CODE_PERIOD
        if periods < 1 - 1e-9 or abs(periods - round(periods)) > 1e-6:
            raise ConfigurationError(f"duration must be a whole number of 1 ms code periods, got {self.duration}")
        f_max = abs(self.carrier_freq) + abs(self.doppler)
        if self.mode == "real" and self.sample_rate <= 2 * f_max:
            raise ConfigurationError(
                f"sample_rate {self.sample_rate} violates Nyquist for carrier {self.carrier_freq} + doppler {self.doppler}")
        if self.mode == "complex" and abs(self.carrier_freq + self.doppler) >= self.sample_rate / 2:
            raise ConfigurationError("carrier + doppler outside the complex baseband")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def delay_samples(self) -> float:
        d = self.code_delay * self.sample_rate / CHIP_RATE
        return d if self.fractional_delay else float(round(d))

    @property
    def carrier_power(self) -> float:
        return self.amplitude ** 2 if self.mode == "complex" else self.amplitude ** 2 / 2

    def noise_variance(self) -> float:
        if self.cnr is None:
            return 0.0
        ref = self.carrier_power if self.noise_ref_power is None else self.noise_ref_power
        return noise_variance(self.cnr, ref, self.sample_rate)


@dataclass(frozen=True)
class SampledSignal:
    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0
    mode: str = "complex"

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.complex128)
        if x.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples contain NaN or Inf")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def time(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    def scaled(self, factor: complex) -> "SampledSignal":
        return SampledSignal(self.samples * factor, self.sample_rate, self.start_time, self.mode)


def noise_variance(cnr: float, signal_power: float, fs: float) -> float:
    """Per-sample noise variance for C/N0 ``cnr`` (dB-Hz): ``P * fs / 10**(cnr/10)``."""
    if math.isinf(cnr) and cnr > 0:
        return 0.0
    return signal_power * fs / 10 ** (cnr / 10)


def _gaussian(rng: np.random.Generator, n: int, var: float, mode: str) -> np.ndarray:
    if mode == "complex":
        s = math.sqrt(var / 2)
        return s * rng.standard_normal(n) + 1j * s * rng.standard_normal(n)
    return math.sqrt(var) * rng.standard_normal(n) + 0j


def synthesize(params: SignalParams, rng_seed: int | None = 0) -> SampledSignal:
    """Sample ``A c(.) carrier(n) + noise(n)`` for the given parameters."""
    fs = params.sample_rate
    n = params.n_samples
    code = code_samples(params.prn, fs, n, params.delay_samples)
    t = np.arange(n) / fs
    phase = 2 * np.pi * (params.carrier_freq + params.doppler) * t + params.carrier_phase
    if params.mode == "complex":
        carrier = np.exp(1j * phase)
    else:
        carrier = np.cos(phase) + 0j
    x = params.amplitude * code * carrier
    var = params.noise_variance()
    if var > 0:
        x = x + _gaussian(np.random.default_rng(rng_seed), n, var, params.mode)
    return SampledSignal(x, fs, 0.0, params.mode)


def add_awgn(signal: SampledSignal, cnr: float, signal_power: float, rng_seed: int | None = 0) -> SampledSignal:
    if signal_power <= 0:
        raise ValueError("signal_power must be positive")
    if math.isnan(cnr):
        raise ValueError("cnr must not be NaN")
    var = noise_variance(cnr, signal_power, signal.sample_rate)
    if var == 0:
        return signal
    noise = _gaussian(np.random.default_rng(rng_seed), len(signal), var, signal.mode)
    return SampledSignal(signal.samples + noise, signal.sample_rate, signal.start_time, signal.mode)


def replica(prn: int, fs: float, n_samples: int, delay_samples: float = 0.0, doppler: float = 0.0) -> np.ndarray:
    """Noiseless complex local replica ``c(n - delay) exp(j 2 pi doppler n / fs)``."""
    x = code_samples(prn, fs, n_samples, delay_samples).astype(np.complex128)
    if doppler:
        x *= np.exp(2j * np.pi * doppler * np.arange(n_samples) / fs)
    return x


def bandlimited_delay(x: np.ndarray, delay: float) -> np.ndarray:
    """Circularly delay ``x`` by a fractional number of samples via an FFT phase ramp."""
    n = x.size
    k = np.fft.fftfreq(n) * n
    ramp = np.exp(-2j * np.pi * k * delay / n)
    if n % 2 == 0:
        # Nyquist bin: symmetric split keeps real input real
        ramp[n // 2] = np.cos(np.pi * delay)
    return np.fft.ifft(np.fft.fft(x) * ramp)


# --- file formats -------------------------------------------------------------

_MAGIC = b"CGPS"
_VERSION = 1
_HEADER = struct.Struct("<4sIdQB7x")
_MODES = {"complex": 0, "real": 1}


def write_cgps(path, signal: SampledSignal) -> None:
    """Write a signal as a 32-byte header followed by interleaved float64 I/Q."""
    header = _HEADER.pack(_MAGIC, _VERSION, float(signal.sample_rate), len(signal), _MODES[signal.mode])
    iq = np.empty(2 * len(signal), dtype="<f8")
    iq[0::2] = signal.samples.real
    iq[1::2] = signal.samples.imag
    with open(path, "wb") as f:
        f.write(header)
        f.write(iq.tobytes())


def read_cgps(path) -> SampledSignal:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError("file too short for a CGPS header")
    magic, version, fs, length, mode = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise ValueError(f"unsupported CGPS version {version}")
    iq = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if iq.size != 2 * length:
        raise ValueError(f"header says {length} samples, payload has {iq.size // 2}")
    inv = {v: k for k, v in _MODES.items()}
    return SampledSignal(iq[0::2] + 1j * iq[1::2], fs, 0.0, inv[mode])


def write_csv(path, signal: SampledSignal) -> None:
    idx = np.arange(len(signal))
    table = np.column_stack([idx, signal.samples.real, signal.samples.imag])
    np.savetxt(path, table, delimiter=",", header="index,i,q", comments="", fmt=["%d", "%.17g", "%.17g"])


def read_csv(path, sample_rate: float, mode: str = "complex") -> SampledSignal:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return SampledSignal(table[:, 1] + 1j * table[:, 2], sample_rate, 0.0, mode)
