"""Rayleigh fading emulation with order-2 recursive oscillators, plus word-length analysis.

Each sinusoid obeys ``I[n] = 2 cos(w) I[n-1] - I[n-2]``.  Quantizing the
coefficient moves the oscillator frequency but never its amplitude; the
analysis functions quantify that bias and the MSE / bit-rate trade-off of a
sample-and-hold channel with P-bit samples updated every T seconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.signal import lfilter, lfiltic

LN4 = np.log(4.0)


class AnalysisError(ArithmeticError):
    """The quadratic bias model has no real root (quantization too coarse)."""


def quantize(x, bits: int):
    """Round to the nearest multiple of ``2**-bits``."""
    scale = 2.0 ** bits
    return np.round(np.asarray(x) * scale) / scale


def sos_frequencies(L: int, f_D: float, T: float) -> np.ndarray:
    """``w_l = 2 pi f_D T cos(pi (2l - 1) / (4L))``, returned in increasing order."""
    l = np.arange(1, L + 1)
    return np.sort(2 * np.pi * f_D * T * np.cos(np.pi * (2 * l - 1) / (4 * L)))


@dataclass
class SosChannel:
    """Stateful sum-of-sinusoids generator; ``P=None`` runs the unquantized recursion."""

    L: int
    f_D: float
    update_period_T: float
    P: int | None = None
    state_bits: int | None = None
    rng_seed: int = 0
    omega: np.ndarray = field(init=False)
    coeff: np.ndarray = field(init=False)
    state_i: np.ndarray = field(init=False, repr=False)
    state_q: np.ndarray = field(init=False, repr=False)
    n: int = field(init=False, default=0)

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be >= 1")
        self.omega = sos_frequencies(self.L, self.f_D, self.update_period_T)
        if not np.all((self.omega > 0) & (self.omega < np.pi)):
            raise ValueError("every w_l must lie in (0, pi); reduce f_D * T below 0.5")
        b = np.cos(self.omega)
        self.coeff = 2 * (b if self.P is None else quantize(b, self.P))
        if not np.all(np.abs(self.coeff) < 2):
            raise ValueError(f"P={self.P} rounds cos(w_l) to +-1 for the lowest sinusoid; the oscillator degenerates")
        rng = np.random.default_rng(self.rng_seed)
        phi_i = rng.uniform(0, 2 * np.pi, self.L)
        phi_q = rng.uniform(0, 2 * np.pi, self.L)
        # columns are (x[n-1], x[n-2]) relative to the next output; I[0], I[1] seed the pair
        self.state_i = np.stack([np.cos(self.omega + phi_i), np.cos(phi_i)], axis=1)
        self.state_q = np.stack([np.cos(self.omega + phi_q), np.cos(phi_q)], axis=1)
        self._pending = 2

    def _run(self, state: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
        out = np.empty((self.L, n))
        if self.state_bits is None:
            for l in range(self.L):
                a = [1.0, -self.coeff[l], 1.0]
                zi = lfiltic([1.0], a, y=state[l])
                out[l] = lfilter([1.0], a, np.zeros(n), zi=zi)[0]
        else:
            y1, y2 = state[:, 0].copy(), state[:, 1].copy()
            for k in range(n):
                y = quantize(self.coeff * y1 - y2, self.state_bits)
                out[:, k] = y
                y1, y2 = y, y1
        new_state = np.stack([out[:, -1], out[:, -2] if n > 1 else state[:, 0]], axis=1)
        return out, new_state

    def advance_components(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Next ``n`` samples of every sinusoid, shape ``(L, n)`` for I and Q."""
        if n < 1:
            raise ValueError("n must be >= 1")
        lead = min(self._pending, n)
        parts_i, parts_q = [], []
        if lead:
            # the two seed samples come out first, oldest first
            parts_i.append(self.state_i[:, ::-1][:, 2 - self._pending: 2 - self._pending + lead])
            parts_q.append(self.state_q[:, ::-1][:, 2 - self._pending: 2 - self._pending + lead])
            self._pending -= lead
        rest = n - lead
        if rest:
            oi, self.state_i = self._run(self.state_i, rest)
            oq, self.state_q = self._run(self.state_q, rest)
            parts_i.append(oi)
            parts_q.append(oq)
        self.n += n
        return np.concatenate(parts_i, axis=1), np.concatenate(parts_q, axis=1)

    def advance(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Summed in-phase and quadrature processes for the next ``n`` samples."""
        i, q = self.advance_components(n)
        return i.sum(axis=0), q.sum(axis=0)


def envelope(i_sum: np.ndarray, q_sum: np.ndarray, L: int) -> np.ndarray:
    return np.sqrt(i_sum ** 2 + q_sum ** 2) / L


def sos_generate(cfg: SosChannel, n_samples: int) -> np.ndarray:
    """Envelope ``x[n] = (1/L) sqrt((sum I_l)^2 + (sum Q_l)^2)`` for ``n_samples`` steps."""
    i, q = cfg.advance(n_samples)
    return envelope(i, q, cfg.L)


def write_trace_csv(path, i_sum, q_sum, L: int) -> None:
    env = envelope(i_sum, q_sum, L)
    table = np.column_stack([np.arange(env.size), i_sum, q_sum, env])
    np.savetxt(path, table, delimiter=",", header="n,i,q,envelope", comments="",
               fmt=["%d", "%.17g", "%.17g", "%.17g"])


# --- quantization analysis ----------------------------------------------------------

@dataclass(frozen=True)
class QuantAnalysis:
    omega_l: float
    delta_b: float
    delta_omega: float
    lambda_mag: float


def eigen_roots(B: float) -> tuple[float, float]:
    """Magnitude and angle of ``B + j sqrt(1 - B^2)``, the root of ``lambda^2 - 2 B lambda + 1 = 0``."""
    if not abs(B) < 1:
        raise ValueError(f"|B| must be < 1 for a non-degenerate oscillator, got {B}")
    lam = complex(B, np.sqrt(1 - B * B))
    return abs(lam), float(np.arctan2(lam.imag, lam.real))


def _bias_coefficients(omega_l: float, delta_b):
    c, s = np.cos(omega_l), np.sin(omega_l)
    c1 = -2 * s / c ** 3
    c2 = 1 / c ** 2
    num = s ** 2 - 2 * c * delta_b - delta_b ** 2
    den = c ** 2 + 2 * c * delta_b + delta_b ** 2
    c3 = np.sqrt(num / den) - np.tan(omega_l)
    return c1, c2, c3


def frequency_bias(omega_l: float, delta_b: float) -> float:
    """Frequency shift of the oscillator when ``cos(w_l)`` is perturbed by ``delta_b``.

    ``C3 = tan(w_l + dw) - tan(w_l)`` is matched by the second-order expansion
    ``C2 dw + C1 dw^2``, so the shift solves ``C1 dw^2 + C2 dw - C3 = 0``.  The
    small-magnitude root is returned in the cancellation-free form
    ``2 C3 / (C2 + sqrt(C2^2 + 4 C1 C3))``.
    """
    if not 0 < omega_l < np.pi / 2:
        raise ValueError(f"omega_l must be in (0, pi/2), got {omega_l}")
    if not abs(np.cos(omega_l) + delta_b) < 1:
        raise ValueError(f"cos(omega_l) + delta_b = {np.cos(omega_l) + delta_b:.6g} leaves (-1, 1); "
                         "the perturbed oscillator degenerates")
    c1, c2, c3 = _bias_coefficients(omega_l, delta_b)
    disc = c2 ** 2 + 4 * c1 * c3
    if disc < 0:
        raise AnalysisError(f"negative discriminant at omega_l={omega_l}, delta_b={delta_b}")
    return float(2 * c3 / (c2 + np.sqrt(disc)))


def exact_frequency_bias(omega_l: float, delta_b: float) -> float:
    b = np.cos(omega_l) + delta_b
    return float(np.arctan2(np.sqrt(1 - b * b), b) - omega_l)


def quant_analysis(omega_l: float, P: int, sign: int = 1) -> QuantAnalysis:
    """Worst-case analysis at ``delta_b = sign * 2^-(P+1)``."""
    db = sign * 2.0 ** -(P + 1)
    mag, _ = eigen_roots(np.cos(omega_l) + db)
    return QuantAnalysis(omega_l, db, frequency_bias(omega_l, db), mag)


def frequency_gaps(L: int) -> tuple[float, float]:
    """Gaps around the anchor ``pi / (2L)``: ``2 pi (1 - cos(pi/2L))`` and ``2 pi (cos(pi/2L) - cos(pi/L))``."""
    a = np.pi / (2 * L)
    return 2 * np.pi * (1 - np.cos(a)), 2 * np.pi * (np.cos(a) - np.cos(2 * a))


def check_separation(L: int, P: int) -> bool:
    """Worst-case frequency bias at ``w = pi/(2L)`` stays inside both neighbouring gaps."""
    if L < 2 or P < 1:
        raise ValueError("need L >= 2 and P >= 1")
    w = np.pi / (2 * L)
    db = 2.0 ** -(P + 1)
    gap_hi, gap_lo = frequency_gaps(L)
    try:
        up = frequency_bias(w, db)
        down = frequency_bias(w, -db)
    except (ValueError, AnalysisError):
        return False
    return abs(up) <= gap_hi and abs(down) <= gap_lo


def max_feasible_L(P: int, L_limit: int = 1 << 14) -> int:
    """Largest L such that every ``2 <= L' <= L`` passes :func:`check_separation` (0 if none)."""
    best = 0
    for L in range(2, L_limit + 1):
        if not check_separation(L, P):
            break
        best = L
    return best


# --- MSE model -----------------------------------------------------------------

def _check_nyquist(T: float, f_D: float):
    if T <= 0 or f_D <= 0:
        raise ValueError("T and f_D must be positive")
    if T > 1 / (2 * f_D) * (1 + 1e-12):
        raise ValueError(f"T={T} violates the Nyquist bound 1/(2 f_D) = {1 / (2 * f_D)}")


def _one_minus_sinc(x):
    """``1 - sinc(x)`` without cancellation near zero."""
    x = np.asarray(x, dtype=float)
    z = (np.pi * x) ** 2
    series = z / 6 * (1 - z / 20 * (1 - z / 42))
    return np.where(z < 1e-4, series, 1 - np.sinc(x))


def _sinc_d1(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    return np.where(small, -(np.pi ** 2 / 3) * x, (np.cos(np.pi * xs) - np.sinc(xs)) / xs)


def _sinc_d2(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    big = -np.pi ** 2 * np.sinc(xs) - 2 * _sinc_d1(xs) / xs
    return np.where(small, -(np.pi ** 2) / 3 + (np.pi ** 4 / 10) * x ** 2, big)


def _doppler_average(fn, f_D: float) -> float:
    """``int S_x(f) fn(f) df`` with the Jakes spectrum, via ``f = f_D sin(u)``."""
    val, _ = integrate.quad(lambda u: fn(f_D * np.sin(u)), 0, np.pi / 2, epsabs=0, epsrel=1e-10, limit=200)
    return 2 * val / np.pi


def interpolation_mse(T: float, f_D: float) -> float:
    return _doppler_average(lambda f: _one_minus_sinc(f * T) ** 2, f_D)


def quantization_floor(P: int) -> float:
    return 4.0 ** -P / 12


def mse_model(P: int, T: float, f_D: float) -> float:
    """``e_s = int S_x(f) (1 - sinc(f T))^2 df + 4^-P / 12`` over ``|f| <= f_D``."""
    if P < 1:
        raise ValueError("P must be >= 1")
    _check_nyquist(T, f_D)
    return interpolation_mse(T, f_D) + quantization_floor(P)


def _de1_dT(T, f_D):
    def fn(f):
        x = f * T
        return 2 * _one_minus_sinc(x) * (-_sinc_d1(x)) * f
    return _doppler_average(fn, f_D)


def _d2e1_dT2(T, f_D):
    def fn(f):
        x = f * T
        return 2 * (_sinc_d1(x) ** 2 - _one_minus_sinc(x) * _sinc_d2(x)) * f * f
    return _doppler_average(fn, f_D)


def hull_slope_residual(P: int, T: float, f_D: float) -> float:
    """``dg/dT`` after eliminating the multiplier with ``dg/dP = 0``."""
    return _de1_dT(T, f_D) - (LN4 / 12) * 4.0 ** -P * P / T


def lagrangian_hessian(P: int, T: float, f_D: float) -> np.ndarray:
    lam = T * (LN4 / 12) * 4.0 ** -P
    g_pp = (LN4 ** 2 / 12) * 4.0 ** -P
    g_pt = -lam / T ** 2
    g_tt = _d2e1_dT2(T, f_D) + 2 * lam * P / T ** 3
    return np.array([[g_pp, g_pt], [g_pt, g_tt]])


def stationary_periods(P: int, f_D: float, T_min: float = 1e-8, n_scan: int = 400) -> list[float]:
    """Roots of :func:`hull_slope_residual` on ``[T_min, 1/(2 f_D)]`` by sign-change scan + Brent."""
    grid = np.geomspace(T_min, 1 / (2 * f_D), n_scan)
    vals = np.array([hull_slope_residual(P, t, f_D) for t in grid])
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0:
            roots.append(float(a))
        elif fa * fb < 0:
            roots.append(float(optimize.brentq(lambda t: hull_slope_residual(P, t, f_D), a, b, xtol=1e-15, rtol=1e-12)))
    return roots


@dataclass(frozen=True)
class MsePoint:
    P: int
    T: float
    f_D: float
    e_s: float

    @property
    def rate(self) -> float:
        return self.P / self.T


@dataclass(frozen=True)
class WordlengthResult:
    P: int
    T: float
    e_s: float
    curve: list
    stationary: list

    def to_json(self) -> str:
        def row(p):
            return {"P": p.P, "T": p.T, "e_s": p.e_s, "rate": p.rate}
        return json.dumps({"P": self.P, "T": self.T, "e_s": self.e_s, "rate": self.P / self.T,
                           "hull": [row(p) for p in self.curve],
                           "stationary": [{**row(p), "hessian_det": d} for p, d in self.stationary]},
                          indent=2)


def _lower_hull(points: list[MsePoint]) -> list[MsePoint]:
    pts = sorted(points, key=lambda p: (p.rate, p.e_s))
    hull: list[MsePoint] = []
    for p in pts:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (b.rate - a.rate) * (p.e_s - a.e_s) - (b.e_s - a.e_s) * (p.rate - a.rate)
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    # keep the decreasing branch: beyond the minimum, more rate buys nothing
    k = int(np.argmin([p.e_s for p in hull]))
    return hull[: k + 1]


def optimize_wordlength(C: float, f_D: float, P_range=(8, 24), T_min: float = 1e-8,
                        n_grid: int = 60) -> WordlengthResult:
    """Minimum-MSE (P, T) under the bit-rate budget ``P / T <= C``.

    Candidate points per P are a log grid of T, the Lagrangian stationary
    periods with positive-definite Hessian, and the budget edge ``T = P / C``.
    The answer is the minimum-MSE vertex of the lower convex hull of the
    feasible candidates in the (rate, MSE) plane.
    """
    p_lo, p_hi = P_range
    if C < p_lo * 2 * f_D:
        raise ValueError(f"budget C={C} bit/s is below the minimum {p_lo * 2 * f_D} (P={p_lo} at Nyquist)")
    t_max = 1 / (2 * f_D)
    feasible, stationary = [], []
    for P in range(p_lo, p_hi + 1):
        ts = list(np.geomspace(T_min, t_max, n_grid))
        for t in stationary_periods(P, f_D, T_min):
            det = float(np.linalg.det(lagrangian_hessian(P, t, f_D)))
            if det > 0:
                stationary.append((MsePoint(P, t, f_D, mse_model(P, t, f_D)), det))
                ts.append(t)
        if np.isfinite(C):
            ts.append(P / C)
        for t in ts:
            if T_min <= t <= t_max and P / t <= C * (1 + 1e-12):
                feasible.append(MsePoint(P, float(t), f_D, mse_model(P, float(t), f_D)))
    if not feasible:
        raise ValueError("no feasible (P, T) under the budget")
    hull = _lower_hull(feasible)
    best = min(hull, key=lambda p: p.e_s)
    return WordlengthResult(best.P, best.T, best.e_s, hull, stationary)


def mse_monte_carlo(P: int, T: float, f_D: float, n_samples: int = 1_000_000, rng_seed: int = 0,
                    n_sinusoids: int = 32, block: int = 1000) -> float:
    """Empirical MSE of sample-and-hold reconstruction of a P-bit quantized SoS Gaussian process.

    Each block draws a fresh random-angle sum of sinusoids (unit variance,
    Bessel autocorrelation); the error is taken at a uniform instant inside
    each hold interval.
    """
    rng = np.random.default_rng(rng_seed)
    total, count = 0.0, 0
    while count < n_samples:
        m = min(block, n_samples - count)
        theta = rng.uniform(0, 2 * np.pi, n_sinusoids)
        phase = rng.uniform(0, 2 * np.pi, n_sinusoids)
        w = 2 * np.pi * f_D * np.cos(theta)
        n = np.arange(m)
        t_hold = n * T
        t_eval = t_hold + rng.uniform(0, T, m)
        amp = np.sqrt(2.0 / n_sinusoids)

        def x(t):
            return amp * np.cos(np.outer(t, w) + phase).sum(axis=1)

        err = x(t_eval) - quantize(x(t_hold), P)
        total += float(np.sum(err ** 2))
        count += m
    return total / count
