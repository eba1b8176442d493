"""Spectral moments, eta-transforms, and the CAMP tap coefficients.

Taps can be obtained two ways:

* ``tap_recursion`` runs the triangular dynamical system on a moment
  sequence. The map from moments to taps is badly conditioned (roughly one
  decimal digit is lost per step), so it runs in multiprecision arithmetic
  on moments regenerated at the working precision.
* ``taps_geometric_closed_form`` evaluates the closed-form solution for the
  geometric singular-value spectrum in double precision.

``verify_theorem2`` checks a truncated tap sequence against the implicit
generating-function relation ``eta(x_s) = 1 - y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import mpmath
import numpy as np

PROFILE_KINDS = ("empirical", "asymptotic-geometric", "marchenko-pastur", "moments")


class TapRecursionError(RuntimeError):
    """Raised when the tap recursion cannot deliver finite, converged taps."""


@dataclass(frozen=True, eq=False)
class SpectralProfile:
    """Moment sequence ``mu_0..mu_K`` of the eigenvalues of ``A^T A``.

    ``moment_fn(k_max, dps)`` returns the moments as ``mpmath.mpf`` values
    computed at ``dps`` significant digits. ``k_max`` is ``None`` for
    generators that can supply any depth.
    """

    kind: str
    moment_fn: Callable[[int, int], List]
    eta_fn: Callable[[float], float]
    params: dict = field(default_factory=dict)
    k_max: Optional[int] = None

    def exact_moments(self, k_max: int, dps: int = 30) -> list:
        if self.k_max is not None and k_max > self.k_max:
            raise ValueError(f"profile holds moments only up to k={self.k_max}, need {k_max}")
        with mpmath.workdps(dps):
            return self.moment_fn(k_max, dps)

    def moments(self, k_max: Optional[int] = None) -> np.ndarray:
        if k_max is None:
            if self.k_max is None:
                raise ValueError("profile has unbounded depth; pass k_max")
            k_max = self.k_max
        return np.array([float(m) for m in self.exact_moments(k_max)])

    def eta(self, z):
        return self.eta_fn(z)


def empirical_moments(singular_values, N: int, k_max: Optional[int] = None) -> SpectralProfile:
    """Moments ``(1/N) sum_m sigma_m**(2k)`` of the full N-point spectrum.

    ``mu_0 = 1`` counts the ``N - M`` zero eigenvalues too. The moments are
    exact sums over the given floating-point singular values, evaluated in
    multiprecision on demand.
    """
    if k_max is not None and k_max < 1:
        raise ValueError("k_max must be >= 1")
    sv = np.asarray(singular_values, dtype=float)
    lam = sv**2
    M = len(sv)

    def moment_fn(k, dps):
        eig = [mpmath.mpf(float(s)) ** 2 for s in sv]
        out = [mpmath.mpf(1)]
        powers = [mpmath.mpf(1)] * M
        for _ in range(k):
            powers = [p * e for p, e in zip(powers, eig)]
            out.append(mpmath.fsum(powers) / N)
        return out

    def eta_fn(z):
        z = np.asarray(z, dtype=float)
        res = np.sum(1.0 / (1.0 + np.multiply.outer(z, lam)), axis=-1)
        return ((N - M) + res) / N

    return SpectralProfile("empirical", moment_fn, eta_fn, params={"N": N, "M": M}, k_max=k_max)


def _geometric_constant(delta, kappa):
    return 2.0 / delta * math.log(kappa)


def asymptotic_moments_geometric(delta: float, kappa: float, k_max: Optional[int] = None) -> SpectralProfile:
    """Large-system moments of the geometric singular-value spectrum.

    With ``C = (2/delta) ln kappa``:
    ``mu_k = (C/(1-kappa**-2))**k (1-kappa**(-2k)) / (k C)`` for ``k >= 1``.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if not kappa > 1.0:
        raise ValueError("kappa must exceed 1; use equal_eigenvalue_moments for kappa == 1")

    def moment_fn(k, dps):
        d = mpmath.mpf(delta)
        kap = mpmath.mpf(kappa)
        c = 2 / d * mpmath.log(kap)
        base = c / (1 - kap**-2)
        return [mpmath.mpf(1)] + [base**j * (1 - kap ** (-2 * j)) / (j * c) for j in range(1, k + 1)]

    c = _geometric_constant(delta, kappa)
    a = delta * (kappa**2 - 1.0)
    two_log = 2.0 * math.log(kappa)

    def eta_fn(z):
        z = np.asarray(z, dtype=float)
        return 1.0 - np.log((a + kappa**2 * two_log * z) / (a + two_log * z)) / c

    return SpectralProfile(
        "asymptotic-geometric", moment_fn, eta_fn, params={"delta": delta, "kappa": kappa}, k_max=k_max
    )


def equal_eigenvalue_moments(delta: float, k_max: Optional[int] = None) -> SpectralProfile:
    """Limit ``kappa -> 1`` of the geometric spectrum: eigenvalue ``1/delta`` with mass ``delta``.

    ``mu_k = delta**(1-k)`` exactly, so ``mu_1 == 1`` holds without rounding.
    Finite-size empirical moments miss that normalization by one ulp, which
    the tap recursion amplifies beyond use for long horizons.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")

    def moment_fn(k, dps):
        d = mpmath.mpf(delta)
        return [mpmath.mpf(1)] + [d ** (1 - j) for j in range(1, k + 1)]

    def eta_fn(z):
        z = np.asarray(z, dtype=float)
        return 1.0 - delta + delta / (1.0 + z / delta)

    return SpectralProfile(
        "asymptotic-geometric", moment_fn, eta_fn, params={"delta": delta, "kappa": 1.0}, k_max=k_max
    )


def geometric_profile(delta: float, kappa: float, k_max: Optional[int] = None) -> SpectralProfile:
    """Asymptotic geometric profile, including the ``kappa == 1`` limit."""
    if kappa == 1.0:
        return equal_eigenvalue_moments(delta, k_max)
    return asymptotic_moments_geometric(delta, kappa, k_max)


def marchenko_pastur_moments(delta: float, k_max: Optional[int] = None) -> SpectralProfile:
    """Limiting spectrum of ``A^T A`` for i.i.d. entries of variance ``1/M``.

    Moments come from the Narayana sum
    ``mu_k = sum_{r<k} delta**(-r) C(k,r) C(k-1,r) / (r+1)``, which is exact.
    The eta-transform is the root of
    ``z eta**2 + (delta + z (delta - 1)) eta - delta = 0`` with ``eta(0) = 1``.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")

    def moment_fn(k, dps):
        inv = 1 / mpmath.mpf(delta)
        out = [mpmath.mpf(1)]
        for j in range(1, k + 1):
            terms = [inv**r * (math.comb(j, r) * math.comb(j - 1, r)) / (r + 1) for r in range(j)]
            out.append(mpmath.fsum(terms))
        return out

    def eta_fn(z):
        z = np.asarray(z, dtype=float)
        b = delta + z * (delta - 1.0)
        disc = np.sqrt(b * b + 4.0 * z * delta)
        # rationalized root, finite at z = 0
        return 2.0 * delta / (b + disc)

    return SpectralProfile("marchenko-pastur", moment_fn, eta_fn, params={"delta": delta}, k_max=k_max)


def profile_from_moments(moments: Sequence[float]) -> SpectralProfile:
    """Profile backed by a fixed list of moments; eta is the truncated series."""
    mom = [float(m) for m in moments]
    if not mom or mom[0] != 1.0:
        raise ValueError("moment list must start with mu_0 = 1")

    def moment_fn(k, dps):
        return [mpmath.mpf(m) for m in mom[: k + 1]]

    def eta_fn(z):
        z = np.asarray(z, dtype=float)
        return np.polyval(mom[::-1], -z)

    return SpectralProfile("moments", moment_fn, eta_fn, k_max=len(mom) - 1)


@dataclass(frozen=True, eq=False)
class TapTable:
    """Triangular table ``g[t, k]`` for ``0 <= t <= T`` and ``0 <= k <= T - t + 1``.

    Entries outside the triangle are NaN. Column ``k = 0`` is kept for the
    consistency check ``g_t^(0) ~ 0``; the taps driving CAMP are ``g[:, 1]``.
    """

    g: np.ndarray
    dps: int

    @property
    def T(self) -> int:
        return self.g.shape[0] - 1

    @property
    def taps(self) -> np.ndarray:
        return self.g[:, 1].copy()

    def to_text(self) -> str:
        lines = ["t,k,value"]
        for t in range(self.T + 1):
            for k in range(self.T - t + 2):
                lines.append(f"{t},{k},{float(self.g[t, k])!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TapTable":
        rows = [ln.split(",") for ln in text.strip().splitlines()[1:]]
        T = max(int(r[0]) for r in rows)
        g = np.full((T + 1, T + 2), np.nan)
        for t, k, v in rows:
            g[int(t), int(k)] = float(v)
        return cls(g, dps=0)


def _run_recursion(mu: list, T: int) -> list:
    # g[t][k], k = 0..T-t+1; mu has length >= T+3
    g = [[mu[k + 1] - mu[k] for k in range(T + 2)]]
    for t in range(1, T + 1):
        prev = g[t - 1]
        row = []
        for k in range(T - t + 2):
            s = prev[k] - prev[k + 1] + g[t - 1][1] * mu[k + 1]
            for tau in range(1, t):
                s += g[t - tau - 1][1] * (g[tau][k] - g[tau - 1][k])
            row.append(s)
        g.append(row)
    return g


def tap_recursion(profile: SpectralProfile, T: int, dps: Optional[int] = None, rtol: float = 1e-12) -> TapTable:
    """Solve the tap dynamical system up to ``g_T^(1)``.

    Needs moments up to ``mu_{T+2}``. The system is first solved at ``dps``
    digits (default ``30 + T``) and again with 20 more; the result is
    accepted when the two runs agree to ``rtol`` (relative to ``max(|g|,1)``),
    otherwise the precision is doubled, up to four times.
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    if profile.k_max is not None and profile.k_max < T + 2:
        raise TapRecursionError(f"T={T} needs moments up to k={T + 2}, profile has k={profile.k_max}")
    work = dps or 30 + T
    for _ in range(4):
        runs = []
        for d in (work, work + 20):
            with mpmath.workdps(d):
                mu = profile.exact_moments(T + 2, d)
                runs.append(_run_recursion(mu, T))
        lo, hi = runs
        worst = 0.0
        for t in range(T + 1):
            for a, b in zip(lo[t], hi[t]):
                err = float(abs(a - b) / max(abs(b), 1))
                worst = max(worst, err)
        if worst <= rtol:
            break
        work *= 2
    else:
        raise TapRecursionError(f"tap recursion did not stabilize (last disagreement {worst:.2e} at {work} digits)")

    g = np.full((T + 1, T + 2), np.nan)
    for t, row in enumerate(hi):
        for k, v in enumerate(row):
            try:
                g[t, k] = float(v)
            except OverflowError:
                g[t, k] = math.inf
    if not np.all(np.isfinite(g[~np.isnan(g)])):
        bad = np.argwhere(np.isinf(g))[0]
        raise TapRecursionError(f"non-finite tap table entry at t={bad[0]}, k={bad[1]}")
    return TapTable(g, dps=work + 20)


def taps_geometric_closed_form(delta: float, kappa: float, T: int) -> np.ndarray:
    """Closed-form taps ``g_0^(1)..g_T^(1)`` for the geometric spectrum.

    ``g_t^(1) = g_t + C/(kappa**2 - 1)`` where ``g_0 = -h_1``,
    ``g_t = sum_{tau<t} h_{t-tau} g_tau - h_{t+1}`` and
    ``h_t = C**(t-1)/t! - C**t/(t+1)!`` with ``C = (2/delta) ln kappa``.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if not kappa > 1.0:
        raise ValueError("kappa must exceed 1")
    c = _geometric_constant(delta, kappa)
    # p[t] = C**t / t!, built multiplicatively
    p = np.empty(T + 3)
    p[0] = 1.0
    for t in range(1, T + 3):
        p[t] = p[t - 1] * c / t
    h = np.zeros(T + 2)
    for t in range(1, T + 2):
        h[t] = p[t - 1] / t - p[t] / (t + 1)
    g = np.empty(T + 1)
    g[0] = -h[1]
    for t in range(1, T + 1):
        g[t] = np.dot(h[t:0:-1], g[:t]) - h[t + 1]
    return g + c / (kappa**2 - 1.0)


def amp_taps(delta: float, T: int) -> np.ndarray:
    """Taps ``(1/delta, 0, 0, ...)`` under which CAMP is plain AMP."""
    taps = np.zeros(T + 1)
    taps[0] = 1.0 / delta
    return taps


@dataclass(frozen=True)
class Theorem2Report:
    y: np.ndarray
    generating_function: np.ndarray
    denominator: np.ndarray
    x_s: np.ndarray
    eta: np.ndarray
    residual: np.ndarray
    tail_bound: np.ndarray
    valid: np.ndarray

    @property
    def max_residual(self) -> float:
        r = self.residual[self.valid]
        return float(np.max(r)) if r.size else math.nan


def verify_theorem2(taps, profile: SpectralProfile, y_grid) -> Theorem2Report:
    """Residual ``|eta(x_s) - (1 - y)|`` of the truncated tap generating function.

    ``G_1(y) = sum_t y**t g_t`` and ``x_s = y / ((1-y)(1 - y G_1(y)))``.
    Points where ``1 - y G_1(y) <= 0`` are flagged invalid rather than
    evaluated. The tail bound is a geometric extrapolation from the last ten
    terms of the series (``inf`` when they do not decay).
    """
    taps = np.asarray(taps, dtype=float)
    y = np.atleast_1d(np.asarray(y_grid, dtype=float))
    if np.any(y < 0) or np.any(y >= 1):
        raise ValueError("y grid must lie in [0, 1)")
    T = len(taps) - 1
    G = np.array([np.polyval(taps[::-1], yi) for yi in y])
    denom = 1.0 - y * G
    valid = denom > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = np.where(valid, y / ((1.0 - y) * denom), np.nan)
    eta = np.full_like(y, np.nan)
    eta[valid] = profile.eta(xs[valid])
    resid = np.abs(eta - (1.0 - y))

    tail = np.empty_like(y)
    window = min(10, T)
    for i, yi in enumerate(y):
        if yi == 0.0:
            tail[i] = 0.0
            continue
        terms = np.abs(taps[T - window :]) * yi ** np.arange(T - window, T + 1)
        if terms[-1] == 0.0:
            tail[i] = 0.0
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = terms[1:] / terms[:-1]
        ratio = np.nanmax(ratios) if ratios.size else math.inf
        tail[i] = terms[-1] * ratio / (1.0 - ratio) if ratio < 1.0 else math.inf
    return Theorem2Report(y, G, denom, xs, eta, resid, tail, valid)
