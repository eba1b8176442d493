"""Runtime checks of the CAMP error model.

``verify_m_recursion`` evaluates the exact identity linking the rotated
pre-threshold errors ``m_t = V^T h_t`` to the rotated post-threshold errors
``b_t``; a nonzero residual beyond rounding means the solver bookkeeping is
wrong. ``gaussianity_report`` measures how Gaussian the entries of ``h_t``
look at finite size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from camp.model import SensingEnsemble
from camp.solvers import SolverTrajectory


def mse(x_est, x_true) -> float:
    x_est = np.asarray(x_est, dtype=float)
    return float(np.mean((x_est - np.asarray(x_true, dtype=float)) ** 2))


def to_db(value):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(value)


@dataclass(frozen=True)
class ErrorDecomposition:
    """Error vectors of one unbatched message-passing run.

    ``h[t] = r_t - x`` for ``t < T``; ``q[t] = x_t - x`` for ``t <= T``;
    ``q_tilde[0] = q[0]`` and ``q_tilde[t] = q[t] - a_{t-1} h[t-1]``;
    ``b = V^T q_tilde`` and ``m = V^T h``.
    """

    h: np.ndarray
    q: np.ndarray
    q_tilde: np.ndarray
    b: np.ndarray
    m: np.ndarray
    a: np.ndarray


def decompose_errors(trajectory: SolverTrajectory, x_true, ensemble: SensingEnsemble) -> ErrorDecomposition:
    if trajectory.a.ndim != 1:
        raise ValueError("error decomposition needs an unbatched trajectory")
    x_true = np.asarray(x_true, dtype=float)
    h = trajectory.r - x_true
    q = trajectory.x - x_true
    q_tilde = q.copy()
    q_tilde[1:] -= trajectory.a[:, None] * h
    return ErrorDecomposition(h, q, q_tilde, ensemble.apply_vt(q_tilde), ensemble.apply_vt(h), trajectory.a.copy())


def m_recursion_rhs(dec: ErrorDecomposition, ensemble: SensingEnsemble, taps, noise) -> np.ndarray:
    """Right-hand side of the ``m_t`` identity for every iteration ``t < T``."""
    taps = np.asarray(taps, dtype=float)
    T = dec.h.shape[0]
    N, M = ensemble.N, ensemble.M
    lam = ensemble.eigenvalues
    sv = np.asarray(ensemble.singular_values, dtype=float)
    noise_term = np.zeros(N)
    noise_term[:M] = sv * ensemble.apply_ut(np.asarray(noise, dtype=float))
    a = dec.a
    b, m = dec.b, dec.m
    rhs = np.empty_like(m)
    # memory[tau] = m_tau - b_tau - xi_{tau-1} m_{tau-1}, with m_{-1} = 0
    memory = np.empty_like(m)
    for t in range(T):
        prev = a[t - 1] * m[t - 1] if t > 0 else 0.0
        memory[t] = m[t] - b[t] - prev
        acc = (1.0 - lam) * (b[t] + prev) + noise_term
        for tau in range(t):
            # xi_tau^(t-1) = a_tau ... a_{t-1}
            acc = acc + np.prod(a[tau:t]) * taps[t - tau - 1] * memory[tau]
        rhs[t] = acc
    return rhs


def verify_m_recursion(decomposition: ErrorDecomposition, ensemble: SensingEnsemble, taps, noise, tolerance: Optional[float] = None):
    """Largest relative residual ``|RHS_t - m_t| / |m_t|`` over the run.

    The denominator is floored at ``1e-6`` times the largest error norm of
    the run (``|b_0| = |x|`` included), so iterations whose ``m_t`` is pure
    rounding noise do not report spurious mismatches.
    With ``tolerance`` given, returns ``(residual, residual <= tolerance)``.
    """
    rhs = m_recursion_rhs(decomposition, ensemble, taps, noise)
    m = decomposition.m
    num = np.linalg.norm(rhs - m, axis=-1)
    scale = max(np.max(np.linalg.norm(m, axis=-1)), np.max(np.linalg.norm(decomposition.b, axis=-1)))
    den = np.maximum(np.linalg.norm(m, axis=-1), 1e-6 * scale)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(den > 0, num / den, np.where(num > 0, np.inf, 0.0))
    worst = float(np.max(rel)) if rel.size else 0.0
    if tolerance is None:
        return worst
    return worst, worst <= tolerance


@dataclass(frozen=True)
class GaussianityReport:
    skewness: float
    excess_kurtosis: float
    ks_distance: float
    variance: float
    degenerate: bool = False

    def as_text(self) -> str:
        if self.degenerate:
            return "degenerate (zero variance)"
        return (
            f"skewness={self.skewness:+.4f} excess_kurtosis={self.excess_kurtosis:+.4f} "
            f"ks={self.ks_distance:.4f} variance={self.variance:.6g}"
        )


def gaussianity_report(h, predicted_variance: Optional[float] = None) -> GaussianityReport:
    """Skewness, excess kurtosis and KS distance to ``N(0, v)``.

    ``v`` is ``predicted_variance`` when given, else the sample mean square
    (a zero-mean Gaussian fitted to the entries).
    """
    h = np.asarray(h, dtype=float).ravel()
    var = float(np.mean(h * h)) if predicted_variance is None else float(predicted_variance)
    if not np.all(np.isfinite(h)) or var <= 0.0 or np.ptp(h) == 0.0:
        return GaussianityReport(math.nan, math.nan, math.nan, var, degenerate=True)
    ks = stats.kstest(h, "norm", args=(0.0, math.sqrt(var))).statistic
    return GaussianityReport(
        skewness=float(stats.skew(h)),
        excess_kurtosis=float(stats.kurtosis(h, fisher=True)),
        ks_distance=float(ks),
        variance=var,
    )
