"""CAMP, AMP and an LMMSE-OAMP/VAMP baseline.

All three share one calling convention::

    traj = camp_run(ensemble, measurement, config, x_true=x)

Arrays in a trajectory carry the iteration index first. When the denoiser
holds a batch of thresholds, every per-iteration array gains a batch axis
right after it, and each batch row is an independent run on the same data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from camp.denoise import Denoiser
from camp.model import Measurement, SensingEnsemble
from camp.spectral import amp_taps

ALGORITHMS = ("camp", "amp", "oamp-vamp")


@dataclass(frozen=True)
class SolverConfig:
    T: int
    denoiser: Denoiser
    algorithm: str = "camp"
    taps: Optional[np.ndarray] = None
    variance_floor: float = 1e-12

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.T < 1:
            raise ValueError("need at least one iteration")
        if self.algorithm == "camp" and (self.taps is None or len(self.taps) < self.T):
            raise ValueError(f"CAMP needs at least T={self.T} taps")


@dataclass
class SolverTrajectory:
    """Per-iteration record of a run.

    ``x[t]`` is the iterate entering iteration ``t`` (``x[0] = 0``),
    ``z[t]`` the corrected residual, ``r[t] = x[t] + A^T z[t]`` for
    CAMP/AMP (the LMMSE output for OAMP/VAMP), ``a[t]`` the divergence
    mean of the denoiser at ``r[t]``, and ``estimates[t] = f_t(r[t])``.
    ``mse[t]`` compares ``estimates[t]`` with the truth.

    ``failed_at`` holds the first iteration with a non-finite state
    (``-1`` if none); ``stalled_at`` the first OAMP/VAMP iteration whose
    divergence mean reached 1.
    """

    algorithm: str
    x: np.ndarray
    z: np.ndarray
    r: np.ndarray
    a: np.ndarray
    estimates: np.ndarray
    mse: Optional[np.ndarray]
    failed_at: np.ndarray
    stalled_at: np.ndarray

    @property
    def T(self) -> int:
        return self.a.shape[0]

    @property
    def diverged(self):
        return self.failed_at >= 0

    @property
    def final_estimate(self) -> np.ndarray:
        return self.estimates[-1]

    @property
    def final_mse(self):
        return None if self.mse is None else self.mse[-1]

    def xi(self, start: int, stop: int):
        """Running product ``a[start] * ... * a[stop]`` (1 when empty)."""
        if stop < start:
            return np.ones(self.a.shape[1:]) if self.a.ndim > 1 else 1.0
        return np.prod(self.a[start : stop + 1], axis=0)

    def to_table(self) -> str:
        """Per-iteration ``t,mse,a`` rows for a single (unbatched) run."""
        if self.a.ndim != 1:
            raise ValueError("table export is defined for unbatched runs")
        lines = ["t,mse,a"]
        for t in range(self.T):
            m = "" if self.mse is None else repr(float(self.mse[t]))
            lines.append(f"{t},{m},{float(self.a[t])!r}")
        return "\n".join(lines) + "\n"


def _allocate(T, batch, N, M):
    return (
        np.zeros((T + 1,) + batch + (N,)),
        np.empty((T,) + batch + (M,)),
        np.empty((T,) + batch + (N,)),
        np.empty((T,) + batch),
    )


def _finish(algorithm, x, z, r, a, est, x_true, failed, stalled):
    mse = None
    if x_true is not None:
        with np.errstate(over="ignore", invalid="ignore"):
            mse = np.mean((est - x_true) ** 2, axis=-1)
        mse = np.where(np.isfinite(mse), mse, np.inf)
    return SolverTrajectory(algorithm, x, z, r, a, est, mse, failed, stalled)


def _mark_failures(failed, t, *arrays):
    bad = np.zeros(failed.shape, dtype=bool)
    for arr in arrays:
        bad |= ~np.all(np.isfinite(arr), axis=-1)
    failed[(failed < 0) & bad] = t


def _message_passing(ensemble, measurement, config, taps, x_true, algorithm):
    den = config.denoiser
    batch = den.batch_shape
    T, N, M = config.T, ensemble.N, ensemble.M
    y = np.asarray(measurement.y, dtype=float)
    x, z, r, a = _allocate(T, batch, N, M)
    failed = np.full(batch, -1)
    # xi[tau] holds xi_tau^(t-1) at the top of iteration t
    xi = np.empty((T,) + batch)
    inv_delta = 1.0 / ensemble.delta
    with np.errstate(all="ignore"):
        for t in range(T):
            resid = y - ensemble.forward(x[t])
            if t == 0:
                zt = resid
            elif algorithm == "amp":
                zt = resid + (a[t - 1] * inv_delta)[..., None] * z[t - 1]
            else:
                coef = xi[:t] * taps[t - 1 :: -1][:t].reshape((t,) + (1,) * len(batch))
                zt = resid + np.einsum("t...,t...m->...m", coef, z[:t])
            z[t] = zt
            r[t] = x[t] + ensemble.adjoint(zt)
            a[t] = den.divergence(r[t], t)
            x[t + 1] = den(r[t], t)
            xi[:t] *= a[t]
            xi[t] = a[t]
            _mark_failures(failed, t, z[t], x[t + 1])
            if np.all(failed >= 0):
                x[t + 2 :] = np.nan
                break
    return _finish(algorithm, x, z, r, a, x[1:], x_true, failed, np.full(batch, -1))


def camp_run(ensemble: SensingEnsemble, measurement: Measurement, config: SolverConfig, x_true=None) -> SolverTrajectory:
    """Convolutional AMP.

    ``z_t = y - A x_t + sum_{tau<t} xi_tau^(t-1) g_{t-tau-1} z_tau`` with
    ``xi_tau^(t') = a_tau ... a_t'``, ``r_t = x_t + A^T z_t`` and
    ``x_{t+1} = f_t(r_t)``. The running products are updated in place each
    iteration, so the correction costs O(t M) per step.
    """
    taps = np.asarray(config.taps, dtype=float)
    return _message_passing(ensemble, measurement, config, taps, x_true, "camp")


def amp_run(ensemble: SensingEnsemble, measurement: Measurement, config: SolverConfig, x_true=None) -> SolverTrajectory:
    """Plain AMP: ``z_t = y - A x_t + (a_{t-1}/delta) z_{t-1}``."""
    return _message_passing(ensemble, measurement, config, None, x_true, "amp")


def oamp_vamp_run(ensemble: SensingEnsemble, measurement: Measurement, config: SolverConfig, x_true=None) -> SolverTrajectory:
    """LMMSE-OAMP/VAMP with a divergence-free soft-threshold denoiser.

    Each iteration estimates ``v_t = max((|y - A x_t|^2 - M s2)/tr(A^T A), floor)``,
    applies ``W_t = v_t A^T (v_t A A^T + s2 I)^-1`` through the SVD, rescales it
    to ``N/tr(W_t A)`` so the linear stage is divergence-free, and then sets
    ``x_{t+1} = (f(r_t) - a_t r_t) / (1 - a_t)``. If ``a_t`` reaches 1 the
    correction is undefined; the run is marked stalled at that iteration and
    continues with ``x_{t+1} = f(r_t)``.
    """
    den = config.denoiser
    batch = den.batch_shape
    T, N, M = config.T, ensemble.N, ensemble.M
    y = np.asarray(measurement.y, dtype=float)
    s2 = float(measurement.noise_variance)
    lam = np.asarray(ensemble.singular_values, dtype=float) ** 2
    trace = ensemble.gram_trace
    x, z, r, a = _allocate(T, batch, N, M)
    est = np.empty((T,) + batch + (N,))
    failed = np.full(batch, -1)
    stalled = np.full(batch, -1)
    with np.errstate(all="ignore"):
        for t in range(T):
            e = y - ensemble.forward(x[t])
            z[t] = e
            v = np.maximum((np.sum(e * e, axis=-1) - M * s2) / trace, config.variance_floor)
            v = np.asarray(v)[..., None]
            # weighted_adjoint supplies the sigma factor of A^T
            w = v / (v * lam + s2)
            tr_wa = np.sum(w * lam, axis=-1)
            r[t] = x[t] + (N / tr_wa)[..., None] * ensemble.weighted_adjoint(w, e)
            a[t] = den.divergence(r[t], t)
            est[t] = den(r[t], t)
            at = np.asarray(a[t])[..., None]
            degenerate = at >= 1.0
            corrected = (est[t] - at * r[t]) / np.where(degenerate, 1.0, 1.0 - at)
            x[t + 1] = np.where(degenerate, est[t], corrected)
            deg = np.asarray(degenerate[..., 0])
            stalled[(stalled < 0) & deg] = t
            _mark_failures(failed, t, r[t], x[t + 1])
            if np.all(failed >= 0):
                break
    return _finish("oamp-vamp", x, z, r, a, est, x_true, failed, stalled)


def run(ensemble, measurement, config: SolverConfig, x_true=None) -> SolverTrajectory:
    """Dispatch on ``config.algorithm``."""
    if config.algorithm == "camp":
        return camp_run(ensemble, measurement, config, x_true)
    if config.algorithm == "amp":
        return amp_run(ensemble, measurement, config, x_true)
    return oamp_vamp_run(ensemble, measurement, config, x_true)


def amp_config(T: int, denoiser: Denoiser, delta: float) -> SolverConfig:
    """CAMP configuration whose taps reduce it to AMP."""
    return SolverConfig(T=T, denoiser=denoiser, algorithm="camp", taps=amp_taps(delta, T))
