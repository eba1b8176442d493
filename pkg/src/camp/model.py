"""Signals, noise, and right-orthogonally invariant sensing ensembles.

The measurement model is ``y = A x + w`` with ``w ~ N(0, sigma2 I_M)``.
Every ensemble keeps its SVD factors ``A = U diag(sigma) V^T`` available,
either implicitly (partial Hadamard) or lazily (dense matrices), so that
the LMMSE baseline and the error diagnostics can work in the rotated basis.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Optional

import numpy as np

ENSEMBLE_KINDS = ("partial-hadamard-geometric", "iid-gaussian", "custom-svd")


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


_BLOCK = 64


@lru_cache(maxsize=None)
def _sylvester(n: int) -> np.ndarray:
    h = np.ones((1, 1))
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    h.setflags(write=False)
    return h


def fwht(x: np.ndarray) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along the last axis.

    Uses the Sylvester (natural) ordering, so ``fwht(I)`` equals the
    ``N x N`` Hadamard matrix with entries +-1. The last axis length must
    be a power of two.
    """
    x = np.array(x, dtype=float)
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"transform length must be a power of two, got {n}")
    lead = x.shape[:-1]
    # the first log2(base) stages as one block product; narrow butterflies are slow in numpy
    base = min(n, _BLOCK)
    x = (x.reshape(lead + (n // base, base)) @ _sylvester(base)).reshape(lead + (n,))
    tmp = np.empty(lead + (n // 2,))
    h = base
    while h < n:
        view = x.reshape(lead + (n // (2 * h), 2, h))
        a = view[..., 0, :]
        b = view[..., 1, :]
        t = tmp.reshape(a.shape)
        np.copyto(t, a)
        a += b
        np.subtract(t, b, out=b)
        h *= 2
    return x


def hadamard(n: int) -> np.ndarray:
    """Orthonormal Sylvester-Hadamard matrix (entries +-1/sqrt(n))."""
    return fwht(np.eye(n)) / np.sqrt(n)


def geometric_singular_values(M: int, N: int, kappa: float) -> np.ndarray:
    """Singular values with a constant ratio and condition number ``kappa``.

    ``sigma_m / sigma_{m-1} = kappa**(-1/(M-1))`` with ``sigma_0`` chosen so
    that ``sum(sigma**2) == N``. At ``kappa == 1`` the equal-value limit
    ``sigma_m**2 = N/M`` is returned.
    """
    if M < 2:
        raise ValueError(f"need M >= 2, got {M}")
    if not kappa >= 1.0:
        raise ValueError(f"condition number must be >= 1, got {kappa}")
    if kappa == 1.0:
        return np.full(M, np.sqrt(N / M))
    # squared values form a geometric sequence with ratio q
    log_q = -2.0 * np.log(kappa) / (M - 1)
    q = np.exp(log_q)
    s0_sq = N * (-np.expm1(log_q)) / (-np.expm1(M * log_q))
    sq = s0_sq * q ** np.arange(M)
    return np.sqrt(sq)


@dataclass(frozen=True)
class SignalPrior:
    """Bernoulli-Gaussian prior: zero w.p. ``1 - rho``, else N(0, 1/rho)."""

    rho: float
    kind: str = "bernoulli-gaussian"

    def __post_init__(self):
        if self.kind != "bernoulli-gaussian":
            raise ValueError(f"unsupported prior kind {self.kind!r}")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"density must lie in (0, 1], got {self.rho}")


def sample_signal(prior: SignalPrior, N: int, rng: np.random.Generator) -> np.ndarray:
    support = rng.random(N) < prior.rho
    values = rng.standard_normal(N) / np.sqrt(prior.rho)
    return np.where(support, values, 0.0)


class SensingEnsemble:
    """Base class for sensing matrices with explicit SVD access.

    Subclasses provide ``forward`` (``A u``), ``adjoint`` (``A^T v``) and the
    rotations ``apply_vt`` / ``apply_v`` by the full right orthogonal factor.
    All operations act on the last axis, so leading batch axes are allowed.
    """

    kind: str = "custom-svd"
    M: int
    N: int
    singular_values: np.ndarray
    row_selection: Optional[np.ndarray] = None

    @property
    def delta(self) -> float:
        return self.M / self.N

    @property
    def eigenvalues(self) -> np.ndarray:
        """Diagonal of ``Lambda = Sigma^T Sigma`` (length N, trailing zeros)."""
        lam = np.zeros(self.N)
        lam[: self.M] = self.singular_values**2
        return lam

    @property
    def gram_trace(self) -> float:
        return float(np.sum(self.singular_values**2))

    def forward(self, u):
        raise NotImplementedError

    def adjoint(self, v):
        raise NotImplementedError

    def apply_vt(self, u):
        raise NotImplementedError

    def apply_v(self, b):
        raise NotImplementedError

    def apply_ut(self, v):
        raise NotImplementedError

    def weighted_adjoint(self, weights, v):
        """Return ``V Sigma^T diag(weights) U^T v``."""
        raise NotImplementedError

    def dense(self) -> np.ndarray:
        return self.forward(np.eye(self.N)).T

    def right_factor(self) -> np.ndarray:
        """Full ``N x N`` matrix ``V`` with ``A = U Sigma V^T``."""
        return self.apply_v(np.eye(self.N)).T

    def left_factor(self) -> np.ndarray:
        return self.apply_ut(np.eye(self.M))


@dataclass(frozen=True, eq=False)
class PartialHadamardEnsemble(SensingEnsemble):
    """``A = diag(sigma) H_S`` with ``H_S`` rows of the orthonormal Hadamard matrix.

    The SVD is ``U = I_M``, ``Sigma = [diag(sigma), 0]`` and ``V^T = P H``
    where ``P`` moves the selected rows first (in selection order) and the
    remaining rows after them in ascending order.
    """

    N: int
    singular_values: np.ndarray
    row_selection: np.ndarray
    kind: str = "partial-hadamard-geometric"
    _order: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        sv = np.asarray(self.singular_values, dtype=float)
        rows = np.asarray(self.row_selection, dtype=np.intp)
        if not is_power_of_two(self.N):
            raise ValueError(f"N must be a power of two, got {self.N}")
        if sv.shape != rows.shape or sv.ndim != 1:
            raise ValueError("need one singular value per selected row")
        if len(rows) > self.N or len(np.unique(rows)) != len(rows):
            raise ValueError("row selection must hold distinct indices")
        if rows.min(initial=0) < 0 or rows.max(initial=0) >= self.N:
            raise ValueError("row index out of range")
        rest = np.setdiff1d(np.arange(self.N), rows)
        order = np.concatenate([rows, rest])
        for name, arr in (("singular_values", sv), ("row_selection", rows), ("_order", order)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def M(self) -> int:
        return len(self.singular_values)

    def _h(self, u):
        return fwht(u) / np.sqrt(self.N)

    def forward(self, u):
        return self.singular_values * self._h(u)[..., self.row_selection]

    def adjoint(self, v):
        v = np.asarray(v, dtype=float)
        full = np.zeros(v.shape[:-1] + (self.N,))
        full[..., self.row_selection] = self.singular_values * v
        return self._h(full)

    def apply_vt(self, u):
        return self._h(u)[..., self._order]

    def apply_v(self, b):
        b = np.asarray(b, dtype=float)
        full = np.empty(b.shape[:-1] + (self.N,))
        full[..., self._order] = b
        return self._h(full)

    def apply_ut(self, v):
        return np.array(v, dtype=float)

    def weighted_adjoint(self, weights, v):
        return self.adjoint(weights * v)


@dataclass(frozen=True, eq=False)
class DenseEnsemble(SensingEnsemble):
    """Dense sensing matrix; the SVD is computed on first use."""

    matrix: np.ndarray
    kind: str = "iid-gaussian"

    def __post_init__(self):
        a = np.array(self.matrix, dtype=float)
        if a.ndim != 2 or a.shape[0] > a.shape[1]:
            raise ValueError("need an M x N matrix with M <= N")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)

    @property
    def M(self) -> int:
        return self.matrix.shape[0]

    @property
    def N(self) -> int:
        return self.matrix.shape[1]

    @cached_property
    def _svd(self):
        u, s, vt = np.linalg.svd(self.matrix, full_matrices=True)
        return u, s, vt

    @property
    def singular_values(self) -> np.ndarray:
        return self._svd[1]

    def forward(self, u):
        return np.asarray(u, dtype=float) @ self.matrix.T

    def adjoint(self, v):
        return np.asarray(v, dtype=float) @ self.matrix

    def apply_vt(self, u):
        return np.asarray(u, dtype=float) @ self._svd[2].T

    def apply_v(self, b):
        return np.asarray(b, dtype=float) @ self._svd[2]

    def apply_ut(self, v):
        return np.asarray(v, dtype=float) @ self._svd[0]

    def weighted_adjoint(self, weights, v):
        u, s, vt = self._svd
        coef = (np.asarray(v, dtype=float) @ u) * weights * s
        return coef @ vt[: self.M]

    def dense(self) -> np.ndarray:
        return np.array(self.matrix)


def custom_svd_ensemble(U, singular_values, V) -> DenseEnsemble:
    """Build ``A = U diag(sigma) V[:, :M]^T`` from explicit factors."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    sv = np.asarray(singular_values, dtype=float)
    M = len(sv)
    a = (U * sv) @ V[:, :M].T
    ens = DenseEnsemble(a, kind="custom-svd")
    # keep the supplied factors instead of a recomputed (sign-ambiguous) SVD
    ens.__dict__["_svd"] = (U, sv, V.T)
    return ens


def sample_partial_hadamard(M: int, N: int, singular_values, rng: np.random.Generator) -> PartialHadamardEnsemble:
    if not is_power_of_two(N):
        raise ValueError(f"N must be a power of two, got {N}")
    if M > N:
        raise ValueError(f"M={M} exceeds N={N}")
    sv = np.asarray(singular_values, dtype=float)
    if len(sv) != M:
        raise ValueError(f"expected {M} singular values, got {len(sv)}")
    rows = rng.choice(N, size=M, replace=False)
    return PartialHadamardEnsemble(N=N, singular_values=sv, row_selection=rows)


def sample_iid_gaussian(M: int, N: int, rng: np.random.Generator, gamma: float = 0.0) -> DenseEnsemble:
    """Entries with variance ``(1 - gamma)/M`` and mean ``sqrt(gamma/M)``."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    a = rng.standard_normal((M, N)) * np.sqrt((1.0 - gamma) / M) + np.sqrt(gamma / M)
    return DenseEnsemble(a)


@dataclass(frozen=True)
class Measurement:
    y: np.ndarray
    noise_variance: float
    noise: Optional[np.ndarray] = None


def measure(ensemble: SensingEnsemble, x, noise_variance: float, rng: np.random.Generator) -> Measurement:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != ensemble.N:
        raise ValueError(f"signal length {x.shape[-1]} != N={ensemble.N}")
    if noise_variance < 0:
        raise ValueError("noise variance must be nonnegative")
    w = np.sqrt(noise_variance) * rng.standard_normal(ensemble.M)
    return Measurement(y=ensemble.forward(x) + w, noise_variance=noise_variance, noise=w)


def snr_db_to_noise_variance(snr_db: float) -> float:
    """Noise variance for ``1/sigma2`` given in dB (unit signal power)."""
    return 10.0 ** (-snr_db / 10.0)


def seed_stream(master_seed: int, *key) -> np.random.Generator:
    """Independent generator for a named stream under ``master_seed``.

    The key is hashed, so streams are reproducible across processes and do
    not depend on the order in which they are requested.
    """
    digest = hashlib.sha256(repr(tuple(key)).encode()).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    ss = np.random.SeedSequence(entropy=int(master_seed) & (2**64 - 1), spawn_key=tuple(words))
    return np.random.default_rng(ss)
