"""Krylov matrices of a reservoir and how fast their columns lose independence.

Index convention: column j (1-based) of ``K_m`` is ``A^{j-1} C`` and
``theta_j`` is the part of that column orthogonal to the previous j - 1
columns, so ``theta_1 = C``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .errors import EchoStatePropertyError, NotDiagonalizableError, PreconditionError
from .exact import EigenData, eigen_data
from .reservoir import EPS, LinearESN

TRUNCATION_EPS = 2.0**-52


@dataclass(frozen=True, eq=False)
class KrylovBundle:
    """``K`` with its thin SVD ``K = U diag(Sigma) W^T``.

    The factors keep all ``min(N, m)`` directions; ``rank`` counts the
    singular values above ``max(N, m) * eps * Sigma[0]``.
    """

    K: np.ndarray
    m: int
    U: np.ndarray
    Sigma: np.ndarray
    W: np.ndarray
    theta_norms: np.ndarray
    rank: int

    @property
    def threshold(self) -> float:
        return max(self.K.shape) * EPS * float(self.Sigma[0]) if self.Sigma.size else 0.0

    def retained(self, rtol: float | None = None) -> int:
        """Number of directions kept for a relative cut ``rtol`` (``None``: the rank threshold)."""
        if not self.Sigma.size or self.Sigma[0] == 0.0:
            return 0
        cut = self.threshold if rtol is None else rtol * float(self.Sigma[0])
        return int(np.sum(self.Sigma > cut))


def auto_truncation(sys: LinearESN) -> int:
    """Smallest m with ``||A^m C||_inf < 2^-52``, capped at 10 N."""
    if not sys.spectral_radius < 1.0:
        raise EchoStatePropertyError("no truncation point: spectral radius >= 1")
    v = np.array(sys.C)
    cap = 10 * sys.N
    m = 0
    while m < cap and np.max(np.abs(v)) >= TRUNCATION_EPS:
        v = sys.A @ v
        m += 1
    return m


def resolve_m(sys: LinearESN, m: int | str) -> int:
    if m == "auto" or m is None:
        return auto_truncation(sys)
    m = int(m)
    if m < 1:
        raise PreconditionError("m must be positive")
    return m


def build_krylov(sys: LinearESN, m: int | str = "auto", theta: bool = True) -> KrylovBundle:
    m = resolve_m(sys, m)
    K = _kernels.krylov_columns(sys.A, sys.C, m)
    U, s, Wt = np.linalg.svd(K, full_matrices=False)
    rank = int(np.sum(s > max(K.shape) * EPS * s[0])) if s[0] > 0 else 0
    th = _theta_from_columns(K, min(m, sys.N)) if theta else np.empty(0)
    for a in (K, U, s, Wt, th):
        a.setflags(write=False)
    return KrylovBundle(K, m, U, s, Wt.T, th, rank)


def _theta_from_columns(K: np.ndarray, j_max: int) -> np.ndarray:
    N = K.shape[0]
    out = np.empty(j_max)
    if j_max == 0:
        return out
    out[0] = np.linalg.norm(K[:, 0])
    U = np.zeros((N, 0))
    full = False
    for j in range(1, j_max):
        if not full:
            Uj, s, _ = np.linalg.svd(K[:, :j], full_matrices=False)
            if s[0] > 0:
                r = int(np.sum(s > max(N, j) * EPS * s[0]))
                U = Uj[:, :r]
                full = r == N
            else:
                U = np.zeros((N, 0))
        v = K[:, j]
        out[j] = np.linalg.norm(v - U @ (U.T @ v))
    return out


def theta_norms_svd(sys: LinearESN, j_max: int, normalize: bool = True) -> np.ndarray:
    """``||theta_j||`` for j = 1..j_max through projections onto the numerical column space.

    With ``normalize`` the mask is scaled to unit norm first, so ``theta_1 = 1``.
    """
    sys.require_esp()
    C = sys.C / np.linalg.norm(sys.C) if normalize else sys.C
    K = _kernels.krylov_columns(sys.A, C, int(j_max))
    return _theta_from_columns(K, int(j_max))


def theta_norms_arnoldi(sys: LinearESN, j_max: int, normalize: bool = True) -> np.ndarray:
    """The same norms from Arnoldi: ``theta_{j+1} = theta_j * h_{j+1,j}``.

    Breakdown (``h < eps * ||A||_2``) zeroes the rest of the sequence. At most
    N values can be nonzero.
    """
    sys.require_esp()
    j_max = int(j_max)
    out = np.zeros(j_max)
    if j_max == 0:
        return out
    c_norm = float(np.linalg.norm(sys.C))
    out[0] = 1.0 if normalize else c_norm
    steps = min(j_max - 1, sys.N - 1)
    if steps <= 0:
        return out
    tol = EPS * float(np.linalg.norm(sys.A, 2))
    _, h, done = _kernels.arnoldi(sys.A, sys.C / c_norm, steps, tol)
    for j in range(int(done)):
        if h[j] == 0.0:
            break
        out[j + 1] = out[j] * h[j]
    return out


def kappa_approx(N: int, rho: float, j: int) -> float:
    """``sqrt(rho * N! / (N^j (N - j)!))`` evaluated through log-gamma."""
    N, j = int(N), int(j)
    if j < 0 or j > N:
        raise PreconditionError(f"need 0 <= j <= N, got j={j}, N={N}")
    log_val = math.log(rho) + math.lgamma(N + 1) - j * math.log(N) - math.lgamma(N - j + 1)
    return math.exp(0.5 * log_val)


def qr_diag(sys: LinearESN, normalize: bool = False) -> np.ndarray:
    """``|r_jj|`` of a Householder QR of ``K_N``."""
    sys.require_esp()
    C = sys.C / np.linalg.norm(sys.C) if normalize else sys.C
    K = _kernels.krylov_columns(sys.A, C, sys.N)
    R = sla.qr(K, mode="r")[0]
    return np.abs(np.diag(R))


def vandermonde_factor(sys: LinearESN, eig: EigenData | None, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(V, D_c, W_m)`` with ``K_m = V D_c W_m``, ``D_c = diag(V^{-1} C)`` and ``W_m[i, j] = lambda_i^j``."""
    if eig is None:
        eig = eigen_data(sys)
    if not np.isfinite(eig.cond_V):
        raise NotDiagonalizableError("eigenvector matrix is singular")
    c = eig.c_coeffs if eig.c_coeffs is not None else eig.Vinv @ sys.C
    W = eig.lambdas[:, None] ** np.arange(int(m))[None, :]
    return eig.V, np.diag(c), W


def vandermonde_residual(sys: LinearESN, m: int, eig: EigenData | None = None) -> tuple[float, float]:
    """Reconstruction error in max-norm and the bound ``1e-8 * ||K||_max * cond(V)``."""
    if eig is None:
        eig = eigen_data(sys)
    V, D, W = vandermonde_factor(sys, eig, m)
    K = _kernels.krylov_columns(sys.A, sys.C, m)
    res = float(np.max(np.abs(K - V @ D @ W)))
    return res, 1e-8 * float(np.max(np.abs(K))) * eig.cond_V


SQUEEZING_HEADER = ("j", "theta_svd", "theta_arnoldi", "r_jj", "kappa", "rho_pow_j")


def squeezing_table(sys: LinearESN, j_max: int) -> dict[str, np.ndarray]:
    """Columns of the squeezing diagnostic for j = 1..j_max (unit-norm mask).

    ``r_jj`` and ``kappa`` exist only for j <= N and are NaN beyond.
    """
    j_max = int(j_max)
    N = sys.N
    rho = sys.spectral_radius
    j = np.arange(1, j_max + 1)
    rjj = np.full(j_max, np.nan)
    kap = np.full(j_max, np.nan)
    q = qr_diag(sys, normalize=True)
    n = min(N, j_max)
    rjj[:n] = q[:n]
    kap[:n] = [kappa_approx(N, rho, int(k)) for k in j[:n]]
    return {
        "j": j,
        "theta_svd": theta_norms_svd(sys, j_max),
        "theta_arnoldi": theta_norms_arnoldi(sys, j_max),
        "r_jj": rjj,
        "kappa": kap,
        "rho_pow_j": rho ** j.astype(float),
    }


def write_squeezing_csv(table: dict[str, np.ndarray], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SQUEEZING_HEADER)
        for i in range(len(table["j"])):
            w.writerow([int(table["j"][i])] + ["%.17g" % table[k][i] for k in SQUEEZING_HEADER[1:]])
    return path
