"""Closed-form memory capacity.

Routes implemented here:

* ``mc_naive``: ``MC_tau = (A^tau C)^T G^{-1} A^tau C`` with G the normalized
  state covariance.
* ``mc_neutral``: the mask-free eigenvalue formula
  ``MC_tau = v^* L^{-1} v`` with ``v_k = lambda_k^tau`` and
  ``L_kl = 1 / (1 - lambda_k conj(lambda_l))``.
* ``mc_stationary``: the same idea for inputs with a summable autocovariance.
* closed forms for cyclic and delay reservoirs, and the Fischer memory curve.

Lags start at 0.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .errors import (
    ImaginaryResidualError,
    NotDiagonalizableError,
    PreconditionError,
    SingularMatrixError,
)
from .reservoir import GramSpec, LinearESN, condition_number, gram_exact

METHODS = ("naive", "eigen_neutral", "osm", "osm_plus", "montecarlo", "oracle", "stationary")
BOUNDED_METHODS = ("naive", "eigen_neutral", "osm", "osm_plus", "oracle")
DISTINCT_TOL = 1e-10
IMAG_TOL = 1e-8


def _fmt(x: float) -> str:
    return "%.17g" % x


@dataclass(frozen=True, eq=False)
class MemoryCurve:
    values: np.ndarray
    total: float
    method: str
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64, copy=True)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    @classmethod
    def build(cls, values: np.ndarray, method: str, **meta: Any) -> "MemoryCurve":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, float(np.sum(values)), method, dict(meta))

    @property
    def tau_max(self) -> int:
        return int(self.values.shape[0])

    def out_of_range(self, tol: float = 1e-6) -> list[int]:
        """Lags whose value falls outside ``[0, 1]`` by more than ``tol``."""
        v = self.values
        return [int(t) for t in np.flatnonzero((v < -tol) | (v > 1.0 + tol))]

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        lines = ["tau,mc"] + [f"{t},{_fmt(v)}" for t, v in enumerate(self.values)]
        path.write_text("\n".join(lines) + "\n")
        meta = {"method": self.method, "total": self.total, **self.meta}
        path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default) + "\n")
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "MemoryCurve":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta = json.loads(path.with_suffix(".meta.json").read_text())
        method = meta.pop("method")
        total = meta.pop("total")
        return cls(data[:, 1], total, method, meta)


def _json_default(o: Any) -> Any:
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


# ---------------------------------------------------------------------------
# eigen decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EigenData:
    lambdas: np.ndarray
    V: np.ndarray
    Vinv: np.ndarray
    c_coeffs: np.ndarray | None

    @property
    def cond_V(self) -> float:
        return float(np.linalg.cond(self.V))


def _ordering(lam: np.ndarray) -> np.ndarray:
    # descending modulus, then ascending argument; rounding makes conjugate pairs tie
    mod = np.round(np.abs(lam), 12)
    ang = np.round(np.angle(lam), 12)
    return np.lexsort((ang, -mod))


def min_eigen_gap(lam: np.ndarray) -> float:
    if lam.size < 2:
        return float("inf")
    d = np.abs(lam[:, None] - lam[None, :])
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())


def eigen_data(A: np.ndarray | LinearESN, C: np.ndarray | None = None, require_distinct: bool = True) -> EigenData:
    """Eigenvalues, eigenvectors and (optionally) the mask in the eigenbasis ``c = V^{-1} C``."""
    if isinstance(A, LinearESN):
        C = A.C if C is None else C
        A = A.A
    A = np.asarray(A, dtype=float)
    lam, V = np.linalg.eig(A)
    lam = lam.astype(complex)
    V = V.astype(complex)
    order = _ordering(lam)
    lam, V = lam[order], V[:, order]
    gap = min_eigen_gap(lam)
    if require_distinct and gap <= DISTINCT_TOL:
        raise NotDiagonalizableError(
            f"eigenvalues are not distinct (minimum pairwise distance {gap:.3e})"
        )
    try:
        Vinv = np.linalg.inv(V)
    except np.linalg.LinAlgError as exc:
        raise NotDiagonalizableError("eigenvector matrix is singular") from exc
    c = None if C is None else Vinv @ np.asarray(C, dtype=float)
    for arr in (lam, V, Vinv) + (() if c is None else (c,)):
        arr.setflags(write=False)
    return EigenData(lam, V, Vinv, c)


def _check_imag(M: np.ndarray, scale: float, what: str) -> np.ndarray:
    imag = float(np.max(np.abs(M.imag))) if M.size else 0.0
    if imag > IMAG_TOL * max(scale, 1.0):
        raise ImaginaryResidualError(f"{what}: imaginary residual {imag:.3e}")
    return np.ascontiguousarray(M.real)


def _check_contractive(lam: np.ndarray) -> None:
    if lam.size and np.max(np.abs(lam)) >= 1.0:
        raise PreconditionError("eigenvalue products must have modulus below one")


def cauchy_matrix(lam: np.ndarray) -> np.ndarray:
    """``L_kl = 1 / (1 - lambda_k conj(lambda_l))``."""
    return 1.0 / (1.0 - np.outer(lam, lam.conj()))


# ---------------------------------------------------------------------------
# linear solves
# ---------------------------------------------------------------------------


def _solve(M: np.ndarray, B: np.ndarray, assume_a: str) -> tuple[np.ndarray, dict[str, Any]]:
    """Symmetric/Hermitian solve, falling back to complete pivoting if LAPACK reports singularity."""
    info: dict[str, Any] = {"solver": assume_a, "ill_conditioned": False}
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", sla.LinAlgWarning)
            X = sla.solve(M, B, assume_a=assume_a, check_finite=True)
        if any(issubclass(w.category, sla.LinAlgWarning) for w in caught):
            info["ill_conditioned"] = True
        return X, info
    except np.linalg.LinAlgError:
        pass
    info["solver"] = "complete_pivoting"
    info["ill_conditioned"] = True
    if np.iscomplexobj(M) or np.iscomplexobj(B):
        # real embedding of the complex system
        Mr = np.block([[M.real, -M.imag], [M.imag, M.real]])
        Br = np.vstack([B.real, B.imag])
        Xr, ok = _kernels.complete_pivot_solve(Mr, Br)
        n = M.shape[0]
        X = Xr[:n] + 1j * Xr[n:]
    else:
        X, ok = _kernels.complete_pivot_solve(M, B)
    if not ok:
        raise SingularMatrixError("matrix is exactly singular at working precision", condition_number(M))
    return X, info


# ---------------------------------------------------------------------------
# memory capacity routes
# ---------------------------------------------------------------------------


def mc_naive(sys: LinearESN, tau_max: int, gram: GramSpec | None = None) -> MemoryCurve:
    """Evaluate ``(A^tau C)^T G^{-1} A^tau C`` for ``tau < tau_max`` by direct solves.

    Nothing is clipped. Lags whose value leaves [0, 1] are listed in
    ``meta["out_of_range"]``.
    """
    sys.require_esp()
    if gram is None:
        gram = gram_exact(sys)
    B = _kernels.krylov_columns(sys.A, sys.C, int(tau_max))
    U, info = _solve(np.asarray(gram.g_x), B, "sym")
    curve = MemoryCurve.build(
        np.einsum("ij,ij->j", B, U),
        "naive",
        N=sys.N,
        rho=sys.rho,
        tau_max=int(tau_max),
        seed=sys.seed,
        gram_method=gram.method,
        condition_estimate=gram.condition_estimate,
        **info,
    )
    curve.meta["out_of_range"] = curve.out_of_range()
    return curve


def gram_eigenbasis(sys: LinearESN, eig: EigenData | None = None, gamma0: float = 1.0) -> GramSpec:
    """Normalized Gram assembled as ``V Phi V^*`` with ``Phi_ij = c_i conj(c_j) / (1 - lambda_i conj(lambda_j))``."""
    if eig is None:
        eig = eigen_data(sys)
    if min_eigen_gap(eig.lambdas) <= DISTINCT_TOL:
        raise NotDiagonalizableError("eigenvalues are not distinct")
    _check_contractive(eig.lambdas)
    c = eig.c_coeffs if eig.c_coeffs is not None else eig.Vinv @ sys.C
    Phi = np.outer(c, c.conj()) * cauchy_matrix(eig.lambdas)
    G = eig.V @ Phi @ eig.V.conj().T
    Gr = _check_imag(G, float(np.max(np.abs(G.real))), "eigenbasis Gram")
    return GramSpec.from_normalized(Gr, gamma0, "eigenbasis")


def _as_matrix(A: np.ndarray | LinearESN) -> np.ndarray:
    return A.A if isinstance(A, LinearESN) else np.asarray(A, dtype=float)


def mc_neutral(A: np.ndarray | LinearESN, tau_max: int) -> MemoryCurve:
    """Mask-free memory curve from the eigenvalues of A alone."""
    A = _as_matrix(A)
    eig = eigen_data(A)
    lam = eig.lambdas
    _check_contractive(lam)
    L = cauchy_matrix(lam)
    P = lam[:, None] ** np.arange(int(tau_max))[None, :]
    Y, info = _solve(L, P, "her")
    mc = _check_imag(np.einsum("ij,ij->j", P.conj(), Y), 1.0, "eigen-neutral capacity")
    curve = MemoryCurve.build(
        mc, "eigen_neutral", N=A.shape[0], tau_max=int(tau_max), condition_estimate=condition_number(L), **info
    )
    curve.meta["out_of_range"] = curve.out_of_range()
    return curve


def mc_oracle_cyclic(N: int, rho: float, tau: int) -> float:
    """Cyclic reservoir with mask e1: ``rho^(2kN) (1 - rho^(2N))`` where ``k = tau // N``."""
    k = int(tau) // int(N)
    return float(rho ** (2 * k * N) * (1.0 - rho ** (2 * N)))


def mc_oracle_delay(N: int, tau: int) -> float:
    return 1.0 if 0 <= tau < N else 0.0


def oracle_curve(sys: LinearESN, tau_max: int) -> MemoryCurve | None:
    """Closed-form curve for cyclic and delay systems with mask e1, else ``None``."""
    e1 = np.zeros(sys.N)
    e1[0] = 1.0
    if not np.array_equal(sys.C, e1):
        return None
    if sys.kind == "cyclic" and sys.rho:
        vals = [mc_oracle_cyclic(sys.N, sys.rho, t) for t in range(tau_max)]
    elif sys.kind == "delay_shift":
        vals = [mc_oracle_delay(sys.N, t) for t in range(tau_max)]
    else:
        return None
    return MemoryCurve.build(np.array(vals), "oracle", N=sys.N, rho=sys.rho, tau_max=int(tau_max))


def fischer_curve(sys: LinearESN, sigma_eps: float, tau_max: int) -> np.ndarray:
    """``F_tau = (A^tau C)^T R^{-1} A^tau C`` with ``R = A R A^T + sigma^2 I``."""
    sys.require_esp()
    if not sigma_eps > 0:
        raise PreconditionError("sigma_eps must be positive")
    R = sla.solve_discrete_lyapunov(sys.A, sigma_eps**2 * np.eye(sys.N))
    R = 0.5 * (R + R.T)
    B = _kernels.krylov_columns(sys.A, sys.C, int(tau_max))
    F = np.einsum("ij,ij->j", B, sla.cho_solve(sla.cho_factor(R), B))
    return np.maximum(F, 0.0)


# ---------------------------------------------------------------------------
# stationary inputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Autocovariance:
    """Input autocovariance ``gamma(j)`` with a geometric envelope ``|gamma(j)| <= K r^j``."""

    func: Callable[[np.ndarray], np.ndarray]
    K: float
    r: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.r < 1.0:
            raise PreconditionError("autocovariance decay rate must lie in [0, 1)")

    def __call__(self, lags: Any) -> np.ndarray:
        return np.asarray(self.func(np.abs(np.asarray(lags))), dtype=float)

    @property
    def gamma0(self) -> float:
        return float(self(np.array([0]))[0])

    @classmethod
    def white_noise(cls, gamma0: float = 1.0) -> "Autocovariance":
        return cls(lambda j: np.where(j == 0, gamma0, 0.0), gamma0, 0.0)

    @classmethod
    def ar1(cls, phi: float, gamma0: float = 1.0) -> "Autocovariance":
        """``gamma(j) = gamma0 * phi^|j|``."""
        return cls(lambda j: gamma0 * float(phi) ** j, gamma0, abs(float(phi)))

    def check_psd(self, window: int) -> None:
        g = self(np.arange(max(int(window), 1)))
        if g[0] <= 0:
            raise PreconditionError("gamma(0) must be positive")
        w = np.linalg.eigvalsh(sla.toeplitz(g))
        if w[0] < -1e-10 * max(abs(w[-1]), 1.0):
            raise PreconditionError(f"autocovariance is not positive semidefinite (min eigenvalue {w[0]:.3e})")


def series_horizon(K: float, rate: float, tol: float) -> int:
    """Smallest M >= 1 with ``2 K rate^M / (1 - rate) < tol``."""
    if rate <= 0.0:
        return 1
    M = np.log(tol * (1.0 - rate) / (2.0 * K)) / np.log(rate)
    return max(1, int(np.floor(M)) + 1)


def mc_stationary(
    sys: LinearESN,
    eig: EigenData | None,
    acov: Autocovariance,
    tau_max: int,
    series_tol: float = 1e-12,
) -> MemoryCurve:
    """Memory curve for a stationary input with autocovariance ``acov``.

    Uses ``g_k(tau) = sum_j lambda_k^j gamma(tau - j)`` and
    ``h_kl = gamma0 + s_k + conj(s_l)`` with ``s_k = sum_{j>=1} gamma(j) lambda_k^j``;
    the capacity is ``g^* (gamma0 H)^{-1} g`` with ``H_kl = h_kl / (1 - lambda_k conj(lambda_l))``.
    The mask does not enter.
    """
    sys.require_esp()
    tau_max = int(tau_max)
    acov.check_psd(2 * tau_max)
    if eig is None:
        eig = eigen_data(sys)
    lam = eig.lambdas
    if min_eigen_gap(lam) <= DISTINCT_TOL:
        raise NotDiagonalizableError("eigenvalues are not distinct")
    _check_contractive(lam)
    g0 = acov.gamma0
    rho = float(np.max(np.abs(lam))) if lam.size else 0.0
    M = series_horizon(acov.K, rho * acov.r, series_tol)

    J = tau_max + M
    j = np.arange(J)
    P = lam[:, None] ** j[None, :]  # N x J
    Gam = acov(np.subtract.outer(np.arange(tau_max), j))  # tau_max x J
    G = Gam @ P.T  # row tau holds g_k(tau)
    s = P[:, 1 : M + 1] @ acov(np.arange(1, M + 1))
    h = g0 + s[:, None] + s.conj()[None, :]
    H = g0 * h * cauchy_matrix(lam)
    Y, info = _solve(H, G.T, "her")
    mc = _check_imag(np.einsum("ij,ij->j", G.T.conj(), Y), 1.0, "stationary capacity")
    curve = MemoryCurve.build(
        mc,
        "stationary",
        N=sys.N,
        rho=sys.rho,
        tau_max=tau_max,
        seed=sys.seed,
        series_horizon=M,
        condition_estimate=condition_number(H),
        **info,
    )
    curve.meta["out_of_range"] = curve.out_of_range()
    return curve
