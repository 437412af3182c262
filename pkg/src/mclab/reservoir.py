"""Linear echo state network systems: generators, rescaling, Gram matrices.

The system is ``x_t = A x_{t-1} + C z_t + zeta`` with scalar input ``z_t``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .errors import (
    EchoStatePropertyError,
    NonRescalableError,
    PreconditionError,
    StandardizationError,
)
from .seeding import make_rng

EPS = float(np.finfo(float).eps)  # 2**-52

GENERATOR_KINDS = (
    "gaussian",
    "uniform",
    "sparse_gaussian",
    "orthogonal_gaussian",
    "cyclic",
    "delay_shift",
    "conditioned_sparse_gaussian",
)
MASK_KINDS = ("gaussian", "uniform", "sparse_gaussian", "sparse_uniform", "ones", "e1")
DEFAULT_RHO = 0.9


def _frozen_array(a: Any, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LinearESN:
    """Immutable linear reservoir system.

    ``kind``, ``seed`` and ``rho`` are provenance only; ``rho`` is the
    requested spectral radius (``None`` for hand-built systems).
    """

    A: np.ndarray
    C: np.ndarray
    zeta: np.ndarray | None = None
    kind: str = "custom"
    seed: int | None = None
    rho: float | None = None

    def __post_init__(self) -> None:
        A = _frozen_array(self.A, 2)
        C = _frozen_array(self.C, 1)
        N = C.shape[0]
        if A.shape != (N, N):
            raise ValueError(f"A has shape {A.shape} but C has length {N}")
        zeta = np.zeros(N) if self.zeta is None else self.zeta
        zeta = _frozen_array(zeta, 1)
        if zeta.shape != (N,):
            raise ValueError("zeta must have the same length as C")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "zeta", zeta)

    @property
    def N(self) -> int:
        return self.C.shape[0]

    @cached_property
    def spectral_radius(self) -> float:
        return spectral_radius(self.A)

    def require_esp(self) -> None:
        if not self.spectral_radius < 1.0:
            raise EchoStatePropertyError(
                f"spectral radius {self.spectral_radius:.17g} violates the echo state property"
            )

    def require_nonzero_mask(self) -> None:
        if not np.any(self.C):
            raise PreconditionError("input mask C is the zero vector")

    def with_mask(self, C: Any) -> "LinearESN":
        return LinearESN(self.A, C, self.zeta, self.kind, self.seed, self.rho)

    def same_as(self, other: "LinearESN") -> bool:
        """Bitwise equality of the numerical content."""
        return (
            np.array_equal(self.A, other.A)
            and np.array_equal(self.C, other.C)
            and np.array_equal(self.zeta, other.zeta)
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "N": self.N,
            "rho": self.rho,
            "kind": self.kind,
            "seed": self.seed,
            "A": self.A.tolist(),
            "C": self.C.tolist(),
            "zeta": self.zeta.tolist(),
        }

    def to_json(self) -> str:
        # json writes floats with repr, which round-trips binary64 exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LinearESN":
        N = int(d["N"])
        A = np.asarray(d["A"], dtype=np.float64).reshape(N, N)
        return cls(A, d["C"], d.get("zeta"), d.get("kind", "custom"), d.get("seed"), d.get("rho"))

    @classmethod
    def from_json(cls, text: str) -> "LinearESN":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class MaskSpec:
    """How to draw an input mask. Masks are rescaled to unit norm when ``normalize``."""

    kind: str = "gaussian"
    sparsity: float = 0.1
    normalize: bool = True

    def __post_init__(self) -> None:
        if self.kind not in MASK_KINDS:
            raise PreconditionError(f"unknown mask kind {self.kind!r}")
        if not 0.0 < self.sparsity <= 1.0:
            raise PreconditionError("mask sparsity must lie in (0, 1]")


def draw_mask(spec: MaskSpec, N: int, rng: np.random.Generator, max_redraws: int = 1000) -> np.ndarray:
    """Draw one mask; an all-zero sparse draw is redrawn."""
    for _ in range(max_redraws):
        if spec.kind == "gaussian":
            c = rng.standard_normal(N)
        elif spec.kind == "uniform":
            c = rng.uniform(-1.0, 1.0, N)
        elif spec.kind == "sparse_gaussian":
            c = rng.standard_normal(N) * (rng.random(N) < spec.sparsity)
        elif spec.kind == "sparse_uniform":
            c = rng.uniform(-1.0, 1.0, N) * (rng.random(N) < spec.sparsity)
        elif spec.kind == "ones":
            c = np.ones(N)
        else:
            c = np.zeros(N)
            c[0] = 1.0
        nrm = np.linalg.norm(c)
        if nrm > 0.0:
            return c / nrm if spec.normalize else c
    raise PreconditionError("could not draw a nonzero mask")


@dataclass(frozen=True)
class GeneratorSpec:
    """Seeded description of a random or structured reservoir.

    ``rho_target=None`` means 0.9 for every kind except ``delay_shift``,
    which is always returned unscaled. ``mask=None`` gives ``e1`` for the
    structured kinds and a unit-norm Gaussian mask otherwise.
    """

    kind: str
    N: int
    rho_target: float | None = None
    sparsity: float = 0.1
    condition_target: float = 0.7
    seed: int = 0
    mask: MaskSpec | str | None = None

    def __post_init__(self) -> None:
        if isinstance(self.mask, str):
            object.__setattr__(self, "mask", MaskSpec(self.mask))
        if self.kind not in GENERATOR_KINDS:
            raise PreconditionError(f"unknown generator kind {self.kind!r}")
        if int(self.N) < 1:
            raise PreconditionError("N must be positive")
        if not 0.0 < self.sparsity <= 1.0:
            raise PreconditionError("sparsity must lie in (0, 1]")
        if not 0.0 < self.condition_target <= 1.0:
            raise PreconditionError("condition_target must lie in (0, 1]")
        if self.rho_target is not None:
            if self.kind == "delay_shift":
                raise PreconditionError("delay_shift is nilpotent and cannot be rescaled")
            if not 0.0 < self.rho_target < 1.0:
                raise PreconditionError("rho_target must lie in (0, 1)")
        if not 0 <= int(self.seed) < 2**64:
            raise PreconditionError("seed must be an unsigned 64-bit integer")

    @property
    def rho(self) -> float:
        if self.kind == "delay_shift":
            return 0.0
        return DEFAULT_RHO if self.rho_target is None else float(self.rho_target)

    @property
    def mask_spec(self) -> MaskSpec:
        if self.mask is not None:
            return self.mask
        return MaskSpec("e1") if self.kind in ("cyclic", "delay_shift") else MaskSpec("gaussian")

    def to_dict(self) -> dict[str, Any]:
        d = {
            "kind": self.kind,
            "N": int(self.N),
            "rho_target": self.rho_target,
            "sparsity": self.sparsity,
            "condition_target": self.condition_target,
            "seed": int(self.seed),
        }
        m = self.mask_spec
        d["mask"] = {"kind": m.kind, "sparsity": m.sparsity, "normalize": m.normalize}
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GeneratorSpec":
        mask = d.get("mask")
        if isinstance(mask, str):
            mask = MaskSpec(mask)
        elif isinstance(mask, dict):
            mask = MaskSpec(**mask)
        return cls(
            kind=d["kind"],
            N=int(d["N"]),
            rho_target=d.get("rho_target"),
            sparsity=float(d.get("sparsity", 0.1)),
            condition_target=float(d.get("condition_target", 0.7)),
            seed=int(d.get("seed", 0)),
            mask=mask,
        )


def cyclic_permutation(N: int) -> np.ndarray:
    """Ones on the subdiagonal and in the top-right corner."""
    P = np.zeros((N, N))
    P[np.arange(1, N), np.arange(N - 1)] = 1.0
    P[0, N - 1] = 1.0
    return P


def shift_matrix(N: int) -> np.ndarray:
    S = np.zeros((N, N))
    S[np.arange(1, N), np.arange(N - 1)] = 1.0
    return S


def _sparse_gaussian(rng: np.random.Generator, N: int, sparsity: float) -> np.ndarray:
    vals = rng.standard_normal((N, N))
    keep = rng.random((N, N)) < sparsity
    return vals * keep / np.sqrt(sparsity * N)


def generate_raw(spec: GeneratorSpec) -> np.ndarray:
    """Reservoir matrix before spectral rescaling, with circular-law normalization."""
    N = int(spec.N)
    rng = make_rng(spec.seed, "reservoir")
    k = spec.kind
    if k == "gaussian":
        return rng.standard_normal((N, N)) / np.sqrt(N)
    if k == "uniform":
        return rng.uniform(-1.0, 1.0, (N, N)) / np.sqrt(N / 3.0)
    if k == "sparse_gaussian":
        return _sparse_gaussian(rng, N, spec.sparsity)
    if k == "orthogonal_gaussian":
        Q, R = np.linalg.qr(rng.standard_normal((N, N)))
        d = np.sign(np.diag(R))
        d[d == 0] = 1.0
        return Q * d
    if k == "cyclic":
        return cyclic_permutation(N)
    if k == "delay_shift":
        return shift_matrix(N)
    # conditioned_sparse_gaussian
    S = _sparse_gaussian(rng, N, spec.sparsity)
    U, s, Vt = np.linalg.svd(S)
    smax, smin = s[0], s[-1]
    if smax == 0.0:
        raise NonRescalableError("sparse draw is the zero matrix")
    lo = spec.condition_target * smax
    if smax > smin:
        s_new = lo + (s - smin) * (smax - lo) / (smax - smin)
    else:
        s_new = np.full_like(s, smax)
    return (U * s_new) @ Vt


def generate(spec: GeneratorSpec) -> LinearESN:
    """Draw the system described by ``spec``; equal arguments always give the same bits."""
    raw = generate_raw(spec)
    N = int(spec.N)
    if spec.kind == "delay_shift":
        A = raw
    elif spec.kind in ("cyclic", "orthogonal_gaussian"):
        A = spec.rho * raw  # spectral radius of a permutation or orthogonal matrix is 1
    else:
        A = spectral_rescale(raw, spec.rho)
    C = draw_mask(spec.mask_spec, N, make_rng(spec.seed, "mask"))
    return LinearESN(A, C, None, spec.kind, int(spec.seed), spec.rho)


def spectral_radius(A: np.ndarray) -> float:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def spectral_rescale(A: np.ndarray, rho_target: float) -> np.ndarray:
    """Return ``(rho_target / rho(A)) * A``."""
    if not 0.0 < rho_target < 1.0:
        raise PreconditionError("rho_target must lie in (0, 1)")
    A = np.asarray(A, dtype=float)
    r = spectral_radius(A)
    scale = np.linalg.norm(A, 2) if A.size else 0.0
    if r == 0.0 or r <= A.shape[0] * EPS * scale:
        raise NonRescalableError(f"spectral radius {r:.3e} is zero at working precision")
    return (rho_target / r) * A


def numerical_rank(M: np.ndarray) -> int:
    """Count singular values above ``max(rows, cols) * eps * sigma_max``."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > max(M.shape) * EPS * s[0]))


def kalman_rank(sys: LinearESN) -> int:
    """Numerical rank of the controllability matrix ``(C | AC | ... | A^{N-1} C)``."""
    return numerical_rank(_kernels.krylov_columns(sys.A, sys.C, sys.N))


@dataclass(frozen=True, eq=False)
class GramSpec:
    """State autocovariance ``gamma_x`` and its normalization ``g_x = gamma_x / gamma0``."""

    gamma_x: np.ndarray
    g_x: np.ndarray
    gamma0: float
    condition_estimate: float
    method: str
    residual: float = field(default=float("nan"))

    @classmethod
    def from_normalized(cls, g_x: np.ndarray, gamma0: float, method: str, residual: float = float("nan")) -> "GramSpec":
        g = 0.5 * (g_x + g_x.T)
        g.setflags(write=False)
        gam = gamma0 * g
        gam.setflags(write=False)
        return cls(gam, g, float(gamma0), condition_number(g), method, float(residual))


def condition_number(M: np.ndarray) -> float:
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return float("inf")
    return float(s[0] / s[-1]) if s[-1] > 0.0 else float("inf")


def lyapunov_residual(A: np.ndarray, Q: np.ndarray, X: np.ndarray) -> float:
    """Relative max-norm residual of ``X = A X A^T + Q``."""
    r = A @ X @ A.T + Q - X
    nx = np.max(np.abs(X))
    return float(np.max(np.abs(r)) / nx) if nx > 0 else float(np.max(np.abs(r)))


def gram_exact(sys: LinearESN, gamma0: float = 1.0) -> GramSpec:
    """Solve ``Gamma = A Gamma A^T + gamma0 C C^T`` directly."""
    sys.require_esp()
    if not gamma0 > 0:
        raise PreconditionError("gamma0 must be positive")
    A = sys.A
    Q = np.outer(sys.C, sys.C)
    G = sla.solve_discrete_lyapunov(A, Q)
    G = 0.5 * (G + G.T)
    return GramSpec.from_normalized(G, gamma0, "lyapunov", lyapunov_residual(A, Q, G))


def gram_series(sys: LinearESN, gamma0: float = 1.0, M: int | None = None, tol: float = 1e-14) -> GramSpec:
    """Truncated sum of ``A^j C C^T (A^j)^T`` for ``j <= M``.

    With ``M=None`` the horizon is the smallest M whose geometric tail bound
    ``rho^(2M) / (1 - rho^2)`` (times ``|C|^2``) drops below ``tol``.
    """
    sys.require_esp()
    if M is None:
        r = sys.spectral_radius
        c2 = float(sys.C @ sys.C)
        if r == 0.0:
            M = sys.N
        else:
            M = int(np.ceil(np.log(tol * (1 - r * r) / max(c2, 1e-300)) / (2 * np.log(r))))
            M = max(M, sys.N)
    K = _kernels.krylov_columns(sys.A, sys.C, M + 1)
    return GramSpec.from_normalized(K @ K.T, gamma0, "truncated_series")


def gram_cyclic(N: int, rho: float, gamma0: float = 1.0) -> GramSpec:
    """Closed-form Gram of the cyclic reservoir with mask e1: ``diag(rho^(2i)) / (1 - rho^(2N))``."""
    d = rho ** (2.0 * np.arange(N)) / (1.0 - rho ** (2 * N))
    return GramSpec.from_normalized(np.diag(d), gamma0, "lyapunov", 0.0)


def standardize(sys: LinearESN, gram: GramSpec) -> LinearESN:
    """Regular realization ``A' = G^{-1/2} A G^{1/2}``, ``C' = G^{-1/2} C`` with G = ``gram.gamma_x``.

    The returned system has identity state covariance under the same input variance.
    """
    w, Q = np.linalg.eigh(gram.gamma_x)
    wmax = float(w[-1]) if w.size else 0.0
    if w.size == 0 or wmax <= 0.0 or w[0] <= sys.N * EPS * wmax:
        cond = float("inf") if w.size == 0 or w[0] <= 0 else wmax / float(w[0])
        raise StandardizationError("state covariance is numerically singular", cond)
    sq = np.sqrt(w)
    half = (Q * sq) @ Q.T
    inv_half = (Q / sq) @ Q.T
    A = inv_half @ sys.A @ half
    C = inv_half @ sys.C
    zeta = inv_half @ sys.zeta
    return LinearESN(A, C, zeta, sys.kind, sys.seed, sys.rho)
