"""Memory curves from the row space of the Krylov matrix.

With ``K_m = U S W^T`` (thin SVD), the capacity at lag tau is the squared norm
of row tau of W, the diagonal of the orthogonal projector ``W W^T``. No Gram
matrix is inverted. OSM+ averages these curves over many random input masks.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import _kernels
from .errors import PreconditionError
from .exact import MemoryCurve
from .krylov import auto_truncation
from .montecarlo import thread_count
from .reservoir import EPS, LinearESN, MaskSpec, draw_mask
from .seeding import derive_seed, make_rng


@dataclass(frozen=True, eq=False)
class OsmResult:
    curve: MemoryCurve
    retained_rank: int
    m: int
    L: int
    band_lo: np.ndarray | None = None
    band_hi: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        v = self.curve.values
        lo = v if self.band_lo is None else self.band_lo
        hi = v if self.band_hi is None else self.band_hi
        lines = ["tau,mc_mean,mc_p05,mc_p95"]
        lines += [f"{t},{v[t]:.17g},{lo[t]:.17g},{hi[t]:.17g}" for t in range(v.shape[0])]
        path.write_text("\n".join(lines) + "\n")
        side = {
            "method": self.curve.method,
            "total": self.curve.total,
            "retained_rank": self.retained_rank,
            "m": self.m,
            "L": self.L,
            **{k: v for k, v in self.meta.items() if k not in ("ranks", "se")},
        }
        path.with_suffix(".meta.json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
        return path


def default_m(sys: LinearESN) -> int:
    """Automatic truncation, but never fewer than 1.5 N columns."""
    return max(auto_truncation(sys), math.ceil(1.5 * sys.N))


def _resolve(sys: LinearESN, m: int | str | None) -> int:
    if m is None or m == "auto":
        return default_m(sys)
    m = int(m)
    if m < 1:
        raise PreconditionError("m must be positive")
    return m


def _osm_values(A: np.ndarray, C: np.ndarray, m: int, rtol: float | None) -> tuple[np.ndarray, int]:
    K = _kernels.krylov_columns(A, C, m)
    _, s, Wt = np.linalg.svd(K, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros(m), 0
    cut = max(K.shape) * EPS * s[0] if rtol is None else rtol * s[0]
    r = int(np.sum(s > cut))
    W = Wt[:r].T
    return np.einsum("ij,ij->i", W, W), r


def mc_osm(sys: LinearESN, m: int | str | None = "auto", rtol: float | None = 0.0) -> OsmResult:
    """Diagonal of ``W W^T`` from the SVD of ``K_m``; entry tau is the capacity at lag tau.

    ``rtol`` sets which singular directions count: ``0.0`` keeps every
    direction with a nonzero singular value, a float keeps ``sigma > rtol *
    sigma_max`` and ``None`` applies the rank threshold ``max(N, m) * eps``.
    """
    sys.require_esp()
    sys.require_nonzero_mask()
    m = _resolve(sys, m)
    vals, r = _osm_values(sys.A, sys.C, m, rtol)
    curve = MemoryCurve.build(vals, "osm", N=sys.N, rho=sys.rho, tau_max=m, seed=sys.seed, retained_rank=r)
    return OsmResult(curve, r, m, 1)


def mc_osm_plus(
    A: np.ndarray | LinearESN,
    mask_spec: MaskSpec | None = None,
    m: int | str | None = "auto",
    L: int = 1000,
    seed: int = 0,
    threads: int | None = None,
    rtol: float | None = 0.0,
) -> OsmResult:
    """Average plain OSM over L input masks drawn from ``mask_spec`` and normalized to unit norm.

    Mask l comes from the stream ``derive_seed(seed, "mask", l)``; results are
    reduced in l order, so the output does not depend on ``threads``.
    """
    if isinstance(A, LinearESN):
        base = A
    else:
        A = np.asarray(A, dtype=float)
        base = LinearESN(A, np.ones(A.shape[0]) / np.sqrt(A.shape[0]))
    base.require_esp()
    L = int(L)
    if L < 1:
        raise PreconditionError("L must be at least 1")
    spec = mask_spec or MaskSpec("gaussian")
    if spec.normalize is False:
        spec = MaskSpec(spec.kind, spec.sparsity, True)
    N = base.N

    def mask(l: int) -> np.ndarray:
        return draw_mask(spec, N, make_rng(derive_seed(seed, "mask", l)))

    m = _resolve(base.with_mask(mask(0)), m)

    def one(l: int) -> tuple[np.ndarray, int]:
        return _osm_values(base.A, mask(l), m, rtol)

    workers = thread_count(threads)
    if workers == 1:
        results = [one(l) for l in range(L)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(L)))
    curves = np.array([r[0] for r in results])
    ranks = np.array([r[1] for r in results])
    mean = curves.mean(axis=0)
    lo, hi = np.percentile(curves, [5.0, 95.0], axis=0)
    se = curves.std(axis=0, ddof=1) / np.sqrt(L) if L > 1 else np.zeros(m)
    totals = curves.sum(axis=1)
    curve = MemoryCurve(
        mean,
        float(totals.mean()),
        "osm_plus",
        {"N": N, "rho": base.rho, "tau_max": m, "seed": int(seed), "L": L, "mask_kind": spec.kind},
    )
    return OsmResult(
        curve,
        int(np.median(ranks)),
        m,
        L,
        lo,
        hi,
        {"seed": int(seed), "mask_kind": spec.kind, "ranks": ranks, "se": se},
    )


@dataclass(frozen=True)
class MonotonicityReport:
    max_uptick: float
    uptick_lags: list[int]


def monotonicity_report(curve: MemoryCurve | np.ndarray, tol: float = 1e-6) -> MonotonicityReport:
    """Largest increase ``values[tau+1] - values[tau]`` and the lags tau where it exceeds ``tol``."""
    v = np.asarray(curve.values if isinstance(curve, MemoryCurve) else curve, dtype=float)
    if v.size < 2:
        return MonotonicityReport(0.0, [])
    up = np.maximum(np.diff(v), 0.0)
    return MonotonicityReport(float(up.max()), [int(t) for t in np.flatnonzero(up > tol)])


def rearrangement_gap(curve: MemoryCurve | np.ndarray) -> float:
    """Max distance between a curve and its descending rearrangement."""
    v = np.asarray(curve.values if isinstance(curve, MemoryCurve) else curve, dtype=float)
    return float(np.max(np.abs(np.sort(v)[::-1] - v))) if v.size else 0.0
