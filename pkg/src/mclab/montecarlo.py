"""Simulation and the plug-in sample estimator of memory capacity.

The estimator at lag tau is ``|| (1/(T - tau)) sum_t x_t z_{t - tau} ||^2``,
which is only a consistent estimate of the capacity for a regular system
(identity state covariance, unit input variance).
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import PreconditionError
from .exact import mc_naive, oracle_curve
from .reservoir import LinearESN, gram_exact
from .seeding import derive_seed, make_rng

REGULARITY_TOL = 1e-6


def thread_count(requested: int | None = None) -> int:
    """Worker count: explicit request, else ``MCLAB_THREADS``, else 1."""
    if requested is None:
        env = os.environ.get("MCLAB_THREADS", "").strip()
        requested = int(env) if env else 1
    return max(1, int(requested))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Post-washout input and states; ``x_init`` is the state just before the first stored row."""

    z: np.ndarray
    X: np.ndarray
    washout: int
    seed: int | None
    x_init: np.ndarray

    @property
    def T(self) -> int:
        return int(self.z.shape[0])

    def recursion_residual(self, sys: LinearESN) -> float:
        prev = np.vstack([self.x_init[None, :], self.X[:-1]])
        r = self.X - prev @ sys.A.T - np.outer(self.z, sys.C) - sys.zeta
        return float(np.max(np.abs(r))) if r.size else 0.0


def simulate(
    sys: LinearESN,
    T: int,
    seed: int | None,
    washout: int = 0,
    z: np.ndarray | None = None,
) -> Trajectory:
    """Run the recursion from ``x_0 = 0`` for T steps and drop the first ``washout`` steps.

    ``z`` overrides the Gaussian input draw (it must have length T).
    """
    sys.require_esp()
    T, washout = int(T), int(washout)
    if not T > washout >= 0:
        raise PreconditionError("need T > washout >= 0")
    if z is None:
        if seed is None:
            raise PreconditionError("a seed is required when no input is given")
        z = make_rng(seed, "input").standard_normal(T)
    else:
        z = np.asarray(z, dtype=float)
        if z.shape != (T,):
            raise PreconditionError("input length must equal T")
    X = _kernels.simulate_states(sys.A, sys.C, sys.zeta, z)
    x_init = X[washout - 1].copy() if washout else np.zeros(sys.N)
    Xk, zk = X[washout:], np.array(z[washout:])
    for a in (Xk, zk, x_init):
        a.setflags(write=False)
    return Trajectory(zk, Xk, washout, seed, x_init)


def sample_cov(traj: Trajectory, tau: int) -> np.ndarray:
    """``(1/(T - tau)) sum_{t > tau} x_t z_{t - tau}`` over the stored rows."""
    T = traj.T
    tau = int(tau)
    if not 0 <= tau < T:
        raise PreconditionError(f"lag {tau} must lie in [0, {T})")
    return traj.X[tau:].T @ traj.z[: T - tau] / (T - tau)


@dataclass(frozen=True, eq=False)
class SampleMC:
    per_lag: np.ndarray
    total: float
    T: int
    tau_max: int

    @property
    def mean_per_lag(self) -> float:
        return self.total / self.tau_max


def mc_sample(traj: Trajectory, tau_max: int) -> SampleMC:
    """Squared norms of the sample cross-covariances for every lag below ``tau_max``."""
    tau_max = int(tau_max)
    if not 0 < tau_max < traj.T:
        raise PreconditionError("need 0 < tau_max < T")
    cov = _kernels.cross_covariances(traj.X, traj.z, tau_max)
    per_lag = np.einsum("ij,ij->i", cov, cov)
    per_lag.setflags(write=False)
    return SampleMC(per_lag, float(per_lag.sum()), traj.T, tau_max)


def regularity_gap(sys: LinearESN) -> float:
    """Max-norm distance between the state covariance (unit input variance) and the identity."""
    G = gram_exact(sys).gamma_x
    return float(np.max(np.abs(G - np.eye(sys.N))))


def theoretical_bias(
    sys: LinearESN,
    T: int,
    tau: int,
    symmetric_sum: bool = False,
    check_regular: bool = True,
) -> float:
    """Expected excess of the sample estimator at lag ``tau`` for a regular system.

    Default: ``N/(T - tau) + (2/(T - tau)) sum_{j=0}^{tau} c_j^T c_{2 tau - j}``
    with ``c_j = A^j C``. With ``symmetric_sum=True`` the cross term is
    ``(1/(T - tau)) sum_{j=0}^{2 tau} c_j^T c_{2 tau - j}``, which is what a
    direct fourth-moment expansion gives; the two differ by the j = tau term.
    """
    T, tau = int(T), int(tau)
    if not 0 <= tau < T:
        raise PreconditionError("need 0 <= tau < T")
    if check_regular:
        gap = regularity_gap(sys)
        if gap > REGULARITY_TOL:
            raise PreconditionError(f"system is not regular (covariance deviates from I by {gap:.3e})")
    return (sys.N + float(bias_cross_terms(sys, tau + 1, symmetric_sum)[tau])) / (T - tau)


def bias_cross_terms(sys: LinearESN, tau_max: int, symmetric_sum: bool = False) -> np.ndarray:
    """Numerator cross terms of the bias for every lag below ``tau_max`` at once.

    Entry tau is ``2 sum_{j<=tau} c_j^T c_{2tau-j}`` (or the full antidiagonal
    sum with ``symmetric_sum``), read off the antidiagonals of ``K^T K``.
    """
    tau_max = int(tau_max)
    K = _kernels.krylov_columns(sys.A, sys.C, 2 * tau_max - 1)
    M = K.T @ K
    out = np.empty(tau_max)
    for tau in range(tau_max):
        j = np.arange(tau + 1)
        half = M[j, 2 * tau - j]
        if symmetric_sum:
            out[tau] = 2.0 * half[:-1].sum() + half[-1]
        else:
            out[tau] = 2.0 * half.sum()
    return out


def replicate(
    sys: LinearESN,
    T: int,
    tau_max: int,
    n_rep: int,
    seed: int,
    washout: int = 0,
    threads: int | None = None,
) -> np.ndarray:
    """Per-lag estimates for ``n_rep`` independent input draws, one row per replication.

    Replication i uses the derived seed ``derive_seed(seed, "rep", i)``; row order
    is by i regardless of thread scheduling.
    """

    def one(i: int) -> np.ndarray:
        traj = simulate(sys, T, derive_seed(seed, "rep", i), washout)
        return mc_sample(traj, tau_max).per_lag

    workers = thread_count(threads)
    if workers == 1:
        rows = [one(i) for i in range(n_rep)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, range(n_rep)))
    return np.array(rows).reshape(n_rep, int(tau_max))


def exact_reference(sys: LinearESN, tau_max: int) -> np.ndarray:
    """Closed form when one exists, else the direct Gram-inverse evaluation."""
    oc = oracle_curve(sys, tau_max)
    return np.asarray((oc if oc is not None else mc_naive(sys, tau_max)).values)


REPLICATION_HEADER = ("T", "tau", "mean_mc_hat", "se", "theoretical_bias", "exact_mc")


def replication_study(
    sys: LinearESN,
    T_grid: Iterable[int],
    taus: Sequence[int],
    n_rep: int,
    seed: int,
    threads: int | None = None,
    totals: dict[int, tuple[float, float]] | None = None,
) -> list[dict[str, float]]:
    """Mean, standard error, predicted bias and exact value for each (T, tau) cell.

    If ``totals`` is a dict it receives, per T, the replication mean and
    standard error of the estimated total over the lags in ``taus``.
    """
    taus = [int(t) for t in taus]
    tau_max = max(taus) + 1
    exact = exact_reference(sys, tau_max)
    regular = regularity_gap(sys) <= REGULARITY_TOL
    cross = bias_cross_terms(sys, tau_max) if regular else None
    rows = []
    for T in T_grid:
        est = replicate(sys, T, tau_max, n_rep, derive_seed(seed, "T", int(T)), threads=threads)
        if totals is not None:
            tot = est[:, taus].sum(axis=1)
            se_tot = float(tot.std(ddof=1) / np.sqrt(n_rep)) if n_rep > 1 else float("nan")
            totals[int(T)] = (float(tot.mean()), se_tot)
        for tau in taus:
            col = est[:, tau]
            se = float(col.std(ddof=1) / np.sqrt(n_rep)) if n_rep > 1 else float("nan")
            bias = (sys.N + cross[tau]) / (T - tau) if cross is not None else float("nan")
            rows.append(
                {
                    "T": int(T),
                    "tau": tau,
                    "mean_mc_hat": float(col.mean()),
                    "se": se,
                    "theoretical_bias": bias,
                    "exact_mc": float(exact[tau]),
                }
            )
    return rows


def write_replication_csv(rows: list[dict[str, float]], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPLICATION_HEADER)
        for r in rows:
            w.writerow([r["T"], r["tau"]] + ["%.17g" % r[k] for k in REPLICATION_HEADER[2:]])
    return path
