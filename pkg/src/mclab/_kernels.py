"""Hot numerical loops, compiled with numba when available.

Every kernel exists twice: a plain loop body that numba compiles, and a
numpy implementation used when numba is missing or when the environment
variable ``MCLAB_DISABLE_NUMBA`` is set to a truthy value. The public names
at the bottom of the module point at whichever backend is active; both
implementations stay importable (``numba_impl`` / ``numpy_impl``) so the
benchmark and the tests can compare them.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

_FALSY = {"", "0", "false", "no", "off"}


def _numba_requested() -> bool:
    return os.environ.get("MCLAB_DISABLE_NUMBA", "").strip().lower() in _FALSY


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# loop bodies (numba targets)
# ---------------------------------------------------------------------------


def _simulate_loop(A, C, zeta, z):
    # accumulate column by column over A^T so the inner loop is contiguous and vectorizes
    T = z.shape[0]
    N = C.shape[0]
    At = np.ascontiguousarray(A.T)
    X = np.empty((T, N))
    x = np.zeros(N)
    xn = np.empty(N)
    for t in range(T):
        zt = z[t]
        for i in range(N):
            xn[i] = C[i] * zt + zeta[i]
        for k in range(N):
            xk = x[k]
            for i in range(N):
                xn[i] += At[k, i] * xk
        for i in range(N):
            x[i] = xn[i]
            X[t, i] = xn[i]
    return X


def _cross_cov_loop(X, z, tau_max):
    T, N = X.shape
    out = np.zeros((tau_max, N))
    # time-outer so each state row is read once; per-entry summation order is unchanged
    for t in range(T):
        for tau in range(min(tau_max, t + 1)):
            zt = z[t - tau]
            for i in range(N):
                out[tau, i] += X[t, i] * zt
    for tau in range(tau_max):
        scale = 1.0 / (T - tau)
        for i in range(N):
            out[tau, i] *= scale
    return out


def _krylov_loop(A, C, m):
    N = C.shape[0]
    K = np.empty((N, m))
    if m == 0:
        return K
    for i in range(N):
        K[i, 0] = C[i]
    At = np.ascontiguousarray(A.T)
    col = np.empty(N)
    for j in range(1, m):
        for i in range(N):
            col[i] = 0.0
        for k in range(N):
            v = K[k, j - 1]
            for i in range(N):
                col[i] += At[k, i] * v
        for i in range(N):
            K[i, j] = col[i]
    return K


def _arnoldi_loop(A, v, k, tol):
    # modified Gram-Schmidt with one full reorthogonalization pass
    N = v.shape[0]
    Q = np.zeros((N, k + 1))
    h = np.zeros(k)
    nv = 0.0
    for i in range(N):
        nv += v[i] * v[i]
    nv = np.sqrt(nv)
    for i in range(N):
        Q[i, 0] = v[i] / nv
    steps = 0
    w = np.empty(N)
    for j in range(k):
        for i in range(N):
            acc = 0.0
            for l in range(N):
                acc += A[i, l] * Q[l, j]
            w[i] = acc
        for _pass in range(2):
            for p in range(j + 1):
                c = 0.0
                for i in range(N):
                    c += Q[i, p] * w[i]
                for i in range(N):
                    w[i] -= c * Q[i, p]
        nw = 0.0
        for i in range(N):
            nw += w[i] * w[i]
        nw = np.sqrt(nw)
        steps = j + 1
        if nw < tol:
            h[j] = 0.0
            break
        h[j] = nw
        for i in range(N):
            Q[i, j + 1] = w[i] / nw
    return Q, h, steps


def _complete_pivot_loop(M, B):
    n = M.shape[0]
    r = B.shape[1]
    U = M.copy()
    Y = B.copy()
    colperm = np.arange(n)
    for k in range(n):
        best = -1.0
        pi = k
        pj = k
        for i in range(k, n):
            for j in range(k, n):
                a = abs(U[i, j])
                if a > best:
                    best = a
                    pi = i
                    pj = j
        if best == 0.0:
            return Y, False
        if pi != k:
            for j in range(n):
                tmp = U[k, j]
                U[k, j] = U[pi, j]
                U[pi, j] = tmp
            for j in range(r):
                tmp = Y[k, j]
                Y[k, j] = Y[pi, j]
                Y[pi, j] = tmp
        if pj != k:
            for i in range(n):
                tmp = U[i, k]
                U[i, k] = U[i, pj]
                U[i, pj] = tmp
            ti = colperm[k]
            colperm[k] = colperm[pj]
            colperm[pj] = ti
        piv = U[k, k]
        for i in range(k + 1, n):
            f = U[i, k] / piv
            if f != 0.0:
                for j in range(k, n):
                    U[i, j] -= f * U[k, j]
                for j in range(r):
                    Y[i, j] -= f * Y[k, j]
    Z = np.empty((n, r))
    for c in range(r):
        for i in range(n - 1, -1, -1):
            acc = Y[i, c]
            for j in range(i + 1, n):
                acc -= U[i, j] * Z[j, c]
            Z[i, c] = acc / U[i, i]
    out = np.empty((n, r))
    for i in range(n):
        for c in range(r):
            out[colperm[i], c] = Z[i, c]
    return out, True


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def _simulate_numpy(A, C, zeta, z):
    T = z.shape[0]
    X = np.empty((T, C.shape[0]))
    x = np.zeros(C.shape[0])
    for t in range(T):
        x = A @ x + C * z[t] + zeta
        X[t] = x
    return X


def _cross_cov_numpy(X, z, tau_max):
    T = X.shape[0]
    out = np.empty((tau_max, X.shape[1]))
    for tau in range(tau_max):
        out[tau] = X[tau:].T @ z[: T - tau] / (T - tau)
    return out


def _krylov_numpy(A, C, m):
    K = np.empty((C.shape[0], m))
    if m == 0:
        return K
    K[:, 0] = C
    for j in range(1, m):
        K[:, j] = A @ K[:, j - 1]
    return K


def _arnoldi_numpy(A, v, k, tol):
    N = v.shape[0]
    Q = np.zeros((N, k + 1))
    h = np.zeros(k)
    Q[:, 0] = v / np.linalg.norm(v)
    steps = 0
    for j in range(k):
        w = A @ Q[:, j]
        for _pass in range(2):
            for p in range(j + 1):
                w -= (Q[:, p] @ w) * Q[:, p]
        nw = np.linalg.norm(w)
        steps = j + 1
        if nw < tol:
            break
        h[j] = nw
        Q[:, j + 1] = w / nw
    return Q, h, steps


def _complete_pivot_numpy(M, B):
    n = M.shape[0]
    U = M.copy()
    Y = B.copy()
    colperm = np.arange(n)
    for k in range(n):
        sub = np.abs(U[k:, k:])
        flat = int(np.argmax(sub))
        pi, pj = divmod(flat, n - k)
        pi += k
        pj += k
        if sub.flat[flat] == 0.0:
            return Y, False
        U[[k, pi]] = U[[pi, k]]
        Y[[k, pi]] = Y[[pi, k]]
        U[:, [k, pj]] = U[:, [pj, k]]
        colperm[[k, pj]] = colperm[[pj, k]]
        f = U[k + 1 :, k] / U[k, k]
        U[k + 1 :, k:] -= np.outer(f, U[k, k:])
        Y[k + 1 :] -= np.outer(f, Y[k])
    Z = np.empty_like(Y)
    for i in range(n - 1, -1, -1):
        Z[i] = (Y[i] - U[i, i + 1 :] @ Z[i + 1 :]) / U[i, i]
    out = np.empty_like(Z)
    out[colperm] = Z
    return out, True


numpy_impl = SimpleNamespace(
    simulate_states=_simulate_numpy,
    cross_covariances=_cross_cov_numpy,
    krylov_columns=_krylov_numpy,
    arnoldi=_arnoldi_numpy,
    complete_pivot_solve=_complete_pivot_numpy,
    name="numpy",
)

if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)
    numba_impl = SimpleNamespace(
        simulate_states=_jit(_simulate_loop),
        cross_covariances=_jit(_cross_cov_loop),
        krylov_columns=_jit(_krylov_loop),
        arnoldi=_jit(_arnoldi_loop),
        complete_pivot_solve=_jit(_complete_pivot_loop),
        name="numba",
    )
else:  # pragma: no cover
    numba_impl = None

_active = numba_impl if (HAVE_NUMBA and _numba_requested()) else numpy_impl
BACKEND: str = _active.name


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def simulate_states(A, C, zeta, z):
    """States x_1..x_T of x_t = A x_{t-1} + C z_t + zeta from x_0 = 0, one per row."""
    return _active.simulate_states(_f64(A), _f64(C), _f64(zeta), _f64(z))


def cross_covariances(X, z, tau_max):
    """Row tau holds (1/(T-tau)) * sum_{t>=tau} x_t z_{t-tau}."""
    return _active.cross_covariances(_f64(X), _f64(z), int(tau_max))


def krylov_columns(A, C, m):
    """Columns C, AC, ..., A^{m-1}C built by repeated matrix-vector products."""
    return _active.krylov_columns(_f64(A), _f64(C), int(m))


def arnoldi(A, v, k, tol):
    """Arnoldi basis Q, subdiagonal h_{j+1,j} and the number of completed steps."""
    return _active.arnoldi(_f64(A), _f64(v), int(k), float(tol))


def complete_pivot_solve(M, B):
    """Gaussian elimination with complete pivoting; ok is False on an exactly zero pivot."""
    return _active.complete_pivot_solve(_f64(M), _f64(B))
