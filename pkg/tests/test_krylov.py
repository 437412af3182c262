import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from mclab import EchoStatePropertyError, GeneratorSpec, LinearESN, PreconditionError, generate, kalman_rank
from mclab.errors import NonRescalableError, NotDiagonalizableError
from mclab.exact import eigen_data
from mclab.krylov import (
    SQUEEZING_HEADER,
    auto_truncation,
    build_krylov,
    kappa_approx,
    qr_diag,
    squeezing_table,
    theta_norms_arnoldi,
    theta_norms_svd,
    vandermonde_factor,
    vandermonde_residual,
    write_squeezing_csv,
)

def draw(kind, n, seed):
    # sparse draws at small N can be nilpotent or defective; those are legitimate refusals
    try:
        return generate(GeneratorSpec(kind, n, 0.9, seed=seed))
    except NonRescalableError:
        assume(False)


KINDS_DISTINCT = ["gaussian", "uniform", "sparse_gaussian", "orthogonal_gaussian", "conditioned_sparse_gaussian", "cyclic"]


def delay(n):
    return generate(GeneratorSpec("delay_shift", n))


def cyclic(n, rho=0.9):
    return generate(GeneratorSpec("cyclic", n, rho))


# --- build_krylov --------------------------------------------------------------------


def test_delay_auto_truncation():
    b = build_krylov(delay(4))
    assert b.m == 4 and b.rank == 4
    np.testing.assert_array_equal(b.K, np.eye(4))


def test_cyclic_columns():
    b = build_krylov(cyclic(3), m=6)
    expected = np.zeros((3, 6))
    for j in range(6):
        expected[j % 3, j] = 0.9**j
    np.testing.assert_allclose(b.K, expected, rtol=1e-15)
    assert b.rank == 3


def test_gaussian_krylov_is_numerically_rank_deficient():
    b = build_krylov(generate(GeneratorSpec("gaussian", 100, 0.9, seed=0)), m=500, theta=False)
    assert b.rank < 100


def test_auto_truncation_requires_esp():
    sys = LinearESN(np.eye(2), [1.0, 0.0])
    with pytest.raises(EchoStatePropertyError):
        build_krylov(sys)
    assert build_krylov(sys, m=3).rank == 1


def test_auto_truncation_is_capped():
    sys = LinearESN(0.999 * np.eye(3), [1.0, 1.0, 1.0])
    assert auto_truncation(sys) == 30


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(1, 15), m=st.integers(1, 40), kind=st.sampled_from(KINDS_DISTINCT))
def test_bundle_invariants(seed, n, m, kind):
    sys = draw(kind, n, seed)
    b = build_krylov(sys, m=m)
    recon = b.U @ np.diag(b.Sigma) @ b.W.T
    assert np.max(np.abs(b.K - recon)) <= 1e-10 * b.Sigma[0]
    assert np.all(np.diff(b.Sigma) <= 0)
    assert b.rank == int(np.sum(b.Sigma > max(n, m) * np.finfo(float).eps * b.Sigma[0]))
    assert b.theta_norms[0] == pytest.approx(np.linalg.norm(sys.C))
    assert np.all(b.theta_norms >= 0) and b.theta_norms.shape == (min(m, n),)


@pytest.mark.parametrize("sys", [delay(n) for n in (3, 10, 30)] + [cyclic(n, r) for n in (3, 10, 30) for r in (0.5, 0.9)])
def test_rank_identity_on_exact_systems(sys):
    assert build_krylov(sys, m=sys.N + 5).rank == kalman_rank(sys) == sys.N


# --- Vandermonde -----------------------------------------------------------------------


def test_vandermonde_scalar():
    sys = LinearESN([[0.5]], [2.0])
    V, D, W = vandermonde_factor(sys, None, 3)
    np.testing.assert_allclose(V, [[1.0]])
    np.testing.assert_allclose(D, [[2.0]])
    np.testing.assert_allclose(W, [[1.0, 0.5, 0.25]])
    np.testing.assert_allclose((V @ D @ W).real, [[2.0, 1.0, 0.5]])


def test_vandermonde_cyclic_two():
    sys = cyclic(2)
    eig = eigen_data(sys)
    np.testing.assert_allclose(np.sort(eig.lambdas.real), [-0.9, 0.9], atol=1e-15)
    V, D, W = vandermonde_factor(sys, eig, 8)
    np.testing.assert_allclose(V @ D @ W, build_krylov(sys, m=8).K, atol=1e-10)


def test_vandermonde_gaussian_residual():
    res, bound = vandermonde_residual(generate(GeneratorSpec("gaussian", 10, 0.9, seed=7)), 30)
    assert res <= bound


def test_vandermonde_rejects_defective():
    with pytest.raises(NotDiagonalizableError):
        vandermonde_residual(delay(4), 4)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(1, 20), kind=st.sampled_from(KINDS_DISTINCT))
def test_vandermonde_bound_all_kinds(seed, n, kind):
    sys = draw(kind, n, seed)
    try:
        eig = eigen_data(sys)
    except NotDiagonalizableError:
        assume(False)
    res, bound = vandermonde_residual(sys, 2 * n, eig)
    assert res <= bound


# --- theta norms -----------------------------------------------------------------------


def test_theta_delay():
    np.testing.assert_array_equal(theta_norms_svd(delay(4), 8), [1, 1, 1, 1, 0, 0, 0, 0])
    np.testing.assert_array_equal(theta_norms_arnoldi(delay(4), 8), [1, 1, 1, 1, 0, 0, 0, 0])


def test_theta_cyclic():
    th = theta_norms_svd(cyclic(3), 6)
    np.testing.assert_allclose(th[:3], [1.0, 0.9, 0.81], rtol=1e-14)
    assert np.all(th[3:] < 1e-14)
    np.testing.assert_allclose(theta_norms_arnoldi(cyclic(3), 3), th[:3], rtol=1e-8)


def test_theta_unnormalized_starts_at_mask_norm():
    sys = LinearESN(0.5 * np.eye(2)[::-1], [3.0, 4.0])
    assert theta_norms_svd(sys, 2, normalize=False)[0] == pytest.approx(5.0)
    assert theta_norms_arnoldi(sys, 2, normalize=False)[0] == pytest.approx(5.0)


def test_superexponential_squeezing():
    th = theta_norms_svd(generate(GeneratorSpec("gaussian", 100, 0.9, seed=1)), 500)
    j = int(np.argmax(th < 2.0**-52)) + 1
    assert th[j - 1] < 2.0**-52 and j < 200
    assert 0.9**j > 2.0**-52


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_arnoldi_agrees_with_svd(seed):
    sys = generate(GeneratorSpec("gaussian", 50, 0.9, seed=seed))
    a, b = theta_norms_svd(sys, 150), theta_norms_arnoldi(sys, 150)
    keep = (a > 1e-12) & (b > 1e-12)
    assert keep.sum() > 10
    r = a[keep] / b[keep]
    assert np.all((r > 0.5) & (r < 2.0))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(2, 25), kind=st.sampled_from(KINDS_DISTINCT + ["delay_shift"]))
def test_method_agreement_property(seed, n, kind):
    sys = delay(n) if kind == "delay_shift" else draw(kind, n, seed)
    a, b = theta_norms_svd(sys, 2 * n), theta_norms_arnoldi(sys, 2 * n)
    keep = (a > 1e-12) & (b > 1e-12)
    r = a[keep] / b[keep]
    assert np.all((r > 0.5) & (r < 2.0))


# --- kappa and QR ----------------------------------------------------------------------


def kappa_oracle(N, rho, j):
    with mpmath.workdps(50):
        return float(mpmath.sqrt(mpmath.mpf(rho) * mpmath.factorial(N) / (mpmath.mpf(N) ** j * mpmath.factorial(N - j))))


def test_kappa_examples():
    assert kappa_approx(3, 0.9, 3) == pytest.approx(math.sqrt(0.2), rel=1e-14)
    assert kappa_approx(7, 0.81, 0) == pytest.approx(0.9, rel=1e-14)
    # frozen from the 50-digit oracle
    assert kappa_approx(100, 0.9, 100) == pytest.approx(9.164756e-22, rel=1e-6)


def test_kappa_range_checks():
    with pytest.raises(PreconditionError):
        kappa_approx(3, 0.9, 4)
    with pytest.raises(PreconditionError):
        kappa_approx(3, 0.9, -1)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 170), data=st.data(), rho=st.floats(0.05, 0.99))
def test_kappa_matches_oracle(n, data, rho):
    j = data.draw(st.integers(0, n))
    assert kappa_approx(n, rho, j) == pytest.approx(kappa_oracle(n, rho, j), rel=1e-12)


def test_kappa_beyond_factorial_overflow():
    v = kappa_approx(2000, 0.9, 2000)
    assert 0.0 <= v and math.isfinite(v)
    assert kappa_approx(2000, 0.9, 10) == pytest.approx(kappa_oracle(2000, 0.9, 10), rel=1e-10)


def test_qr_diag_examples():
    np.testing.assert_allclose(qr_diag(delay(4)), [1, 1, 1, 1])
    np.testing.assert_allclose(qr_diag(cyclic(3)), [1, 0.9, 0.81], rtol=1e-14)


def test_qr_diag_tracks_theta():
    sys = generate(GeneratorSpec("gaussian", 100, 0.9, seed=2))
    q, th = qr_diag(sys, normalize=True), theta_norms_svd(sys, 100)
    keep = (q > 1e-12) & (th > 1e-12)
    r = q[keep] / th[keep]
    assert np.all((r > 0.1) & (r < 10.0))


def test_squeezing_csv(tmp_path):
    sys = generate(GeneratorSpec("gaussian", 100, 0.9, seed=1, mask="ones"))
    tab = squeezing_table(sys, 500)
    path = write_squeezing_csv(tab, tmp_path / "sq.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(SQUEEZING_HEADER) == "j,theta_svd,theta_arnoldi,r_jj,kappa,rho_pow_j"
    assert len(lines) == 501
    assert np.isnan(tab["kappa"][100:]).all() and np.isfinite(tab["kappa"][:100]).all()
