import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import assume, given, settings, strategies as st

from mclab import (
    Autocovariance,
    GeneratorSpec,
    LinearESN,
    MemoryCurve,
    NonRescalableError,
    NotDiagonalizableError,
    PreconditionError,
    SingularMatrixError,
    eigen_data,
    fischer_curve,
    generate,
    gram_eigenbasis,
    gram_exact,
    mc_naive,
    mc_neutral,
    mc_oracle_cyclic,
    mc_oracle_delay,
    mc_stationary,
)
from mclab.exact import min_eigen_gap, oracle_curve
from mclab.reservoir import gram_cyclic

# closed forms evaluated independently of the library
CYC4 = 1 - 0.9**8  # 0.56953279
CYC4_K1 = 0.9**8 * (1 - 0.9**8)  # 0.2451651911...


def unit(v):
    return v / np.linalg.norm(v)


def regression_oracle(sys, acov, tau_max, horizon):
    """Population regression of z_{t-tau} on x_t from long truncated series."""
    K = np.column_stack([np.linalg.matrix_power(sys.A, j) @ sys.C for j in range(horizon)])
    lags = np.arange(horizon)
    Gam = K @ sla.toeplitz(acov(lags)) @ K.T
    out = []
    for tau in range(tau_max):
        cov = K @ acov(np.abs(tau - lags))
        out.append(cov @ np.linalg.solve(Gam, cov) / acov(np.array([0]))[0])
    return np.array(out)


# --- mc_naive -----------------------------------------------------------------------


def test_naive_scalar():
    curve = mc_naive(LinearESN([[0.7]], [1.0]), 200)
    tau = np.arange(200)
    np.testing.assert_allclose(curve.values, 0.7 ** (2 * tau) * (1 - 0.49), rtol=1e-12, atol=1e-300)
    assert curve.total == pytest.approx(1.0, abs=1e-12)
    assert curve.method == "naive"


def test_naive_cyclic_lag_two():
    sys = generate(GeneratorSpec("cyclic", 4, 0.9))
    assert mc_naive(sys, 3).values[2] == pytest.approx(0.56953279, abs=1e-8)


def test_naive_delay():
    vals = mc_naive(generate(GeneratorSpec("delay_shift", 5)), 9).values
    np.testing.assert_allclose(vals, [1, 1, 1, 1, 1, 0, 0, 0, 0], atol=1e-12)


def test_naive_exactly_singular_gram():
    sys = LinearESN(np.zeros((3, 3)), [1.0, 0.0, 0.0])
    with pytest.raises(SingularMatrixError) as info:
        mc_naive(sys, 4)
    assert np.isinf(info.value.condition_estimate) or info.value.condition_estimate > 1e15


def test_naive_keeps_and_flags_out_of_range_values():
    sys = generate(GeneratorSpec("gaussian", 100, 0.9, seed=1))
    curve = mc_naive(sys, 150)
    assert curve.meta["out_of_range"] == curve.out_of_range()
    v = np.asarray(curve.values)
    bad = curve.meta["out_of_range"]
    # nothing is clipped: flagged lags keep their raw values
    assert all(v[t] < -1e-6 or v[t] > 1 + 1e-6 for t in bad)


# --- eigen data and eigenbasis Gram ------------------------------------------------------


def test_eigen_data_invariants():
    sys = generate(GeneratorSpec("gaussian", 12, 0.9, seed=3))
    ed = eigen_data(sys)
    A = sys.A
    assert np.max(np.abs(A @ ed.V - ed.V * ed.lambdas)) <= 1e-8 * np.max(np.abs(A))
    assert np.max(np.abs(ed.V @ ed.Vinv - np.eye(12))) <= 1e-8 * ed.cond_V
    mods = np.round(np.abs(ed.lambdas), 12)
    assert np.all(np.diff(mods) <= 0)
    np.testing.assert_allclose(ed.V @ ed.c_coeffs, sys.C, atol=1e-12)


def test_eigen_data_rejects_repeated_eigenvalues():
    with pytest.raises(NotDiagonalizableError):
        eigen_data(0.5 * np.eye(3))


def test_eigenbasis_gram_scalar():
    g = gram_eigenbasis(LinearESN([[0.5]], [1.0]))
    assert g.g_x[0, 0] == pytest.approx(4 / 3, rel=1e-14)


def test_eigenbasis_gram_cyclic():
    sys = generate(GeneratorSpec("cyclic", 3, 0.9))
    np.testing.assert_allclose(gram_eigenbasis(sys).g_x, gram_cyclic(3, 0.9).g_x, atol=1e-10)


def test_eigenbasis_gram_gaussian():
    sys = generate(GeneratorSpec("gaussian", 10, 0.9, seed=2))
    G1, G2 = gram_eigenbasis(sys).g_x, gram_exact(sys).g_x
    assert np.max(np.abs(G1 - G2)) <= 1e-6 * np.max(np.abs(G2))


@settings(max_examples=30, deadline=None)
@given(
    kind=st.sampled_from(["gaussian", "uniform", "sparse_gaussian", "orthogonal_gaussian", "cyclic", "conditioned_sparse_gaussian"]),
    n=st.integers(1, 30),
    seed=st.integers(0, 2**64 - 1),
)
def test_eigenbasis_gram_matches_lyapunov(kind, n, seed):
    try:
        sys = generate(GeneratorSpec(kind, n, 0.9, sparsity=0.5, seed=seed))
        ed = eigen_data(sys)
    except (NonRescalableError, NotDiagonalizableError):
        assume(False)
    assume(ed.cond_V < 1e6)
    G1, G2 = gram_eigenbasis(sys, ed).g_x, gram_exact(sys).g_x
    assert np.max(np.abs(G1 - G2)) <= 1e-6 * np.max(np.abs(G2))


# --- mask-neutral formula -------------------------------------------------------------


def test_neutral_scalar_equals_naive():
    a = mc_neutral(np.array([[0.7]]), 30).values
    b = mc_naive(LinearESN([[0.7]], [1.0]), 30).values
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-300)


def test_neutral_matches_naive_for_two_masks():
    sys = generate(GeneratorSpec("gaussian", 8, 0.9, seed=8))
    rng = np.random.default_rng(0)
    c1, c2 = unit(rng.standard_normal(8)), unit(rng.standard_normal(8))
    ref = mc_neutral(sys.A, 40).values
    np.testing.assert_allclose(mc_naive(sys.with_mask(c1), 40).values, ref, atol=1e-6)
    np.testing.assert_allclose(mc_naive(sys.with_mask(c2), 40).values, ref, atol=1e-6)


def test_neutral_cyclic():
    vals = mc_neutral(generate(GeneratorSpec("cyclic", 4, 0.9)).A, 4).values
    np.testing.assert_allclose(vals, CYC4, atol=1e-10)


def test_neutral_rejects_nilpotent_shift():
    with pytest.raises(NotDiagonalizableError):
        mc_neutral(generate(GeneratorSpec("delay_shift", 5)).A, 5)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(1, 10), s1=st.integers(0, 2**32), s2=st.integers(0, 2**32))
def test_mask_neutrality(seed, n, s1, s2):
    sys = generate(GeneratorSpec("gaussian", n, 0.8, seed=seed))
    try:
        ref = mc_neutral(sys.A, 25).values
    except NotDiagonalizableError:
        assume(False)
    for s in (s1, s2):
        c = unit(np.random.default_rng(s).standard_normal(n))
        np.testing.assert_allclose(mc_naive(sys.with_mask(c), 25).values, ref, atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(1, 10), rho=st.floats(0.3, 0.8))
def test_total_capacity_is_state_dimension(seed, n, rho):
    sys = generate(GeneratorSpec("gaussian", n, rho, seed=seed))
    # the direct solve loses about cond(G) * eps per lag; past 1e10 that is the memory gap itself
    assume(gram_exact(sys).condition_estimate <= 1e10)
    T_star = int(np.ceil(np.log(1e-6) / np.log(rho)))
    assert abs(mc_naive(sys, T_star + 1).total - n) <= 1e-4


def test_total_capacity_gap_on_ill_conditioned_small_system():
    # N = 10, rho = 0.5: cond(G) ~ 1e14 and the direct solve visibly loses capacity
    from mclab import mc_osm

    sys = generate(GeneratorSpec("gaussian", 10, 0.5, seed=998))
    assert gram_exact(sys).condition_estimate > 1e13
    assert 10 - mc_naive(sys, 60).total > 1e-4
    assert mc_osm(sys, 60).curve.total == pytest.approx(10, abs=1e-9)


@pytest.mark.parametrize("kind", ["gaussian", "orthogonal_gaussian", "cyclic"])
def test_bounded_curve_invariant(kind):
    sys = generate(GeneratorSpec(kind, 8, 0.85, seed=21))
    for curve in (mc_naive(sys, 60), mc_neutral(sys.A, 60)):
        assert np.all(curve.values >= -1e-6) and np.all(curve.values <= 1 + 1e-6)
        assert curve.total <= 8 + 1e-6


# --- closed forms --------------------------------------------------------------------


def test_oracle_cyclic_values():
    assert mc_oracle_cyclic(4, 0.9, 0) == pytest.approx(0.56953279, abs=1e-8)
    assert mc_oracle_cyclic(4, 0.9, 4) == pytest.approx(CYC4_K1, rel=1e-14)
    assert mc_oracle_cyclic(7, 1e-9, 0) == pytest.approx(1.0, abs=1e-12)


def test_oracle_delay_values():
    assert [mc_oracle_delay(3, t) for t in range(5)] == [1, 1, 1, 0, 0]


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 50), rho=st.floats(0.2, 0.95))
def test_cyclic_oracle_matches_naive_with_exact_gram(n, rho):
    sys = generate(GeneratorSpec("cyclic", n, rho))
    vals = mc_naive(sys, 3 * n, gram_cyclic(n, rho)).values
    ref = [mc_oracle_cyclic(n, rho, t) for t in range(3 * n)]
    np.testing.assert_allclose(vals, ref, atol=1e-10)


def test_oracle_curve_only_for_structured_systems():
    assert oracle_curve(generate(GeneratorSpec("gaussian", 4, seed=1)), 5) is None
    assert oracle_curve(generate(GeneratorSpec("delay_shift", 4)), 6).total == 4


# --- Fischer memory curve ----------------------------------------------------------------


def test_fischer_orthogonal_closed_form():
    sys = generate(GeneratorSpec("orthogonal_gaussian", 6, 0.8, seed=4))
    F = fischer_curve(sys, 0.5, 20)
    tau = np.arange(20)
    np.testing.assert_allclose(F, (1 - 0.64) * 0.8 ** (2 * tau) / 0.25, rtol=1e-10)


def test_fischer_zero_matrix():
    F = fischer_curve(LinearESN(np.zeros((3, 3)), [1.0, 0, 0]), 2.0, 4)
    np.testing.assert_allclose(F, [0.25, 0, 0, 0], atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(1, 10), sigma=st.floats(0.1, 3.0))
def test_fischer_dominated_by_capacity(seed, n, sigma):
    sys = generate(GeneratorSpec("gaussian", n, 0.85, seed=seed))
    F = fischer_curve(sys, sigma, 30)
    mc = mc_naive(sys, 30).values
    assert np.all(F >= 0)
    assert np.all(sigma**2 * F[1:] < mc[1:] + 1e-9)


# --- stationary inputs -------------------------------------------------------------------


def test_stationary_white_noise_equals_neutral():
    sys = generate(GeneratorSpec("gaussian", 6, 0.8, seed=6))
    a = mc_stationary(sys, None, Autocovariance.white_noise(), 30)
    np.testing.assert_allclose(a.values, mc_neutral(sys.A, 30).values, atol=1e-8)
    assert a.method == "stationary"


def test_stationary_ar1_matches_regression_oracle():
    sys = generate(GeneratorSpec("gaussian", 4, 0.8, seed=9))
    acov = Autocovariance.ar1(0.5)
    vals = mc_stationary(sys, None, acov, 15).values
    np.testing.assert_allclose(vals, regression_oracle(sys, acov, 15, 400), atol=1e-6)


def test_stationary_ar1_mask_independent():
    sys = generate(GeneratorSpec("gaussian", 4, 0.8, seed=9))
    acov = Autocovariance.ar1(0.5)
    c2 = unit(np.random.default_rng(3).standard_normal(4))
    a = mc_stationary(sys, None, acov, 15).values
    b = mc_stationary(sys.with_mask(c2), None, acov, 15).values
    np.testing.assert_allclose(a, b, atol=1e-8)
    # the regression oracle sees the mask explicitly, so this is a real check
    np.testing.assert_allclose(regression_oracle(sys.with_mask(c2), acov, 15, 400), a, atol=1e-6)


def test_stationary_rejects_non_psd_autocovariance():
    bad = Autocovariance(lambda j: np.where(j == 0, 1.0, np.where(j == 1, 0.9, 0.0)), 1.0, 0.5)
    with pytest.raises(PreconditionError):
        mc_stationary(generate(GeneratorSpec("gaussian", 3, seed=1)), None, bad, 10)


# --- serialization ------------------------------------------------------------------------


def test_memory_curve_csv_roundtrip(tmp_path):
    curve = mc_naive(generate(GeneratorSpec("cyclic", 4, 0.9)), 10)
    path = curve.to_csv(tmp_path / "c.csv")
    assert path.read_text().splitlines()[0] == "tau,mc"
    back = MemoryCurve.from_csv(path)
    np.testing.assert_array_equal(back.values, curve.values)
    assert back.method == "naive" and back.meta["N"] == 4
