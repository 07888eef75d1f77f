import math

import numba
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from closest_return import density as D
from closest_return import maps as M
from closest_return import mixing as X
from closest_return.errors import DegenerateError, InsufficientDataError

DOUBLING = M.doubling()
LOGISTIC = M.logistic()

# prime with 2 as a primitive root: x -> 2x mod N is an exact doubling on a/N
N_PRIME = 1_000_000_000_091
N_PRIME_FACTORS = (2, 5, 7, 13, 53, 1979, 10477)


@numba.njit(cache=True)
def _grid_e_k(starts, N, J, thr):
    out = np.zeros(len(starts), dtype=np.bool_)
    for i in range(len(starts)):
        a = starts[i]
        x = a
        for _ in range(J):
            x = (2 * x) % N
            if abs(a - x) <= thr:
                out[i] = True
                break
    return out


def test_prime_oracle_setup():
    m = N_PRIME - 1
    for q in N_PRIME_FACTORS:
        while m % q == 0:
            m //= q
    assert m == 1
    assert all(pow(2, (N_PRIME - 1) // q, N_PRIME) != 1 for q in N_PRIME_FACTORS)


# -- cal_E --------------------------------------------------------------------

@pytest.mark.parametrize("k", [1, 5])
def test_cal_e_doubling(k):
    # the set is 2^k - 1 intervals of total length exactly 2 eps
    est = X.measure_cal_E(DOUBLING, k, 1e-3, 1_000_000, seed=k)
    assert abs(est.measure_hat - 2e-3) <= est.half_width
    assert est.measure_hat == pytest.approx(2e-3, rel=0.1)


@pytest.mark.parametrize("k", [1, 3, 10])
def test_cal_e_grid_oracle(k):
    x = (np.arange(2**20) + 0.5) / 2**20  # dyadic, so float doubling is exact
    y = x.copy()
    for _ in range(k):
        y = np.where(y < 0.5, 2 * y, 2 * y - 1)
    assert np.mean(np.abs(x - y) < 1e-3) == pytest.approx(2e-3, abs=2**-19)


def test_cal_e_whole_domain():
    est = X.measure_cal_E(LOGISTIC, 3, 1.0, 10_000, seed=0)
    assert est.measure_hat == 1.0 and est.half_width == 0.0


def test_cal_e_monotone_in_eps():
    vals = [X.measure_cal_E(LOGISTIC, 2, eps, 20_000, seed=7).measure_hat for eps in (1e-3, 1e-2, 0.1, 0.5)]
    assert vals == sorted(vals)


def test_cal_e_validation():
    with pytest.raises(ValueError):
        X.measure_cal_E(DOUBLING, 1, 1e-3, 9_999, 0)
    with pytest.raises(ValueError):
        X.measure_cal_E(DOUBLING, 0, 1e-3, 10_000, 0)
    with pytest.raises(ValueError):
        X.measure_cal_E(DOUBLING, 1, 0.0, 10_000, 0)


def test_cal_e_worker_independence():
    a = X.measure_cal_E(LOGISTIC, 4, 1e-2, 200_000, seed=3, workers=1)
    b = X.measure_cal_E(LOGISTIC, 4, 1e-2, 200_000, seed=3, workers=4)
    assert a.measure_hat == b.measure_hat


# -- E_k ----------------------------------------------------------------------

def test_e_k_horizon():
    assert X.e_k_horizon(1) == 0
    assert X.e_k_horizon(3) == 1
    assert X.e_k_horizon(1000) == int(math.log(1000) ** 5)


def test_e_k_includes_fixed_point_neighbourhoods():
    # horizon 1 at k = 3: |x - 2x mod 1| <= 1/3 on [0, 1/3] and [2/3, 1]
    est = X.measure_E_k(DOUBLING, 3, 100_000, seed=1)
    assert abs(est.measure_hat - 2 / 3) <= est.half_width


def test_e_k_moderate_k_is_full():
    assert X.measure_E_k(DOUBLING, 32, 5000, seed=2).measure_hat == 1.0
    assert X.measure_E_k(DOUBLING, 1000, 2000, seed=2).measure_hat == 1.0


def test_e_k_membership_against_double_loop():
    k = 20
    J = X.e_k_horizon(k)
    words = np.random.default_rng(4).integers(0, 2**64, size=(1000, (J + 64) // 64 + 2), dtype=np.uint64)
    mask = X.e_k_mask(DOUBLING, k, words)
    thr = int(2.0**64 / k)
    for r in range(1000):
        st0 = M.ExactDyadicState(words[r], 0, len(words[r]) * 64 - 64)
        x0 = int(st0.fixed64(0))
        hit = any(abs(x0 - int(st0.fixed64(j))) <= thr for j in range(1, J + 1))
        assert hit == mask[r]


def test_e_k_large_k_against_prime_grid():
    k = 10**6
    J = X.e_k_horizon(k)
    est = X.measure_E_k(DOUBLING, k, 2000, seed=11)
    starts = np.random.default_rng(12).integers(1, N_PRIME, size=2000)
    oracle = _grid_e_k(starts, N_PRIME, J, N_PRIME // k).mean()
    heuristic = 1 - math.exp(-2 * J / k)
    assert abs(est.measure_hat - oracle) <= 1.5 * est.half_width
    assert est.measure_hat == pytest.approx(heuristic, abs=est.half_width)


def test_e_k_decreases_in_k():
    a = X.measure_E_k(DOUBLING, 10**6, 2000, seed=5)
    b = X.measure_E_k(DOUBLING, 4 * 10**6, 2000, seed=5)
    assert b.measure_hat <= a.measure_hat + a.half_width


def test_e_k_float_map():
    est = X.measure_E_k(LOGISTIC, 32, 2000, seed=3)
    assert 0.0 <= est.measure_hat <= 1.0
    with pytest.raises(ValueError):
        X.measure_E_k(LOGISTIC, 2, 100, seed=0)


# -- F_k ----------------------------------------------------------------------

def test_f_k_doubling_dense_recurrence():
    dens = D.exact_density_estimate(DOUBLING)
    est = X.measure_F_k(DOUBLING, dens, 32, outer_samples=200, inner_samples=200, seed=1)
    assert est.measure_hat == 1.0
    assert est.indeterminate == 0
    assert est.params["K"] == 32


def test_f_k_large_rho_shrinks_threshold():
    dens = D.exact_density_estimate(DOUBLING)
    est = X.measure_F_k(DOUBLING, dens, 32, rho=50.0, outer_samples=100, inner_samples=100, seed=1)
    assert est.measure_hat == 1.0


def test_f_k_trivial_horizon():
    dens = D.exact_density_estimate(DOUBLING)
    est = X.measure_F_k(DOUBLING, dens, 1, outer_samples=100, inner_samples=10, seed=0)
    assert est.measure_hat == 0.0


def test_f_k_logistic_runs():
    dens = D.exact_density_estimate(LOGISTIC, 1000)
    est = X.measure_F_k(LOGISTIC, dens, 16, outer_samples=100, inner_samples=200, seed=2)
    assert 0.0 <= est.measure_hat <= 1.0


def test_f_k_validation():
    dens = D.exact_density_estimate(DOUBLING)
    with pytest.raises(ValueError):
        X.measure_F_k(DOUBLING, dens, 10, psi=0.0)
    with pytest.raises(ValueError):
        X.measure_F_k(DOUBLING, dens, 10, outer_samples=10**5, inner_samples=10**5)


def test_inverse_cdf_roundtrip():
    dens = D.exact_density_estimate(LOGISTIC, 200)
    p = np.linspace(0, 1, 1001)
    np.testing.assert_allclose(dens.cdf(X._inverse_cdf(dens, p)), p, atol=1e-12)


# -- singularity exponent -----------------------------------------------------

def test_singularity_doubling():
    theta, C = X.singularity_exponent(DOUBLING, 2_000_000, 400, seed=1, min_count=200)
    assert theta == pytest.approx(1.0, abs=0.05)


def test_singularity_logistic_endpoints():
    theta, C = X.singularity_exponent(LOGISTIC, 2_000_000, 400, seed=1, anchor="endpoints", min_count=200)
    assert 0.4 <= theta <= 0.65
    # mu([0, l]) = (2 / pi) arcsin(sqrt l) ~ (2 / pi) l^(1/2)
    assert C == pytest.approx(2 / math.pi, rel=0.2)


def test_singularity_needs_data():
    with pytest.raises(InsufficientDataError):
        X.singularity_exponent(DOUBLING, 10_000, 100, seed=0, min_count=10**6)
    with pytest.raises(ValueError):
        X.singularity_exponent(DOUBLING, 10_000, 99, seed=0)


def test_interval_masses_counts():
    pts = np.linspace(0, 1, 1001)
    im = X.interval_masses(DOUBLING, pts, 100, seed=0)
    manual = [np.count_nonzero((pts >= lo) & (pts <= lo + ell)) for lo, ell in zip(im.lo, im.length)]
    np.testing.assert_array_equal(im.count, manual)
    with pytest.raises(ValueError):
        X.interval_masses(DOUBLING, pts, 10, seed=0, anchor="middle")


# -- correlations -------------------------------------------------------------

def _identity(x):
    return x


def test_correlation_doubling_identity():
    cfg = X.CorrelationConfig(_identity, _identity, [1, 6], 10_000_000)
    (n1, a1, h1), (n6, a6, h6) = X.correlation_alpha(DOUBLING, cfg, seed=3)
    assert a1 == pytest.approx(1 / 24, rel=0.05)
    assert a6 == pytest.approx(1 / 768, rel=0.15)
    assert abs(a1 - 1 / 24) <= h1


def test_correlation_constant_observable():
    cfg = X.CorrelationConfig(_identity, lambda x: np.full_like(x, 3.0), [1, 2], 10_000)
    for _, alpha, hw in X.correlation_alpha(LOGISTIC, cfg, seed=0):
        assert alpha <= 1e-12 and hw <= 1e-9


def test_covariance_of_independent_draws():
    g = np.random.default_rng(8)
    for _ in range(6):
        alpha, hw = X.covariance_estimate(g.random(100_000), g.random(100_000))
        assert alpha <= hw


@given(st.integers(10, 500), st.integers(0, 2**32))
@settings(max_examples=50, deadline=None)
def test_moment_merge_matches_direct(n, seed):
    g = np.random.default_rng(seed)
    x, y = g.normal(size=n), g.normal(size=n)
    half = n // 2
    merged = X._moments(x[:half], y[:half]) + X._moments(x[half:], y[half:])
    a, h = X._alpha_from_moments(merged)
    a2, h2 = X.covariance_estimate(x, y)
    assert a == pytest.approx(a2, rel=1e-9, abs=1e-12)
    # raw-moment sums cancel, so the half-width only agrees to roundoff of O(1) terms
    assert h == pytest.approx(h2, rel=1e-6, abs=1e-6)


def test_correlation_worker_independence():
    cfg = X.CorrelationConfig(np.cos, _identity, [1, 3], 300_000)
    a = X.correlation_alpha(LOGISTIC, cfg, seed=2, workers=1)
    b = X.correlation_alpha(LOGISTIC, cfg, seed=2, workers=3)
    assert a == b


def test_correlation_config_validation():
    with pytest.raises(ValueError):
        X.CorrelationConfig(_identity, _identity, [1], holder_exponent=1.5)
    with pytest.raises(ValueError):
        X.CorrelationConfig(_identity, _identity, [-1])
    with pytest.raises(ValueError):
        X.CorrelationConfig(_identity, _identity, [1], mollifier_eta=0)


# -- mollifier ----------------------------------------------------------------

def test_mollifier_examples():
    phi = X.mollify_indicator((0.0, 0.01), 1.0)
    assert phi.ramp == pytest.approx(1e-4)
    assert phi(0.005) == 1.0
    assert phi(0.00005) == pytest.approx(0.5)
    assert phi.deficit == pytest.approx(1e-4)
    assert phi.lipschitz == pytest.approx(1e4)


def test_mollifier_degenerate():
    with pytest.raises(DegenerateError):
        X.mollify_indicator((0.0, 1.0), 1.0)
    with pytest.raises(ValueError):
        X.mollify_indicator((0.5, 0.5), 1.0)


@given(st.floats(0.0, 0.9), st.floats(0.01, 0.1), st.floats(0.5, 2.0))
@settings(max_examples=100, deadline=None)
def test_mollifier_properties(lo, length, eta):
    phi = X.mollify_indicator((lo, lo + length), eta)
    xs = np.linspace(0, 1, 20_001)
    v = phi(xs)
    ind = ((xs >= lo) & (xs <= lo + length)).astype(float)
    assert np.all(v >= 0) and np.all(v <= ind)
    assert np.all(np.abs(np.diff(v)) <= phi.lipschitz * np.diff(xs) * (1 + 1e-9))
    fine = np.linspace(lo, lo + length, 2_000_001)
    deficit = np.trapezoid(1 - phi(fine), fine)
    assert deficit == pytest.approx(phi.deficit, rel=1e-3, abs=1e-9)


# -- decay fits ---------------------------------------------------------------

def test_fit_decay_exact_forms():
    ks = np.arange(1, 20)
    e = X.fit_decay(np.column_stack([ks, 3 * np.exp(-0.7 * ks)]))
    assert e.kind == "exponential" and e.rate == pytest.approx(-0.7)
    p = X.fit_decay(np.column_stack([ks, 5 * ks ** -1.5]))
    assert p.kind == "polynomial" and p.rate == pytest.approx(-1.5)
    with pytest.raises(InsufficientDataError):
        X.fit_decay([(1, 1.0), (2, 0.5), (3, 0.0)])
