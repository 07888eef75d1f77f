import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from closest_return import density as D
from closest_return import maps as M
from closest_return import tower as T
from closest_return.errors import DegenerateError, EmptyTowerError, GapError, InsufficientDataError

DOUBLING = M.doubling()
PM = M.pomeau_manneville(0.5)
FULL = T.build_first_return_tower(DOUBLING, (0.0, 1.0), 10)


@pytest.fixture(scope="module")
def half_tower():
    return T.build_first_return_tower(DOUBLING, (0.0, 0.5), 64)


@pytest.fixture(scope="module")
def pm_tower():
    return T.build_first_return_tower(PM, (0.5, 1.0), 1000)


def test_full_base_doubling():
    tw = T.build_first_return_tower(DOUBLING, (0.0, 1.0), 10)
    assert [b.R for b in tw.branches] == [1, 1]
    assert tw.coverage == pytest.approx(1.0)
    assert tw.gcd == 1
    assert tw.is_markov
    tail = T.return_tail(tw)
    assert tail.values[1] == 0
    assert tail.fit_kind == "exponential"


def _grid_return_times(lo, hi, count, r_cap):
    # doubling on dyadic rationals is exact in floating point
    x0 = lo + (np.arange(count) + 0.5) * (hi - lo) / count
    x = x0.copy()
    R = np.full(count, r_cap + 1)
    for j in range(1, r_cap + 1):
        x = np.where(x < 0.5, 2 * x, 2 * x - 1)
        hit = (R > r_cap) & (x >= lo) & (x < hi)
        R[hit] = j
    return R


def test_half_base_tail_against_grid_oracle(half_tower):
    R = _grid_return_times(0.0, 0.5, 2**20, 40)
    tail = T.return_tail(half_tower)
    for k in range(21):
        assert tail.relative[k] == pytest.approx(np.mean(R > k), abs=2e-6)
        assert tail.relative[k] == pytest.approx(2.0**-k, abs=1e-12)


def test_half_base_fit(half_tower):
    tail = T.return_tail(half_tower)
    assert tail.fit_kind == "exponential"
    assert -tail.fit_rate / math.log(2) == pytest.approx(1.0, abs=0.05)
    assert half_tower.coverage >= 1 - 1e-3
    assert half_tower.gcd == 1


def test_tower_branches_are_disjoint_and_inside(half_tower, pm_tower):
    for tw in (half_tower, pm_tower):
        lefts = tw.lefts
        rights = np.array([b.right for b in tw.branches])
        assert np.all(rights[:-1] <= lefts[1:] + 1e-15)
        assert lefts[0] >= tw.base[0] and rights[-1] <= tw.base[1]
        assert np.all(rights > lefts)


def test_branch_probe_diagnostics(half_tower, pm_tower):
    for tw in (half_tower, pm_tower):
        assert tw.diagnostics["endpoint_error"] <= 1e-8
        assert tw.diagnostics["monotone"]
    assert half_tower.is_markov
    # f([1/2, c)) = [0.85.., 1] misses part of the base, so the PM tower is not Markov
    assert not pm_tower.is_markov


def test_pm_tail_is_polynomial(pm_tower):
    tail = T.return_tail(pm_tower)
    assert tail.fit_kind == "polynomial"
    assert -2.4 <= tail.fit_rate <= -1.6


def test_too_few_return_times():
    tw = T.build_first_return_tower(DOUBLING, (0.0, 0.5), 3)
    with pytest.raises(InsufficientDataError):
        T.return_tail(tw)


def test_empty_tower():
    with pytest.raises(EmptyTowerError):
        T.build_first_return_tower(DOUBLING, (0.6, 0.61), 2)


def test_base_outside_domain():
    with pytest.raises(ValueError):
        T.build_first_return_tower(DOUBLING, (0.5, 1.5), 10)


def test_tail_sum_bound(half_tower, pm_tower):
    for tw in (half_tower, pm_tower, T.build_first_return_tower(DOUBLING, (0.0, 1.0), 10),
               T.build_first_return_tower(M.tent(), (0.0, 0.5), 64)):
        assert T.tail_sum_check(T.return_tail(tw))


def test_tail_sum_bound_detects_violation():
    tail = T.ReturnTail(np.array([1.0, 0.0, 0.0, 0.0, 0.0]), "exponential", -1.0,
                        np.array([1, 4]), np.array([1.0, 1.0]), 0.0, 1.0)
    assert not T.tail_sum_check(tail)


def _binary_digits(x, count):
    out = []
    for _ in range(count):
        x *= 2
        out.append(int(x >= 1))
        x -= out[-1]
    return out


def test_separation_time_example():
    tw = T.build_first_return_tower(DOUBLING, (0.0, 1.0), 10)
    assert T.separation_time(tw, DOUBLING, 0.1, 0.3) == 1
    assert T.separation_time(tw, DOUBLING, 0.1, 0.7) == 0
    assert T.separation_time(tw, DOUBLING, 0.3, 0.3, cap=20) == 20


@given(st.integers(1, 2**40 - 1), st.integers(1, 2**40 - 1))
@settings(max_examples=200, deadline=None)
def test_separation_time_is_first_differing_digit(a, b):
    x, y = a / 2**40, b / 2**40
    dx, dy = _binary_digits(x, 40), _binary_digits(y, 40)
    expected = next((i for i in range(40) if dx[i] != dy[i]), 40)
    assert T.separation_time(FULL, DOUBLING, x, y, cap=40) == expected


def test_gap_error():
    tw = T.build_first_return_tower(DOUBLING, (0.0, 0.5), 5)
    with pytest.raises(GapError):
        T.branch_index(tw, 0.4999)  # R = 6 lives past the search horizon


def test_induced_step_returns_to_base(half_tower):
    g = np.random.default_rng(0)
    for x in g.uniform(0, 0.5, 200):
        y, i = T.induced_step(half_tower, DOUBLING, x)
        assert 0.0 <= y <= 0.5
        assert half_tower.branches[i].left <= x <= half_tower.branches[i].right


def test_regularity_doubling():
    tw = T.build_first_return_tower(DOUBLING, (0.0, 1.0), 10)
    rep = T.check_regularity(tw, DOUBLING, pairs=500)
    assert rep.beta_hat == pytest.approx(0.5, abs=0.01)
    assert rep.max_violation <= 0
    assert rep.max_distortion == 0
    assert rep.C_hat <= 1.01


def test_regularity_tent_has_no_distortion():
    tw = T.build_first_return_tower(M.tent(), (0.0, 0.5), 64)
    rep = T.check_regularity(tw, M.tent(), pairs=300)
    assert rep.max_distortion <= 1e-12
    assert rep.max_violation <= 0


def test_regularity_pm(pm_tower):
    rep = T.check_regularity(pm_tower, PM, pairs=200, seed=1)
    assert rep.max_violation <= 0
    assert 0 < rep.beta_hat < 1
    assert rep.pairs_used == 200


def test_regularity_needs_pairs(half_tower):
    with pytest.raises(ValueError):
        T.check_regularity(half_tower, DOUBLING, pairs=10)


def test_reconstruct_uniform_on_full_base():
    tw = T.build_first_return_tower(DOUBLING, (0.0, 1.0), 10)
    rec = T.reconstruct_measure(tw, DOUBLING, D.exact_density_estimate(DOUBLING))
    np.testing.assert_allclose(rec.values, 1.0, atol=1e-9)


def test_reconstruct_from_half_base(half_tower):
    mu0 = D.DensityEstimate("exact", np.linspace(0.0, 0.5, 101), np.full(100, 2.0))
    rec = T.reconstruct_measure(half_tower, DOUBLING, mu0)
    assert D.l1_distance(rec, lambda x: np.ones_like(x)) <= 0.05
    assert rec.total_mass() == pytest.approx(1.0, abs=1e-9)


def test_reconstruct_pm_matches_direct_histogram(pm_tower):
    mu0 = T.induced_birkhoff_density(pm_tower, PM, 4_000_000, bins=200, seed=3)
    rec = T.reconstruct_measure(pm_tower, PM, mu0)
    direct = D.birkhoff_histogram(PM, 10_000_000, seed=4)
    # the neutral fixed point at 0 makes the density unbounded there
    assert D.l1_distance(rec, direct, window=(0.1, 1.0)) <= 0.1


def test_reconstruct_degenerate(half_tower):
    mu0 = D.DensityEstimate("x", np.linspace(0.0, 0.5, 11), np.zeros(10))
    with pytest.raises(DegenerateError):
        T.reconstruct_measure(half_tower, DOUBLING, mu0)


def test_csv_outputs(tmp_path, half_tower):
    half_tower.to_csv(tmp_path / "b.csv")
    rows = np.loadtxt(tmp_path / "b.csv", delimiter=",", skiprows=1)
    assert len(rows) == len(half_tower.branches)
    T.return_tail(half_tower).to_csv(tmp_path / "t.csv")
    rows = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
    assert rows[0, 1] == pytest.approx(0.5)
