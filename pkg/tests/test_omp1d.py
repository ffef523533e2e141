import numpy as np
import pytest

from planefit.criteria import preset
from planefit.geometry import Block, Dataset, Hyperplane, LTau, Polytope, Vertical, residual_vector
from planefit.omp1d import candidate_set, gcod, solve_omp


def grid_minimum(values, lam, p, points=100_000):
    lo, hi = float(np.min(values)), float(np.max(values))
    if lo == hi:
        return lo, float(np.dot(lam, np.zeros(len(values))))
    grid = np.linspace(lo, hi, points)
    res = np.abs(grid[:, None] - np.asarray(values)[None, :])
    res.sort(axis=1)
    objs = res**p @ lam if p != 1 else res @ lam
    k = int(np.argmin(objs))
    return float(grid[k]), float(objs[k])


def test_candidate_set_two_values():
    got = candidate_set(np.array([0.0, 2.0]), np.ones(2), 1.0)
    assert got.tolist() == [0.0, 1.0, 2.0]


def test_candidate_set_contains_mean_for_sos():
    vals = np.array([0.0, 1.0, 4.0])
    cands = candidate_set(vals, np.ones(3), 2.0)
    assert np.min(np.abs(cands - 5.0 / 3.0)) < 1e-9


def test_candidate_count_order():
    vals = np.arange(7, dtype=float)
    cands = candidate_set(vals, np.ones(7), 1.0)
    # data values plus interior pairwise midpoints, deduplicated
    assert len(cands) <= 7 + 21
    assert len(cands) >= 7


def test_median_and_mean_special_cases(rng):
    for _ in range(20):
        vals = rng.normal(size=9) * 5.0
        lam = np.ones(9)
        med = solve_omp(vals, lam, 1.0)
        assert med.value == pytest.approx(np.abs(vals - np.median(vals)).sum(), abs=1e-12)
        mean = solve_omp(vals, lam, 2.0)
        assert mean.beta0 == pytest.approx(np.mean(vals), abs=1e-12)
        assert mean.value == pytest.approx(((vals - vals.mean()) ** 2).sum(), abs=1e-10)


def test_one_center_is_midrange(rng):
    for _ in range(10):
        vals = rng.normal(size=10) * 3.0
        lam = np.zeros(10)
        lam[-1] = 1.0
        got = solve_omp(vals, lam, 1.0)
        want = (vals.min() + vals.max()) / 2.0
        assert got.beta0 == pytest.approx(want, abs=1e-4)
        _, grid_val = grid_minimum(vals, lam, 1.0)
        assert got.value <= grid_val + 1e-9


def test_omp_beats_grid_random_instances(rng):
    for _ in range(25):
        n = int(rng.integers(3, 12))
        vals = rng.normal(size=n) * 4.0
        lam = np.abs(rng.normal(size=n))
        lam[int(rng.integers(0, n))] += 1.0
        p = float(rng.choice([1.0, 1.5, 2.0]))
        got = solve_omp(vals, lam, p)
        _, grid_val = grid_minimum(vals, lam, p)
        assert got.value <= grid_val + 1e-6


def test_omp_tie_breaks_to_smallest():
    # symmetric pair: both endpoints optimal for the max criterion midpoint...
    vals = np.array([0.0, 1.0])
    lam = np.array([1.0, 0.0])  # smallest residual only: any data point works
    got = solve_omp(vals, lam, 1.0)
    assert got.beta0 == 0.0


# gcod -----------------------------------------------------------------------


def test_gcod_perfect_fit_is_one(stars):
    crit = preset("SUM", stars.n)
    assert gcod(0.0, stars, crit, LTau(1)) == pytest.approx(1.0)


def test_gcod_constant_model_is_zero(stars):
    crit = preset("SUM", stars.n)
    base = solve_omp(stars.matrix[:, -1], crit.lam, 1.0)
    assert gcod(base.value, stars, crit, LTau(1)) == pytest.approx(0.0, abs=1e-12)


def test_gcod_reference_line_sum_l1(stars):
    # evaluating y = 7x - 25.81 under the l1 distance criterion
    crit = preset("SUM", stars.n)
    plane = Hyperplane.from_slope_intercept(7.0, -25.81)
    phi = crit.lam @ np.sort(residual_vector(plane, stars, LTau(1)))
    assert gcod(phi, stars, crit, LTau(1)) == pytest.approx(0.6505853, abs=1e-7)


def test_gcod_dilation_invariance(stars):
    hexa = Polytope.from_vertices([(2, 0), (2, 2), (-1, 2), (-2, 0), (-2, -2), (1, -2)])
    small = Polytope.from_vertices(np.asarray(hexa.vertices) / 2.0)
    crit = preset("SUM", stars.n)
    plane = Hyperplane.from_slope_intercept(7.0, -25.81)
    phi_big = crit.lam @ np.sort(residual_vector(plane, stars, Block(hexa)))
    phi_small = crit.lam @ np.sort(residual_vector(plane, stars, Block(small)))
    g_big = gcod(phi_big, stars, crit, Block(hexa))
    g_small = gcod(phi_small, stars, crit, Block(small))
    assert g_big == pytest.approx(g_small, abs=1e-12)


def test_gcod_degenerate_reference():
    flat = Dataset.from_observations(np.column_stack([np.arange(4.0), np.ones(4)]))
    crit = preset("SUM", 4)
    assert gcod(0.0, flat, crit, Vertical()) == 1.0
    with pytest.raises(ValueError):
        gcod(1.0, flat, crit, Vertical())
