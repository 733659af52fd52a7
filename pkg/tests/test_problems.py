import math

import numpy as np
import pytest

from filtered_hj.problems import (
    get_problem,
    lipschitz_spot_check,
    problem_const,
    problem_f1,
    problem_f2,
    sample_points,
    verify_residual,
)


def test_f1_value_at_corner():
    u = problem_f1(20).exact_u
    assert u(1.0, 1.0) == pytest.approx((2 * math.sin(20) ** 2 + 40) / 21, rel=1e-14)
    assert u(0.0, 0.3) == 0.0


def test_f2_value_at_corner():
    p = problem_f2(10)
    assert p.f(1.0, 1.0) == pytest.approx(476 / 144, rel=1e-14)
    assert p.exact_u(0.0, 0.7) == 0.0
    assert p.exact_u(1.0, 1.0) == pytest.approx(2 / 12 * 12)


def test_f2_hand_product_below_diagonal():
    C = 10.0
    x1, x2 = 0.2, 0.6
    w2 = C * x2 + x1 + x2
    expected = (w2 + 2 * x1) * (w2 + 2 * (1 + C) * x2) / (C + 2) ** 2
    assert problem_f2(C).f(x1, x2) == pytest.approx(expected, rel=1e-14)


def test_const_examples():
    x1, x2 = np.array([0.25, 1.0]), np.array([0.64, 0.5])
    assert np.allclose(problem_const(1).exact_u(x1, x2), 2 * np.sqrt(x1 * x2))
    assert np.all(problem_const(0).exact_u(x1, x2) == 0)
    assert np.allclose(problem_const(4).exact_u(x1, x2), 4 * np.sqrt(x1 * x2))
    p3 = problem_const(8, dim=3)
    assert p3.exact_u(1.0, 1.0, 1.0) == pytest.approx(6.0)


@pytest.mark.parametrize("bad", [lambda: problem_f1(0), lambda: problem_f2(-1),
                                 lambda: problem_const(-1), lambda: get_problem("f3")])
def test_rejects_bad_parameters(bad):
    with pytest.raises(ValueError):
        bad()


@pytest.mark.parametrize("prob", [problem_f1(20), problem_f2(10)], ids=["f1", "f2"])
def test_density_nonnegative(prob):
    pts = np.random.default_rng(7).uniform(0, 1, size=(100_000, 2))
    assert np.all(prob.f(*pts.T) >= 0)


def test_f2_symmetric():
    p = problem_f2(10)
    pts = np.random.default_rng(2).uniform(0, 1, size=(1000, 2))
    a, b = pts.T
    assert np.allclose(p.f(a, b), p.f(b, a), rtol=1e-14)
    assert np.allclose(p.exact_u(a, b), p.exact_u(b, a), rtol=1e-14)


@pytest.mark.parametrize("prob, tol", [(problem_f1(20), 1e-6), (problem_f2(10), 1e-6),
                                       (problem_const(1.0), 1e-8)], ids=["f1", "f2", "const"])
def test_residual_passes(prob, tol):
    chk = verify_residual(prob, tol=tol)
    assert chk.passed, chk.max_residual


def test_printed_f2_fails_by_144():
    printed = problem_f2(10, printed_normalization=True)
    pts = sample_points(printed, 200, seed=1)
    chk = verify_residual(printed, pts)
    assert not chk.passed
    # grad product scales by (C+2)^2, so residual = f ((C+2)^2 - 1)
    fv = printed.f(*pts.T)
    ratio = chk.max_residual / np.max(fv * 143)
    assert ratio == pytest.approx(1.0, rel=1e-3)


def test_sample_points_respect_margins():
    pts = sample_points(problem_f2(), 500, seed=4)
    assert pts.shape == (500, 2)
    assert np.all(pts >= 0.05)
    assert np.all(np.abs(pts[:, 0] - pts[:, 1]) > 0.05)
    assert np.array_equal(pts, sample_points(problem_f2(), 500, seed=4))


def test_residual_needs_exact_solution():
    from filtered_hj.problems import TestProblem

    with pytest.raises(ValueError):
        verify_residual(TestProblem("bare", problem_const().f))


def test_lipschitz_estimates():
    assert lipschitz_spot_check(problem_const(1.0)).w_constant == pytest.approx(0.0, abs=1e-9)
    for prob in (problem_f1(), problem_f2()):
        small = lipschitz_spot_check(prob, pairs=2000, seed=0)
        large = lipschitz_spot_check(prob, pairs=20000, seed=1)
        assert math.isfinite(small.w_constant) and math.isfinite(large.w_constant)
        # stable as the sample grows
        assert large.w_constant <= 2 * small.w_constant + 1.0
