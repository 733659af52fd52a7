import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from filtered_hj.grid import GridFunction, GridSpec
from filtered_hj.hj_solver import (
    InvariantViolation,
    NodeFactor,
    SchemeConfig,
    SolverError,
    back_transform,
    eval_F1,
    eval_Fk,
    factor,
    filter_residual_check,
    first_order_residual,
    high_order_band,
    solve_node,
    stability_check,
    sweep_solve,
    weight_table,
)
from filtered_hj.problems import problem_const, problem_f1, problem_f2

ORDERS = (1, 2, 3, 5, 8, 13)


def const_grid(N, c, dim=2):
    spec = GridSpec(dim, N)
    return GridFunction(spec, np.full(spec.shape, float(c)))


# {{{ config


def test_config_defaults():
    cfg = SchemeConfig()
    assert (cfg.order, cfg.filtered, cfg.threshold_exponent) == (1, False, 0.5)
    assert cfg.root_tol == 1e-12 and cfg.max_newton_iters == 100
    assert cfg.threshold(0.25) == 0.5
    assert SchemeConfig(order=3, filtered=True).label == "FS3"


@pytest.mark.parametrize("kw", [{"order": 0}, {"root_tol": 0.0}, {"max_newton_iters": 0},
                                {"boundary": "mirror"}])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        SchemeConfig(**kw)


def test_weight_table_rows_sum_to_zero():
    W = weight_table(13)
    assert np.allclose(W[1:].sum(axis=1), 0.0, atol=1e-9)
    assert W[2, :3].tolist() == [1.5, -2.0, 0.5]


# }}}


# {{{ factors and operators


def test_factor_on_face():
    w = const_grid(8, 0.7)
    assert factor(w, (0, 5), 0, 3) == NodeFactor(1.0, 0.0)


def test_factor_first_order_example():
    spec = GridSpec(2, 8)
    w = GridFunction.zeros(spec)
    w.values[0, 3] = 1.0
    fac = factor(w, (1, 3), 0, 1)
    assert (fac.slope, fac.intercept) == (3.0, -2.0)
    assert fac(1.0) == 1.0


@pytest.mark.parametrize("k", ORDERS)
def test_factor_constant_field(k):
    w = const_grid(32, 0.37)
    for j in [(20, 20), (3, 17), (31, 1)]:
        for axis in range(2):
            fac = factor(w, j, axis, k)
            assert fac.slope >= 1.0
            assert fac(0.37) == pytest.approx(0.37, abs=1e-12)


def test_factor_zero_boundary_reads_zero():
    w = const_grid(16, 1.0)
    trunc = factor(w, (2, 5), 0, 3, "truncate")
    zero = factor(w, (2, 5), 0, 3, "zero")
    assert trunc(1.0) == pytest.approx(1.0, abs=1e-12)
    # the missing sample at j=-1 reads 0, so the constant is no longer reproduced
    assert zero(1.0) != pytest.approx(1.0)


def test_eval_F1_examples():
    w = const_grid(8, 1.0)
    assert eval_F1(w, (3, 4)) == 1.0
    w = const_grid(8, 1.5)
    assert eval_F1(w, (0, 0)) == 2.25
    w.values[2, 3] = 5.0
    assert eval_F1(w, (3, 3)) == -np.inf


@pytest.mark.parametrize("k", ORDERS)
def test_eval_Fk_constant(k):
    assert eval_Fk(const_grid(32, 1.0), (20, 20), k) == pytest.approx(1.0, abs=1e-12)
    assert eval_Fk(const_grid(32, 2.0), (20, 20), k) == pytest.approx(4.0, abs=1e-11)


def test_eval_Fk_matches_F1_for_k1():
    rng = np.random.default_rng(3)
    spec = GridSpec(2, 10)
    w = GridFunction(spec, 1.0 + 0.01 * rng.random(spec.shape))
    for j in [(4, 4), (1, 9), (7, 2)]:
        if eval_F1(w, j) != -np.inf:
            assert eval_Fk(w, j, 1) == eval_F1(w, j)


# }}}


# {{{ node solve


def test_solve_node_quadratic_example():
    assert solve_node([NodeFactor(3.0, -2.0), NodeFactor(1.0, 0.0)], 1.0) == pytest.approx(1.0)


@pytest.mark.parametrize("n, c", [(1, 5.0), (2, 4.0), (3, 8.0), (4, 81.0)])
def test_solve_node_origin(n, c):
    x = solve_node([NodeFactor(1.0, 0.0)] * n, c)
    assert x == pytest.approx(c ** (1.0 / n), rel=1e-12)


def test_solve_node_zero_density():
    facs = [NodeFactor(2.0, -1.0), NodeFactor(3.0, -3.0), NodeFactor(1.0, 0.5)]
    assert solve_node(facs, 0.0) == pytest.approx(1.0)


def test_solve_node_cubic():
    # (w - 1)(w - 2)(w - 3) = 6 has largest root w = 4 ... check: 3*2*1 = 6
    facs = [NodeFactor(1.0, -1.0), NodeFactor(1.0, -2.0), NodeFactor(1.0, -3.0)]
    assert solve_node(facs, 6.0) == pytest.approx(4.0, rel=1e-12)


def test_solve_node_rejects():
    with pytest.raises(ValueError):
        solve_node([NodeFactor(1.0, 0.0)], -1.0)
    with pytest.raises(ValueError):
        solve_node([NodeFactor(0.5, 0.0)], 1.0)


def test_solve_node_iteration_cap():
    facs = [NodeFactor(1.0, -0.3), NodeFactor(1.7, 0.2), NodeFactor(5.0, -1.0)]
    with pytest.raises(SolverError) as err:
        solve_node(facs, 10.0, SchemeConfig(max_newton_iters=1), node=(4, 4, 4))
    assert err.value.node == (4, 4, 4)


factor_st = st.builds(NodeFactor, st.floats(1.0, 200.0), st.floats(-100.0, 100.0))


@settings(max_examples=300, deadline=None)
@given(st.lists(factor_st, min_size=1, max_size=4), st.floats(0.0, 50.0))
def test_solve_node_is_largest_root(facs, f_val):
    x = solve_node(facs, f_val)
    A = np.array([fc.slope for fc in facs])
    B = np.array([fc.intercept for fc in facs])
    r_max = float(np.max(-B / A))
    # bracket from the existence argument
    scale = 1.0 + abs(r_max)
    assert r_max - 1e-12 * scale <= x <= r_max + (f_val / A.prod()) ** (1 / len(facs)) + 1e-9 * scale
    # P is increasing on [r_max, inf), so a root there is the largest one
    above = x + 1e-6 * scale
    assert np.prod(A * above + B) > f_val
    if f_val >= 1.0:
        # simple root: compare with companion-matrix roots
        poly = np.poly1d([1.0])
        for a, b in zip(A, B):
            poly = poly * np.poly1d([a, b])
        roots = np.roots((poly - f_val).coeffs)
        real = [r.real for r in roots if abs(r.imag) <= 1e-6 * (1 + abs(r))]
        assert x == pytest.approx(max(real), rel=1e-6, abs=1e-6)
    P = np.prod(A * x + B)
    assert abs(P - f_val) <= 1e-9 * (1 + f_val) * max(1.0, float(np.prod(np.abs(A * x) + np.abs(B))))


# }}}


# {{{ sweep


@pytest.mark.parametrize("k", ORDERS)
@pytest.mark.parametrize("filtered", [False, True])
def test_constant_one_exact(k, filtered):
    spec = GridSpec(2, 32)
    rep = sweep_solve(problem_const(1.0).f, spec, SchemeConfig(order=k, filtered=filtered))
    assert np.max(np.abs(rep.w.values - 1.0)) <= 1e-12
    x1, x2 = spec.mesh()
    assert np.allclose(rep.u.values, 2 * np.sqrt(x1 * x2), atol=1e-12)


@pytest.mark.parametrize("c", [0.0, 4.0, 0.25, 2.0])
@pytest.mark.parametrize("k", [1, 2, 5])
@pytest.mark.parametrize("filtered", [False, True])
def test_constant_consistency(c, k, filtered):
    spec = GridSpec(2, 24)
    rep = sweep_solve(np.full(spec.shape, c), spec, SchemeConfig(order=k, filtered=filtered))
    assert np.max(np.abs(rep.w.values - np.sqrt(c))) <= 1e-11


@pytest.mark.parametrize("dim, N", [(1, 50), (3, 10)])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_constant_other_dims(dim, N, k):
    spec = GridSpec(dim, N)
    rep = sweep_solve(problem_const(1.0, dim).f, spec, SchemeConfig(order=k, filtered=True))
    assert np.max(np.abs(rep.w.values - 1.0)) <= 1e-11


def test_origin_value():
    spec = GridSpec(2, 16)
    rep = sweep_solve(problem_f1().f, spec, SchemeConfig(order=2, filtered=True))
    assert rep.w.values[0, 0] == pytest.approx(np.sqrt(problem_f1().f(0.0, 0.0)), rel=1e-13)


def test_monotone_scheme_exact_per_node():
    prob = problem_f1()
    spec = GridSpec(2, 64)
    rep = sweep_solve(prob.f, spec, SchemeConfig(order=1))
    fv = prob.f(*spec.mesh())
    res = first_order_residual(rep.w, prob.f)
    assert np.all(res <= 1e-12 * (1 + fv))


@pytest.mark.parametrize("prob", [problem_f1(), problem_f2()], ids=["f1", "f2"])
@pytest.mark.parametrize("k", ORDERS)
def test_filtered_structural(prob, k):
    spec = GridSpec(2, 64)
    rep = sweep_solve(prob.f, spec, SchemeConfig(order=k, filtered=True))
    worst = filter_residual_check(rep, prob.f)
    assert worst <= np.sqrt(spec.h)
    assert rep.max_filter_residual == pytest.approx(worst, abs=1e-12)
    assert stability_check(rep, prob.f)
    # the high-order root is only accepted inside the band
    assert not np.any(rep.high_order_used & ~high_order_band(spec, k))
    assert rep.usage_fraction == pytest.approx(rep.high_order_used.mean())
    assert 0.0 <= rep.usage_fraction <= 1.0


def test_filter_residual_violation_raises():
    prob = problem_f1()
    spec = GridSpec(2, 32)
    rep = sweep_solve(prob.f, spec, SchemeConfig(order=2, filtered=True))
    rep.w.values[10, 11] += 1.0
    with pytest.raises(InvariantViolation) as err:
        filter_residual_check(rep, prob.f)
    assert err.value.node in {(10, 11), (10, 12), (11, 11)}


def test_stability_detects_corruption(caplog):
    spec = GridSpec(2, 32)
    rep = sweep_solve(problem_const(1.0).f, spec, SchemeConfig(order=1))
    assert stability_check(rep, problem_const(1.0).f)
    rep.w.values[7, 9] = 2.0
    with caplog.at_level(logging.WARNING):
        assert not stability_check(rep, problem_const(1.0).f)
    assert "(7, 9)" in caplog.text
    rep.w.values[7, 9] = -0.1
    assert not stability_check(rep, problem_const(1.0).f)


@pytest.mark.parametrize("filtered", [False, True])
def test_determinism(filtered):
    prob = problem_f2()
    spec = GridSpec(2, 96)
    cfg = SchemeConfig(order=3, filtered=filtered)
    a = sweep_solve(prob.f, spec, cfg)
    b = sweep_solve(prob.f, spec, cfg)
    assert a.w.values.tobytes() == b.w.values.tobytes()
    assert np.array_equal(a.high_order_used, b.high_order_used)


def test_density_validation():
    spec = GridSpec(2, 4)
    with pytest.raises(ValueError):
        sweep_solve(np.full(spec.shape, np.nan), spec, SchemeConfig())
    with pytest.raises(ValueError):
        sweep_solve(np.full(spec.shape, -1.0), spec, SchemeConfig())
    with pytest.raises(ValueError):
        sweep_solve(np.ones((3, 3)), spec, SchemeConfig())


def test_unfiltered_high_order_unstable():
    prob = problem_f1()
    errs = []
    for N in (32, 64, 128):
        spec = GridSpec(2, N)
        with np.errstate(all="ignore"):
            rep = sweep_solve(prob.f, spec, SchemeConfig(order=5))
            errs.append(np.max(np.abs(rep.u.values - prob.exact_u(*spec.mesh()))))
    assert not np.isfinite(errs[-1]) or errs[-1] > 1e3


def test_zero_extension_breaks_constants():
    spec = GridSpec(2, 16)
    rep = sweep_solve(problem_const(1.0).f, spec, SchemeConfig(order=2, boundary="zero"))
    assert np.max(np.abs(rep.w.values - 1.0)) > 1e-3
    rep = sweep_solve(problem_const(1.0).f, spec,
                      SchemeConfig(order=2, filtered=True, boundary="zero"))
    assert np.max(np.abs(rep.w.values - 1.0)) == 0.0


# }}}


def test_back_transform_examples():
    spec = GridSpec(2, 8)
    x1, x2 = spec.mesh()
    u = back_transform(const_grid(8, 1.0)).values
    assert np.allclose(u, 2 * np.sqrt(x1 * x2))
    assert np.all(u[0, :] == 0) and np.all(u[:, 0] == 0)
    assert np.all(back_transform(const_grid(8, 0.0)).values == 0)
