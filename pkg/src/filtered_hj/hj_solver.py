"""Upwind, high-order and filtered schemes for the factored equation.

The factored unknown ``w = u / (n (x_1 ... x_n)^(1/n))`` solves

    prod_i (w + n x_i w_{x_i}) = f   on (0, 1]^n,

which is discretized with order-``k`` backward differences along each axis.
Every node is solved once, in row-major order, by taking the largest real
root of a degree-``n`` polynomial in the node value.

Internally each node is solved for an increment ``delta = w - ref`` where
``ref`` is the largest backward neighbor.  Stencil sums then only involve
differences of neighbor values, so a constant field is reproduced exactly
in floating point instead of seeding the (unstable) high-order recursion
with rounding noise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence, Union

import numba
import numpy as np

from .fd_coeffs import backward_weights
from .grid import GridFunction, GridSpec, coordinates, in_filter_band, read_extended

log = logging.getLogger(__name__)

BOUNDARY_MODES = ("truncate", "zero")

Density = Union[GridFunction, np.ndarray, Callable[..., np.ndarray]]


class SolverError(RuntimeError):
    """The per-node root solve did not converge."""

    def __init__(self, node: tuple[int, ...], residual: float):
        super().__init__(f"root solve failed at node {node} (residual {residual:.3e})")
        self.node = node
        self.residual = residual


class InvariantViolation(RuntimeError):
    def __init__(self, message: str, node: tuple[int, ...] | None = None):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme selection and solver tolerances.

    ``boundary`` controls backward stencils that would reach past ``x_i = 0``:
    ``"truncate"`` lowers the order to the number of available points,
    ``"zero"`` keeps order ``k`` and reads zeros outside the cube.  Filtered
    runs are unaffected because the order-``k`` scheme is only accepted where
    the full stencil fits.
    """

    order: int = 1
    filtered: bool = False
    threshold_exponent: float = 0.5
    root_tol: float = 1e-12
    max_newton_iters: int = 100
    boundary: str = "truncate"

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.root_tol <= 0 or self.max_newton_iters < 1:
            raise ValueError("root_tol and max_newton_iters must be positive")
        if self.boundary not in BOUNDARY_MODES:
            raise ValueError(f"boundary must be one of {BOUNDARY_MODES}")

    def threshold(self, h: float) -> float:
        return h ** self.threshold_exponent

    @property
    def label(self) -> str:
        return f"{'FS' if self.filtered else 'S'}{self.order}"


@dataclass(frozen=True)
class NodeFactor:
    """One axis factor ``slope * w + intercept`` of the discrete operator."""

    slope: float
    intercept: float

    def __call__(self, w: float) -> float:
        return self.slope * w + self.intercept

    @property
    def root(self) -> float:
        return -self.intercept / self.slope


@dataclass
class SolveReport:
    w: GridFunction
    u: GridFunction
    high_order_used: np.ndarray
    usage_fraction: float
    max_filter_residual: float
    config: SchemeConfig

    @property
    def spec(self) -> GridSpec:
        return self.w.spec


@lru_cache(maxsize=None)
def weight_table(k: int) -> np.ndarray:
    """Row ``r`` holds the order-``r`` backward weights ``d_0..d_r`` (row 0 is zero)."""
    W = np.zeros((k + 1, k + 1))
    for r in range(1, k + 1):
        W[r, : r + 1] = backward_weights(r).float_weights()
    W.setflags(write=False)
    return W


# {{{ compiled kernels


@numba.njit(cache=True)
def _largest_root(A, B, f, tol, maxit):
    """Largest real root of prod_i (A_i x + B_i) = f, assuming A_i >= 1, f >= 0.

    Returns ``(x, residual, converged)``.  Non-finite input propagates as NaN.
    """
    n = A.shape[0]
    for i in range(n):
        if not (np.isfinite(A[i]) and np.isfinite(B[i])):
            return np.nan, np.nan, True
    if not np.isfinite(f):
        return np.nan, np.nan, True
    if n == 1:
        return (f - B[0]) / A[0], 0.0, True
    if n == 2:
        a = A[0] * A[1]
        b = A[0] * B[1] + A[1] * B[0]
        c = B[0] * B[1] - f
        diff = A[0] * B[1] - A[1] * B[0]
        sq = np.sqrt(diff * diff + 4.0 * a * f)
        if b >= 0.0:
            den = b + sq
            x = 0.0 if den == 0.0 else -2.0 * c / den
        else:
            x = (sq - b) / (2.0 * a)
        return x, 0.0, True

    lo = -B[0] / A[0]
    prod_a = A[0]
    for i in range(1, n):
        r = -B[i] / A[i]
        if r > lo:
            lo = r
        prod_a *= A[i]
    hi = lo + (f / prod_a) ** (1.0 / n)
    x = min(max(0.0, lo), hi)
    scale = tol * (1.0 + f)
    res = np.inf
    for _ in range(maxit):
        p = 1.0
        dp = 0.0
        for i in range(n):
            v = A[i] * x + B[i]
            dp = dp * v + p * A[i]
            p *= v
        res = p - f
        if abs(res) <= scale:
            return x, res, True
        if res < 0.0:
            lo = x
        else:
            hi = x
        if hi - lo <= 4.0 * 2.220446049250313e-16 * max(abs(lo), abs(hi), 1e-300):
            return x, res, True
        xn = x - res / dp if dp > 0.0 else 0.5 * (lo + hi)
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        x = xn
    return x, res, False


@numba.njit(cache=True)
def _sweep_kernel(fv, dim, N, order, filtered, truncate, thr, tol, maxit, W, w, used, resid):
    strides = np.empty(dim, np.int64)
    s = 1
    for ax in range(dim - 1, -1, -1):
        strides[ax] = s
        s *= N + 1
    total = s
    j = np.zeros(dim, np.int64)
    A1 = np.empty(dim)
    B1 = np.empty(dim)
    Ak = np.empty(dim)
    Bk = np.empty(dim)

    for idx in range(total):
        fval = fv[idx]
        ref = 0.0
        have = False
        for ax in range(dim):
            if j[ax] > 0:
                v = w[idx - strides[ax]]
                if not have or v > ref:
                    ref = v
                    have = True

        for ax in range(dim):
            sc = float(dim * j[ax])  # n x_i / h
            A1[ax] = 1.0 + sc
            if j[ax] > 0:
                B1[ax] = ref - sc * (w[idx - strides[ax]] - ref)
            else:
                B1[ax] = ref
        d1, r1, ok = _largest_root(A1, B1, fval, tol, maxit)
        if not ok:
            return idx, r1

        dk = d1
        if order > 1:
            for ax in range(dim):
                ke = min(order, j[ax]) if truncate else order
                sc = float(dim * j[ax])
                acc = 0.0
                for m in range(1, ke + 1):
                    if j[ax] - m >= 0:
                        acc += W[ke, m] * (w[idx - m * strides[ax]] - ref)
                    else:
                        acc -= W[ke, m] * ref
                Ak[ax] = 1.0 + sc * W[ke, 0]
                Bk[ax] = ref + sc * acc
            dk, rk, ok = _largest_root(Ak, Bk, fval, tol, maxit)
            if not ok:
                return idx, rk

        if not filtered:
            delta = dk
            used[idx] = True
        else:
            take = np.isfinite(dk)
            for ax in range(dim):
                if j[ax] < order:
                    take = False
            if take:
                p = 1.0
                for ax in range(dim):
                    v = A1[ax] * dk + B1[ax]
                    if v < 0.0:
                        take = False
                    p *= v
                if take and abs(p - fval) > thr:
                    take = False
            delta = dk if take else d1
            used[idx] = take

        w[idx] = ref + delta
        p = 1.0
        neg = False
        for ax in range(dim):
            v = A1[ax] * delta + B1[ax]
            if v < 0.0:
                neg = True
            p *= v
        resid[idx] = np.inf if neg else abs(p - fval)

        ax = dim - 1
        while ax >= 0:
            j[ax] += 1
            if j[ax] <= N:
                break
            j[ax] = 0
            ax -= 1
    return -1, 0.0


# }}}


# {{{ pointwise operators


def _effective_order(j: int, k: int, boundary: str) -> int:
    return min(k, j) if boundary == "truncate" else k


def factor(w: GridFunction, j: Sequence[int], axis: int, k: int,
           boundary: str = "truncate") -> NodeFactor:
    """Axis factor ``w(x) + n x_i D_i^{k,-} w(x)`` as a linear function of ``w(x)``.

    The slope is ``1 + n x_i d_0 / h`` and the intercept collects the
    backward neighbors.  ``boundary="zero"`` reads zeros outside the cube.
    """
    spec = w.spec
    n = spec.dim
    ji = j[axis]
    sc = n * ji  # n x_i / h, exact for grid nodes
    ke = _effective_order(ji, k, boundary)
    if sc == 0 or ke == 0:
        return NodeFactor(1.0, 0.0)
    W = weight_table(ke)[ke]
    acc = 0.0
    jj = list(j)
    for m in range(1, ke + 1):
        jj[axis] = ji - m
        acc += W[m] * read_extended(w, jj)
    return NodeFactor(1.0 + sc * W[0], sc * acc)


def _factor_value(w: GridFunction, j: Sequence[int], axis: int, k: int, boundary: str) -> float:
    # difference form sum_m d_m (w_m - w): constants reproduce exactly since sum d = 0
    spec = w.spec
    ji = j[axis]
    sc = spec.dim * ji
    v = read_extended(w, j)
    ke = _effective_order(ji, k, boundary)
    if sc == 0 or ke == 0:
        return v
    W = weight_table(ke)[ke]
    acc = 0.0
    jj = list(j)
    for m in range(1, ke + 1):
        jj[axis] = ji - m
        acc += W[m] * (read_extended(w, jj) - v)
    return v + sc * acc


def _operator(w: GridFunction, j: Sequence[int], k: int, boundary: str) -> tuple[float, bool]:
    p = 1.0
    nonneg = True
    for axis in range(w.spec.dim):
        v = _factor_value(w, j, axis, k, boundary)
        nonneg &= v >= 0.0
        p *= v
    return p, nonneg


def eval_F1(w: GridFunction, j: Sequence[int]) -> float:
    """First-order monotone operator; ``-inf`` when some factor is negative."""
    p, nonneg = _operator(w, j, 1, "truncate")
    return p if nonneg else -np.inf


def eval_Fk(w: GridFunction, j: Sequence[int], k: int, boundary: str = "truncate") -> float:
    """Order-``k`` operator, no sign clamp."""
    return _operator(w, j, k, boundary)[0]


def solve_node(factors: Sequence[NodeFactor], f_val: float,
               cfg: SchemeConfig | None = None, node: tuple[int, ...] = ()) -> float:
    """Largest root of ``prod(factor(w)) = f_val``.

    The root lies in ``[r_max, r_max + (f / prod A)^(1/n)]`` with ``r_max`` the
    largest factor root.  Quadratics are solved in closed form; higher degrees
    use Newton's method safeguarded by bisection on that bracket.
    """
    cfg = cfg or SchemeConfig()
    if f_val < 0:
        raise ValueError("f_val must be non-negative")
    A = np.array([fac.slope for fac in factors], dtype=float)
    B = np.array([fac.intercept for fac in factors], dtype=float)
    if np.any(A < 1.0):
        raise ValueError("factor slopes must be >= 1")
    x, res, ok = _largest_root(A, B, float(f_val), cfg.root_tol, cfg.max_newton_iters)
    if not ok:
        raise SolverError(node, res)
    return float(x)


# }}}


def _density_values(f: Density, spec: GridSpec) -> np.ndarray:
    if isinstance(f, GridFunction):
        if f.spec != spec:
            raise ValueError("density grid does not match spec")
        vals = f.values
    elif callable(f):
        vals = np.broadcast_to(np.asarray(f(*spec.mesh()), dtype=float), spec.shape)
    else:
        vals = np.asarray(f, dtype=float)
        if vals.shape != spec.shape:
            raise ValueError(f"density has shape {vals.shape}, expected {spec.shape}")
    if not np.all(np.isfinite(vals)):
        raise ValueError("density must be finite")
    if np.any(vals < 0):
        raise ValueError("density must be non-negative")
    return np.ascontiguousarray(vals, dtype=float)


def sweep_solve(f: Density, spec: GridSpec, cfg: SchemeConfig) -> SolveReport:
    """Solve the (optionally filtered) scheme in a single row-major pass.

    With ``cfg.filtered`` both the first-order and order-``k`` equations are
    solved at each node; the order-``k`` root is kept when the node lies in
    ``[k h, 1]^n`` and the first-order operator evaluated there is within
    ``h**threshold_exponent`` of ``f``.
    """
    fv = _density_values(f, spec).ravel()
    w = np.zeros(spec.size)
    used = np.zeros(spec.size, dtype=np.bool_)
    resid = np.zeros(spec.size)
    W = weight_table(cfg.order)
    bad, res = _sweep_kernel(
        fv, spec.dim, spec.intervals, cfg.order, cfg.filtered, cfg.boundary == "truncate",
        cfg.threshold(spec.h), cfg.root_tol, cfg.max_newton_iters, W, w, used, resid)
    if bad >= 0:
        raise SolverError(tuple(int(i) for i in np.unravel_index(bad, spec.shape)), res)
    wg = GridFunction(spec, w.reshape(spec.shape))
    max_res = float(np.max(resid)) if not np.isnan(resid).any() else np.inf
    return SolveReport(
        w=wg,
        u=back_transform(wg),
        high_order_used=used.reshape(spec.shape),
        usage_fraction=float(used.mean()),
        max_filter_residual=max_res,
        config=cfg,
    )


def back_transform(w: GridFunction) -> GridFunction:
    """``u = n (x_1 ... x_n)^(1/n) w``; zero on the faces ``x_i = 0``."""
    spec = w.spec
    prod = np.ones(spec.shape)
    for x in spec.mesh():
        prod = prod * x
    scale = spec.dim * prod ** (1.0 / spec.dim)
    with np.errstate(invalid="ignore"):
        u = np.where(scale > 0, scale * w.values, 0.0)
    return GridFunction(spec, u)


# {{{ structural checks


def first_order_residual(w: GridFunction, f: Density) -> np.ndarray:
    """``|F_1(x, w) - f(x)|`` at every node, ``inf`` where a factor is negative.

    Vectorized over the whole grid, independently of the sweep.
    """
    spec = w.spec
    fv = _density_values(f, spec)
    vals = w.values
    n = spec.dim
    prod = np.ones(spec.shape)
    neg = np.zeros(spec.shape, dtype=bool)
    jidx = np.arange(spec.intervals + 1)
    for axis in range(n):
        back = np.zeros_like(vals)
        dst = [slice(None)] * n
        src = [slice(None)] * n
        dst[axis] = slice(1, None)
        src[axis] = slice(None, -1)
        back[tuple(dst)] = vals[tuple(src)]
        shape = [1] * n
        shape[axis] = -1
        sc = (n * jidx).reshape(shape)
        fac = vals + sc * (vals - back)
        neg |= fac < 0
        prod = prod * fac
    with np.errstate(invalid="ignore"):
        res = np.abs(prod - fv)
    res[neg] = np.inf
    res[np.isnan(res)] = np.inf
    return res


def filter_residual_check(report: SolveReport, f: Density, spec: GridSpec | None = None,
                          cfg: SchemeConfig | None = None) -> float:
    """Max of ``|F_1(x, w_h) - f|``; raise :class:`InvariantViolation` above the threshold.

    The threshold carries the root-solve slack ``root_tol * (1 + max f)`` so
    that first-order fallback nodes never count as violations.
    """
    spec = spec or report.spec
    cfg = cfg or report.config
    res = first_order_residual(report.w, f)
    worst = float(res.max())
    fmax = float(_density_values(f, spec).max())
    thr = cfg.threshold(spec.h) + cfg.root_tol * (1.0 + fmax)
    if worst > thr:
        node = tuple(int(i) for i in np.unravel_index(int(np.argmax(res)), spec.shape))
        raise InvariantViolation(
            f"first-order residual {worst:.3e} exceeds {thr:.3e} at node {node} "
            f"(x = {coordinates(spec, node)})", node)
    return worst


def stability_bound(f_max: float, h: float, dim: int, cfg: SchemeConfig) -> float:
    return (f_max + cfg.threshold(h)) ** (1.0 / dim)


def stability_check(report: SolveReport, f: Density) -> bool:
    """Check ``0 <= w_h <= (max f + h^theta)^(1/n)`` at every node.

    Both sides allow a slack of ``root_tol * (1 + max f)`` for rounding.
    """
    spec = report.spec
    cfg = report.config
    fv = _density_values(f, spec)
    fmax = float(fv.max())
    upper = stability_bound(fmax, spec.h, spec.dim, cfg)
    slack = cfg.root_tol * (1.0 + fmax)
    vals = report.w.values
    bad = ~((vals >= -slack) & (vals <= upper + slack))
    if bad.any():
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        log.warning("stability bound violated at node %s: w=%r, bound=[0, %r]",
                    node, float(vals[node]), upper)
        return False
    return True


def high_order_band(spec: GridSpec, k: int) -> np.ndarray:
    """Boolean mask of nodes in ``[k h, 1]^n``."""
    mask = np.ones(spec.shape, dtype=bool)
    for axis in range(spec.dim):
        shape = [1] * spec.dim
        shape[axis] = -1
        mask &= (np.arange(spec.intervals + 1) >= k).reshape(shape)
    return mask


__all__ = [
    "SchemeConfig", "NodeFactor", "SolveReport", "SolverError", "InvariantViolation",
    "factor", "eval_F1", "eval_Fk", "solve_node", "sweep_solve", "back_transform",
    "filter_residual_check", "stability_check", "first_order_residual", "weight_table",
    "in_filter_band", "high_order_band",
]
