"""Manufactured right-hand sides with known solutions, plus certification helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .fd_coeffs import centered_weights

Field = Callable[..., np.ndarray]


@dataclass(frozen=True)
class TestProblem:
    """A density ``f`` on the unit cube and, optionally, the exact ``u``.

    Callables take one coordinate array per axis and broadcast.
    """

    __test__ = False  # not a pytest class

    name: str
    f: Field
    exact_u: Optional[Field] = None
    params: dict = field(default_factory=dict)
    smooth: bool = True
    dim: int = 2
    diagonal_kink: bool = False

    def exact_w(self, *xs: np.ndarray) -> np.ndarray:
        """``u / (n (x_1...x_n)^(1/n))``; NaN on the faces where it is a limit."""
        if self.exact_u is None:
            raise ValueError(f"problem {self.name!r} has no exact solution")
        prod = np.ones(np.broadcast(*xs).shape)
        for x in xs:
            prod = prod * x
        scale = self.dim * prod ** (1.0 / self.dim)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(scale > 0, self.exact_u(*xs) / scale, np.nan)


def problem_f1(kparam: float = 20.0) -> TestProblem:
    """Smooth oscillatory problem; the solution is smooth on ``(0, 1]^2``."""
    if kparam <= 0:
        raise ValueError("kparam must be positive")
    k = float(kparam)

    def f(x1, x2):
        s = np.sin(k * x1) ** 2 + np.sin(k * x2) ** 2
        return ((s + 2 * k + 2 * k * x1 * np.sin(2 * k * x1))
                * (s + 2 * k + 2 * k * x2 * np.sin(2 * k * x2)) / (4 * (k + 1) ** 2))

    def u(x1, x2):
        return np.sqrt(x1 * x2) * (np.sin(k * x1) ** 2 + np.sin(k * x2) ** 2 + 2 * k) / (k + 1)

    return TestProblem("f1", f, u, {"kparam": k}, smooth=True)


def problem_f2(C: float = 10.0, *, printed_normalization: bool = False) -> TestProblem:
    """Lipschitz density whose solution has a gradient kink on ``x1 == x2``.

    The solution carries a ``1/(C+2)`` factor so that it matches ``f``.
    ``printed_normalization=True`` drops that factor and gives a pair that
    deliberately fails :func:`verify_residual` by ``(C+2)**2``.
    """
    if C <= 0:
        raise ValueError("C must be positive")
    C = float(C)

    def w2(x1, x2):
        return C * np.maximum(x1, x2) + x1 + x2

    def f(x1, x2):
        lo = np.minimum(x1, x2)
        hi = np.maximum(x1, x2)
        ww = w2(x1, x2)
        return (ww + 2 * (1 + C) * hi) * (ww + 2 * lo) / (C + 2) ** 2

    norm = 1.0 if printed_normalization else 1.0 / (C + 2)

    def u(x1, x2):
        return 2 * norm * np.sqrt(x1 * x2) * w2(x1, x2)

    name = "f2-printed" if printed_normalization else "f2"
    return TestProblem(name, f, u, {"C": C}, smooth=False, diagonal_kink=True)


def problem_const(c: float = 1.0, dim: int = 2) -> TestProblem:
    """``f = c``; the solution is ``n c^(1/n) (x_1 ... x_n)^(1/n)``."""
    if c < 0:
        raise ValueError("c must be non-negative")
    root = c ** (1.0 / dim)

    def f(*xs):
        return np.full(np.broadcast(*xs).shape, float(c))

    def u(*xs):
        prod = np.ones(np.broadcast(*xs).shape)
        for x in xs:
            prod = prod * x
        return dim * root * prod ** (1.0 / dim)

    return TestProblem("const", f, u, {"c": float(c)}, smooth=True, dim=dim)


def get_problem(name: str, *, kparam: float = 20.0, C: float = 10.0, c: float = 1.0,
                dim: int = 2) -> TestProblem:
    if name == "f1":
        return problem_f1(kparam)
    if name == "f2":
        return problem_f2(C)
    if name == "const":
        return problem_const(c, dim)
    raise ValueError(f"unknown problem {name!r} (expected f1, f2 or const)")


# {{{ certification


def sample_points(problem: TestProblem, count: int, seed: int = 0,
                  margin: float = 0.05) -> np.ndarray:
    """Uniform points at least ``margin`` from the faces ``x_i = 0`` (and the kink)."""
    rng = np.random.default_rng(seed)
    out = np.empty((0, problem.dim))
    while len(out) < count:
        pts = rng.uniform(margin, 1.0, size=(2 * count, problem.dim))
        if problem.diagonal_kink:
            pts = pts[np.abs(pts[:, 0] - pts[:, 1]) > margin]
        out = np.vstack([out, pts])
    return out[:count]


class ResidualCheck(NamedTuple):
    max_residual: float
    passed: bool


def gradient_fd(func: Field, points: np.ndarray, h_fd: float = 1e-4) -> np.ndarray:
    """Partial derivatives by the 9-point centered rule."""
    st = centered_weights(4, 4)
    offs = [float(o) for o in st.offsets]
    wts = st.float_weights()
    dim = points.shape[1]
    grad = np.zeros_like(points, dtype=float)
    for axis in range(dim):
        acc = np.zeros(len(points))
        for o, wt in zip(offs, wts):
            if wt == 0.0:
                continue
            shifted = points.copy()
            shifted[:, axis] += o * h_fd
            acc += wt * func(*shifted.T)
        grad[:, axis] = acc / h_fd
    return grad


def pde_residual(problem: TestProblem, points: np.ndarray, h_fd: float = 1e-4) -> np.ndarray:
    if problem.exact_u is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    grad = gradient_fd(problem.exact_u, points, h_fd)
    return np.abs(np.prod(grad, axis=1) - problem.f(*points.T))


def verify_residual(problem: TestProblem, points: np.ndarray | None = None,
                    h_fd: float = 1e-4, tol: float = 1e-6, *, seed: int = 0,
                    count: int = 1000) -> ResidualCheck:
    """Max of ``|prod_i d_i u - f|`` over admissible sample points."""
    if points is None:
        points = sample_points(problem, count, seed)
    worst = float(pde_residual(problem, np.asarray(points, dtype=float), h_fd).max())
    return ResidualCheck(worst, worst <= tol)


class LipschitzEstimate(NamedTuple):
    w_constant: float
    bound: float


def lipschitz_spot_check(problem: TestProblem, pairs: int = 2000, seed: int = 0,
                         margin: float = 1e-3) -> LipschitzEstimate:
    """Largest sampled difference quotient of the factored ``w``.

    Returned next to ``sqrt(n)`` times the same estimate for ``f^(1/n)``.
    Informational only.
    """
    rng = np.random.default_rng(seed)
    n = problem.dim
    a = rng.uniform(margin, 1.0, size=(pairs, n))
    b = np.clip(a + rng.normal(scale=0.02, size=(pairs, n)), margin, 1.0)
    dist = np.linalg.norm(a - b, axis=1)
    keep = dist > 1e-9
    a, b, dist = a[keep], b[keep], dist[keep]
    dw = np.abs(problem.exact_w(*a.T) - problem.exact_w(*b.T)) / dist
    froot = lambda pts: problem.f(*pts.T) ** (1.0 / n)  # noqa: E731
    df = np.abs(froot(a) - froot(b)) / dist
    return LipschitzEstimate(float(dw.max()), float(np.sqrt(n) * df.max()))


# }}}
