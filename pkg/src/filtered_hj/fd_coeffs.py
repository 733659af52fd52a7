"""Exact finite-difference coefficients.

All coefficients are produced as :class:`fractions.Fraction` values.  Floats
appear only in :func:`apply_stencil`, where the weights are converted once.

A stencil approximates the ``p``-th derivative as

.. math::

    f^{(p)}(x) \\approx \\frac{1}{h^p} \\sum_i w_i f(x + o_i h)

and is accurate to order ``q`` iff the moment conditions
``sum_i w_i o_i^m = p! [m == p]`` hold for ``m = 0, ..., p + q - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence, Union

Number = Union[int, Fraction]


class ClosedFormMismatch(ArithmeticError):
    """A closed-form coefficient formula disagrees with the moment conditions."""

    def __init__(self, message: str, entry: tuple[int, int] | None = None, value=None):
        super().__init__(message)
        self.entry = entry
        self.value = value


def _frac(x: Number | str) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


# {{{ types


@dataclass(frozen=True)
class Stencil:
    """Finite-difference rule on offsets (in units of ``h``) with exact weights."""

    offsets: tuple[Fraction, ...]
    weights: tuple[Fraction, ...]
    derivative_order: int
    accuracy_order: int

    def __post_init__(self):
        if len(self.offsets) != len(self.weights):
            raise ValueError("offsets and weights must have the same length")
        if len(set(self.offsets)) != len(self.offsets):
            raise ValueError(f"offsets must be distinct: {self.offsets}")

    def as_dict(self) -> dict[Fraction, Fraction]:
        return dict(zip(self.offsets, self.weights))

    def moment(self, m: int) -> Fraction:
        # 0**0 == 1 for both int and Fraction
        return sum((w * o**m for o, w in zip(self.offsets, self.weights)), Fraction(0))

    def moment_defects(self) -> list[tuple[int, Fraction]]:
        """Return ``(m, defect)`` for every violated moment condition."""
        p = self.derivative_order
        target = math.factorial(p)
        bad = []
        for m in range(p + self.accuracy_order):
            expected = target if m == p else 0
            got = self.moment(m)
            if got != expected:
                bad.append((m, got - expected))
        return bad

    def satisfies_moments(self) -> bool:
        return not self.moment_defects()

    def same_rule(self, other: "Stencil") -> bool:
        """Rational equality of the two rules, ignoring offset order and zero weights."""
        a = {o: w for o, w in self.as_dict().items() if w != 0}
        b = {o: w for o, w in other.as_dict().items() if w != 0}
        return a == b and self.derivative_order == other.derivative_order

    def float_weights(self) -> list[float]:
        return [float(w) for w in self.weights]


@dataclass(frozen=True)
class ArithmeticNodes:
    """Nodes ``a + d*(i - 1)`` for ``i = 1..count``."""

    a: Fraction
    d: Fraction
    count: int

    def __post_init__(self):
        object.__setattr__(self, "a", _frac(self.a))
        object.__setattr__(self, "d", _frac(self.d))
        if self.d == 0:
            raise ValueError("arithmetic step d must be nonzero")
        if self.count < 1:
            raise ValueError("count must be positive")
        if 0 in self.nodes:
            raise ValueError(f"0 is a node of {self}")

    @property
    def nodes(self) -> tuple[Fraction, ...]:
        return tuple(self.a + self.d * i for i in range(self.count))


@dataclass(frozen=True)
class OffsetNodes:
    """Nodes ``-m*d, ..., -d, d, ..., n*d`` (zero excluded)."""

    m: int
    n: int
    d: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "d", _frac(self.d))
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be positive")
        if self.d == 0:
            raise ValueError("spacing d must be nonzero")

    @property
    def count(self) -> int:
        return self.m + self.n

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(range(-self.m, 0)) + tuple(range(1, self.n + 1))

    @property
    def nodes(self) -> tuple[Fraction, ...]:
        return tuple(i * self.d for i in self.indices)


NodeSpec = Union[ArithmeticNodes, OffsetNodes]


@dataclass(frozen=True)
class RationalMatrix:
    rows: int
    cols: int
    entries: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.entries) != self.rows * self.cols:
            raise ValueError("entries length must equal rows * cols")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[Number]]) -> "RationalMatrix":
        r = len(rows)
        c = len(rows[0]) if r else 0
        if any(len(row) != c for row in rows):
            raise ValueError("ragged rows")
        return cls(r, c, tuple(_frac(x) for row in rows for x in row))

    @classmethod
    def identity(cls, n: int) -> "RationalMatrix":
        return cls.from_rows([[int(i == j) for j in range(n)] for i in range(n)])

    def __getitem__(self, ij: tuple[int, int]) -> Fraction:
        i, j = ij
        return self.entries[i * self.cols + j]

    def tolist(self) -> list[list[Fraction]]:
        return [list(self.entries[i * self.cols : (i + 1) * self.cols]) for i in range(self.rows)]

    def column(self, j: int) -> list[Fraction]:
        return [self[i, j] for i in range(self.rows)]

    def __matmul__(self, other: "RationalMatrix") -> "RationalMatrix":
        if self.cols != other.rows:
            raise ValueError("shape mismatch")
        out = [
            [sum((self[i, k] * other[k, j] for k in range(self.cols)), Fraction(0))
             for j in range(other.cols)]
            for i in range(self.rows)
        ]
        return RationalMatrix.from_rows(out)


# }}}


# {{{ binomials and symmetric polynomials


def gbinom(r: Number, k: int) -> Fraction:
    """Generalized binomial coefficient ``r (r-1) ... (r-k+1) / k!`` for rational ``r``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    r = _frac(r)
    num = Fraction(1)
    for i in range(k):
        num *= r - i
    return num / math.factorial(k)


def elementary_symmetric(values: Sequence[Number], k: int) -> Fraction:
    """``sigma_k`` of ``values``: the sum of all products of ``k`` distinct entries."""
    if k < 0 or k > len(values):
        raise ValueError(f"need 0 <= k <= {len(values)}, got {k}")
    # e[j] after processing a prefix = sigma_j of that prefix
    e = [Fraction(1)] + [Fraction(0)] * k
    for v in values:
        v = _frac(v)
        for j in range(k, 0, -1):
            e[j] += v * e[j - 1]
    return e[k]


# }}}


# {{{ first-derivative families


def _with_zero_node(nodes: Sequence[Fraction], weights: Sequence[Fraction], *, p: int, q: int,
                    zero_first: bool = True) -> Stencil:
    w0 = -sum(weights, Fraction(0))
    pairs = list(zip(nodes, weights))
    if zero_first:
        pairs.insert(0, (Fraction(0), w0))
    else:
        pairs.append((Fraction(0), w0))
        pairs.sort(key=lambda t: t[0])
    return Stencil(tuple(o for o, _ in pairs), tuple(w for _, w in pairs), p, q)


def _check_order(k: int) -> None:
    if not isinstance(k, int) or k < 1:
        raise ValueError(f"order must be a positive integer, got {k!r}")


def backward_weights(k: int) -> Stencil:
    """Order-``k`` backward difference for ``f'`` on offsets ``0, -1, ..., -k``."""
    _check_order(k)
    d = [Fraction((-1) ** i * math.comb(k, i), i) for i in range(1, k + 1)]
    d0 = sum((Fraction(1, i) for i in range(1, k + 1)), Fraction(0))
    offsets = tuple(Fraction(-i) for i in range(k + 1))
    return Stencil(offsets, (d0, *d), 1, k)


def forward_weights(k: int) -> Stencil:
    """Order-``k`` forward difference for ``f'`` on offsets ``0, 1, ..., k``."""
    _check_order(k)
    d = [Fraction((-1) ** (i - 1) * math.comb(k, i), i) for i in range(1, k + 1)]
    d0 = -sum((Fraction(1, i) for i in range(1, k + 1)), Fraction(0))
    offsets = tuple(Fraction(i) for i in range(k + 1))
    return Stencil(offsets, (d0, *d), 1, k)


def centered_weights(m: int, n: int) -> Stencil:
    """First-derivative rule on offsets ``-m, ..., n`` of accuracy ``m + n``."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    denom = math.comb(n + m, m)
    idx = [i for i in range(-m, n + 1) if i != 0]
    c = [Fraction((-1) ** ((i - 1) % 2) * math.comb(n + m, i + m), i * denom) for i in idx]
    return _with_zero_node([Fraction(i) for i in idx], c, p=1, q=n + m, zero_first=False)


def arithmetic_weights(spec: ArithmeticNodes) -> Stencil:
    """First-derivative rule on the arithmetic nodes of ``spec`` plus the center."""
    a = spec.nodes
    k = spec.count
    lo = -a[0] / spec.d
    hi = a[-1] / spec.d
    c = [gbinom(lo, i - 1) * gbinom(hi, k - i) / a[i - 1] for i in range(1, k + 1)]
    return _with_zero_node(a, c, p=1, q=k)


# }}}


# {{{ Vandermonde-type systems


def vandermonde_matrix(spec: NodeSpec) -> RationalMatrix:
    """``A[i][j] = node_j ** i`` with powers starting at 1."""
    nodes = spec.nodes
    p = len(nodes)
    return RationalMatrix.from_rows([[x ** i for x in nodes] for i in range(1, p + 1)])


def _inverse_arithmetic(spec: ArithmeticNodes) -> list[list[Fraction]]:
    T = spec.nodes
    n = spec.count
    d = spec.d
    B = []
    for i in range(1, n + 1):
        ai = T[i - 1]
        rest = T[: i - 1] + T[i:]
        scale = ai * d ** (n - 1) * math.factorial(i - 1) * math.factorial(n - i)
        B.append([(-1) ** (i + j) * elementary_symmetric(rest, n - j) / scale
                  for j in range(1, n + 1)])
    return B


def _inverse_offset(spec: OffsetNodes) -> list[list[Fraction]]:
    # sigma runs over the unscaled index set; the d**j factor restores the scale
    m, n, d = spec.m, spec.n, spec.d
    idx = spec.indices
    size = m + n
    B = []
    for i in range(1, m + 1):
        node = i - m - 1
        rest = [t for t in idx if t != node]
        scale = math.factorial(i - 1) * math.factorial(size - i + 1)
        B.append([(-1) ** (i + j + 1) * elementary_symmetric(rest, size - j) / (d ** j * scale)
                  for j in range(1, size + 1)])
    for i in range(1, n + 1):
        rest = [t for t in idx if t != i]
        scale = math.factorial(m + i) * math.factorial(n - i)
        B.append([(-1) ** (m + i + j) * elementary_symmetric(rest, size - j) / (d ** j * scale)
                  for j in range(1, size + 1)])
    return B


def closed_form_inverse(spec: NodeSpec, *, verify: bool = True) -> RationalMatrix:
    """Inverse of :func:`vandermonde_matrix` from the sigma-based closed forms.

    With ``verify`` set, both products with ``A`` are checked against the
    identity and :class:`ClosedFormMismatch` names the first offending entry.
    """
    if isinstance(spec, ArithmeticNodes):
        B = RationalMatrix.from_rows(_inverse_arithmetic(spec))
    elif isinstance(spec, OffsetNodes):
        B = RationalMatrix.from_rows(_inverse_offset(spec))
    else:
        raise TypeError(f"unsupported node spec {spec!r}")
    if verify:
        A = vandermonde_matrix(spec)
        eye = RationalMatrix.identity(A.rows)
        for label, prod in (("A·B", A @ B), ("B·A", B @ A)):
            for i in range(A.rows):
                for j in range(A.rows):
                    if prod[i, j] != eye[i, j]:
                        raise ClosedFormMismatch(
                            f"{label} differs from identity at ({i}, {j}): {prod[i, j]}",
                            entry=(i, j), value=prod[i, j])
    return B


def derivative_weights(spec: NodeSpec, p: int) -> Stencil:
    """Rule for ``f^(p)`` from column ``p`` of the closed-form inverse, scaled by ``p!``."""
    count = spec.count
    if not 1 <= p <= count:
        raise ValueError(f"need 1 <= p <= {count}, got {p}")
    B = closed_form_inverse(spec)
    col = [math.factorial(p) * c for c in B.column(p - 1)]
    zero_first = isinstance(spec, ArithmeticNodes)
    return _with_zero_node(spec.nodes, col, p=p, q=count - p + 1, zero_first=zero_first)


def printed_last_column(spec: NodeSpec) -> list[Fraction]:
    """Node coefficients of the highest-derivative rule exactly as the closed form prints them.

    These omit the ``p!`` normalization, so they only satisfy
    ``sum c_i a_i^p = 1`` rather than ``p!``.
    """
    if isinstance(spec, ArithmeticNodes):
        n, d = spec.count, spec.d
        return [Fraction((-1) ** (n + i)) / (a * d ** (n - 1) * math.factorial(i - 1)
                                             * math.factorial(n - i))
                for i, a in enumerate(spec.nodes, start=1)]
    m, n, d = spec.m, spec.n, spec.d
    return [Fraction((-1) ** ((n + i) % 2)) / (d ** (n + m) * math.factorial(m + i)
                                              * math.factorial(n - i))
            for i in spec.indices]


def printed_second_last_column(spec: NodeSpec) -> list[Fraction]:
    """Companion of :func:`printed_last_column` for derivative order ``count - 1``."""
    if isinstance(spec, ArithmeticNodes):
        n, d = spec.count, spec.d
        a = spec.nodes
        mid = Fraction(n, 2) * (a[0] + a[-1])
        return [Fraction((-1) ** (n + i - 1)) * (mid - ai)
                / (ai * d ** (n - 1) * math.factorial(i - 1) * math.factorial(n - i))
                for i, ai in enumerate(a, start=1)]
    m, n, d = spec.m, spec.n, spec.d
    mid = Fraction(n * n - m * m, 2)
    return [Fraction((-1) ** ((n + i - 1) % 2)) * (mid - i)
            / (d ** (n + m - 2) * math.factorial(m + i) * math.factorial(n - i))
            for i in spec.indices]


def certify_column(spec: NodeSpec, coeffs: Sequence[Fraction], p: int) -> Stencil:
    """Wrap node coefficients as a ``p``-th derivative stencil and check its moments.

    Raises :class:`ClosedFormMismatch` carrying the first violated moment.
    """
    s = _with_zero_node(spec.nodes, list(coeffs), p=p, q=spec.count - p + 1,
                        zero_first=isinstance(spec, ArithmeticNodes))
    bad = s.moment_defects()
    if bad:
        m, defect = bad[0]
        raise ClosedFormMismatch(
            f"moment {m} of the p={p} rule is off by {defect}", entry=(m, p), value=defect)
    return s


# }}}


# {{{ oracle


def _solve_exact(M: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction]:
    n = len(M)
    aug = [row[:] + [b] for row, b in zip(M, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            raise ValueError("singular moment system (duplicate or zero nodes?)")
        aug[col], aug[piv] = aug[piv], aug[col]
        pv = aug[col][col]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                factor = aug[r][col] / pv
                aug[r] = [x - factor * y for x, y in zip(aug[r], aug[col])]
    return [aug[i][n] / aug[i][i] for i in range(n)]


def oracle_weights(nodes: Sequence[Number], p: int) -> Stencil:
    """Solve the moment system for the ``p``-th derivative by exact elimination.

    ``nodes`` are the nonzero offsets; the center carries minus the sum of the
    other weights.
    """
    nodes = [_frac(x) for x in nodes]
    if not 1 <= p <= len(nodes):
        raise ValueError(f"need 1 <= p <= {len(nodes)}, got {p}")
    if len(set(nodes)) != len(nodes) or 0 in nodes:
        raise ValueError("nodes must be distinct and nonzero")
    M = [[x ** m for x in nodes] for m in range(1, len(nodes) + 1)]
    rhs = [Fraction(math.factorial(p)) if m == p else Fraction(0)
           for m in range(1, len(nodes) + 1)]
    w = _solve_exact(M, rhs)
    return _with_zero_node(nodes, w, p=p, q=len(nodes) - p + 1)


# }}}


def apply_stencil(s: Stencil, samples: Mapping[Number, float], h: float) -> float:
    """``h**-p * sum_i w_i f(x + o_i h)`` given ``samples[o_i] = f(x + o_i h)``."""
    if h <= 0:
        raise ValueError("h must be positive")
    total = 0.0
    for o, w in zip(s.offsets, s.weights):
        try:
            v = samples[o]
        except KeyError:
            raise ValueError(f"missing sample at offset {o}") from None
        total += float(w) * v
    return total / h ** s.derivative_order
