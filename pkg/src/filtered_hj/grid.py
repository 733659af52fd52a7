"""Uniform lattice on the unit cube and grid-function storage."""

from __future__ import annotations

import csv
import itertools
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

_HEADER = struct.Struct("<QQ")


@dataclass(frozen=True)
class GridSpec:
    """Nodes ``j * h`` for ``j in {0..N}^dim`` with ``h = 1/N``."""

    dim: int
    intervals: int
    h: float = field(init=False)

    def __post_init__(self):
        if self.dim < 1 or self.intervals < 1:
            raise ValueError("dim and intervals must be positive")
        object.__setattr__(self, "h", 1.0 / self.intervals)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.intervals + 1,) * self.dim

    @property
    def size(self) -> int:
        return (self.intervals + 1) ** self.dim

    def axes(self) -> list[np.ndarray]:
        x = np.arange(self.intervals + 1) * self.h
        return [x] * self.dim

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of shape :attr:`shape`, one per axis."""
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def in_range(self, j: Sequence[int]) -> bool:
        return len(j) == self.dim and all(0 <= ji <= self.intervals for ji in j)


@dataclass
class GridFunction:
    """Node values stored as an ndarray of shape ``spec.shape`` (row-major)."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.spec.shape:
            raise ValueError(f"values have shape {self.values.shape}, expected {self.spec.shape}")

    @classmethod
    def zeros(cls, spec: GridSpec) -> "GridFunction":
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def from_callable(cls, spec: GridSpec, func) -> "GridFunction":
        vals = np.broadcast_to(np.asarray(func(*spec.mesh()), dtype=float), spec.shape)
        return cls(spec, vals.copy())

    def __getitem__(self, j):
        return self.values[tuple(j)]


def sweep_order(spec: GridSpec) -> Iterator[tuple[int, ...]]:
    """Row-major traversal; every backward neighbor precedes its node."""
    return itertools.product(range(spec.intervals + 1), repeat=spec.dim)


def read_extended(w: GridFunction, j: Sequence[int]) -> float:
    """Value at ``j``, or 0 for indices outside the cube."""
    if w.spec.in_range(j):
        return float(w.values[tuple(j)])
    return 0.0


def coordinates(spec: GridSpec, j: Sequence[int]) -> tuple[float, ...]:
    if not spec.in_range(j):
        raise ValueError(f"index {tuple(j)} outside grid with N={spec.intervals}")
    return tuple(ji * spec.h for ji in j)


def nearest_index(spec: GridSpec, x: Sequence[float]) -> tuple[int, ...]:
    j = tuple(int(round(xi * spec.intervals)) for xi in x)
    if not spec.in_range(j):
        raise ValueError(f"point {tuple(x)} outside the unit cube")
    return j


def in_filter_band(spec: GridSpec, j: Sequence[int], k: int) -> bool:
    """True iff the node lies in ``[k h, 1]^n``, where a full order-``k`` stencil fits."""
    return all(ji >= k for ji in j)


# {{{ serialization


def write_binary(w: GridFunction, path: str | Path) -> None:
    """16-byte header (dim, N as little-endian u64) followed by little-endian f8 values."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(w.spec.dim, w.spec.intervals))
        fh.write(np.ascontiguousarray(w.values, dtype="<f8").tobytes())


def read_binary(path: str | Path) -> GridFunction:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    dim, N = _HEADER.unpack_from(data)
    spec = GridSpec(int(dim), int(N))
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != spec.size:
        raise ValueError(f"{path}: expected {spec.size} values, found {body.size}")
    return GridFunction(spec, body.reshape(spec.shape).astype(float))


def write_csv(w: GridFunction, path: str | Path) -> None:
    """Debug export with rows ``j1,...,jn,value``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow([f"j{i + 1}" for i in range(w.spec.dim)] + ["value"])
        for j in sweep_order(w.spec):
            out.writerow([*j, repr(float(w.values[j]))])


# }}}
