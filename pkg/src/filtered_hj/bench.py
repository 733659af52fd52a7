"""Convergence studies: error norms over a mesh ladder, observed rates, usage fractions."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .grid import GridFunction, GridSpec
from .hj_solver import (
    InvariantViolation,
    SchemeConfig,
    SolveReport,
    filter_residual_check,
    stability_check,
    sweep_solve,
)
from .problems import TestProblem

log = logging.getLogger(__name__)

DEFAULT_MESHES = (32, 64, 128, 256, 512, 1024)
DEFAULT_ORDERS = (1, 2, 3, 5, 8, 13)

CSV_HEADER = ("problem", "h", "N", "order", "filtered", "err_L1_u", "err_Linf_u",
              "err_L1_w", "err_Linf_w", "usage_fraction", "wall_time")
NORMS = ("L1_u", "Linf_u", "L1_w", "Linf_w")


@dataclass(frozen=True)
class ErrorRecord:
    h: float
    N: int
    order: int
    filtered: bool
    err_L1_u: float
    err_Linf_u: float
    err_L1_w: float
    err_Linf_w: float
    usage_fraction: float
    wall_time: float

    @property
    def scheme(self) -> tuple[int, bool]:
        return (self.order, self.filtered)

    @property
    def label(self) -> str:
        return f"{'FS' if self.filtered else 'S'}{self.order}"

    def error(self, norm: str) -> float:
        return getattr(self, f"err_{norm}")


@dataclass
class ConvergenceReport:
    problem: str
    records: list[ErrorRecord] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    def sort(self) -> None:
        # coarse meshes first; filtered schemes after unfiltered
        self.records.sort(key=lambda r: (-r.h, r.filtered, r.order))

    def schemes(self) -> list[tuple[int, bool]]:
        seen: dict[tuple[int, bool], None] = {}
        for r in self.records:
            seen.setdefault(r.scheme, None)
        return list(seen)

    def series(self, order: int, filtered: bool) -> list[ErrorRecord]:
        return [r for r in self.records if r.scheme == (order, filtered)]

    def observed_orders(self, norm: str = "L1_u") -> dict[tuple[int, bool], float]:
        out = {}
        for scheme in self.schemes():
            recs = self.series(*scheme)
            if len(recs) >= 3:
                out[scheme] = observed_order([r.h for r in recs], [r.error(norm) for r in recs])
        return out

    @property
    def ok(self) -> bool:
        return not self.violations


def discrete_error(u_h: GridFunction, exact: Callable[..., np.ndarray] | np.ndarray,
                   norm: str = "L1", mask: np.ndarray | None = None) -> float:
    """``h^n sum |e|`` (``"L1"``) or ``max |e|`` (``"Linf"``) over the nodes in ``mask``."""
    spec = u_h.spec
    ex = exact(*spec.mesh()) if callable(exact) else np.asarray(exact, dtype=float)
    err = np.abs(u_h.values - ex)
    if mask is not None:
        err = err[mask]
    if err.size and not np.all(np.isfinite(err)):
        return math.inf
    if norm == "L1":
        return float(spec.h ** spec.dim * err.sum())
    if norm == "Linf":
        return float(err.max()) if err.size else 0.0
    raise ValueError(f"unknown norm {norm!r}")


def observed_order(hs: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of ``log(err)`` against ``log(h)``.

    NaN if any error is non-finite; ``-inf`` errors (exact zeros) are not
    meaningful either and also give NaN.
    """
    if len(hs) < 3:
        raise ValueError("need at least 3 records")
    if len(set(hs)) != len(hs):
        raise ValueError("mesh sizes must be distinct")
    e = np.asarray(errors, dtype=float)
    if not np.all(np.isfinite(e)) or np.any(e <= 0):
        return math.nan
    slope, _ = np.polyfit(np.log(np.asarray(hs, dtype=float)), np.log(e), 1)
    return float(slope)


def _run_one(problem: TestProblem, spec: GridSpec, cfg: SchemeConfig,
             report: ConvergenceReport) -> ErrorRecord:
    t0 = time.perf_counter()
    with np.errstate(over="ignore", invalid="ignore"):
        sol: SolveReport = sweep_solve(problem.f, spec, cfg)
    wall = time.perf_counter() - t0

    if cfg.filtered or cfg.order == 1:
        if not stability_check(sol, problem.f):
            report.violations.append(f"{cfg.label} N={spec.intervals}: stability bound")
        try:
            filter_residual_check(sol, problem.f)
        except InvariantViolation as exc:
            report.violations.append(f"{cfg.label} N={spec.intervals}: {exc}")

    errs = dict.fromkeys(NORMS, math.nan)
    if problem.exact_u is not None:
        interior = np.ones(spec.shape, dtype=bool)
        for x in spec.mesh():
            interior &= x > 0
        with np.errstate(over="ignore", invalid="ignore"):
            for norm in ("L1", "Linf"):
                errs[f"{norm}_u"] = discrete_error(sol.u, problem.exact_u, norm)
                errs[f"{norm}_w"] = discrete_error(sol.w, problem.exact_w, norm, mask=interior)
    return ErrorRecord(spec.h, spec.intervals, cfg.order, cfg.filtered,
                       errs["L1_u"], errs["Linf_u"], errs["L1_w"], errs["Linf_w"],
                       sol.usage_fraction, wall)


def run_study(problem: TestProblem, orders: Iterable[int] = DEFAULT_ORDERS,
              filtered: Iterable[bool] = (False, True),
              meshes: Sequence[int] = DEFAULT_MESHES,
              cfg: SchemeConfig | None = None,
              progress: Callable[[ErrorRecord], None] | None = None) -> ConvergenceReport:
    """Run every (order, filtered, mesh) combination.

    Diverging unfiltered runs are recorded with ``inf`` errors.  Filtered and
    first-order runs are checked against the stability bound and the
    first-order residual bound; failures land in ``report.violations``.
    """
    meshes = list(meshes)
    if any(b <= a for a, b in zip(meshes, meshes[1:])):
        raise ValueError("mesh ladder must be increasing")
    base = cfg or SchemeConfig()
    report = ConvergenceReport(problem.name)
    for N in meshes:
        spec = GridSpec(problem.dim, N)
        for flag in filtered:
            for k in orders:
                rec = _run_one(problem, spec, replace(base, order=k, filtered=flag), report)
                report.records.append(rec)
                if progress:
                    progress(rec)
    report.sort()
    return report


# {{{ output


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return repr(float(x))


def emit_csv(report: ConvergenceReport, path: str | Path, *, timing: bool = True) -> Path:
    """Write one row per record.  ``timing=False`` blanks ``wall_time`` to ``0``."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(CSV_HEADER)
        for r in report.records:
            out.writerow([report.problem, _fmt(r.h), r.N, r.order, int(r.filtered),
                          _fmt(r.err_L1_u), _fmt(r.err_Linf_u), _fmt(r.err_L1_w),
                          _fmt(r.err_Linf_w), _fmt(r.usage_fraction),
                          _fmt(r.wall_time if timing else 0.0)])
    return path


def emit_plot_data(report: ConvergenceReport, outdir: str | Path,
                   norms: Sequence[str] = NORMS) -> list[Path]:
    """One ``h error`` file per (norm, scheme) plus ``index.txt`` naming the series."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    names = []
    for norm in norms:
        for order, flag in report.schemes():
            recs = report.series(order, flag)
            name = f"{report.problem}_{norm}_{recs[0].label}"
            path = outdir / f"{name}.dat"
            with open(path, "w") as fh:
                fh.write("# h error\n")
                for r in recs:
                    fh.write(f"{_fmt(r.h)} {_fmt(r.error(norm))}\n")
            names.append(name)
            written.append(path)
    index = outdir / f"{report.problem}_index.txt"
    index.write_text("".join(f"{n}\n" for n in names))
    written.append(index)
    return written


def format_summary(report: ConvergenceReport) -> str:
    lines = [f"# problem={report.problem}"]
    rates = {norm: report.observed_orders(norm) for norm in ("L1_u", "Linf_u")}
    lines.append("scheme,rate_L1_u,rate_Linf_u,usage_at_finest")
    for scheme in report.schemes():
        recs = report.series(*scheme)
        lines.append(",".join([recs[0].label,
                               _fmt(rates["L1_u"].get(scheme, math.nan)),
                               _fmt(rates["Linf_u"].get(scheme, math.nan)),
                               _fmt(recs[-1].usage_fraction)]))
    return "\n".join(lines)


# }}}
