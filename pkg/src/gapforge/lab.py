"""Band computations turned into gap statements.

Band edges are bracketed with four wall conditions (Neumann, periodic,
anti-periodic, Dirichlet); gap counting samples the full phase grid.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .fem import BCMode, build_dofmap, build_mesh, fiber_eigenvalues, lambda_phi
from .gap_algebra import LimitSpectra, limit_spectra
from .geometry import CellSpec, grid_align, is_grid_aligned

__all__ = [
    "BandTable",
    "GapEnclosure",
    "TrackedSeries",
    "ConvergenceReport",
    "GapCountReport",
    "EDGE_MODES",
    "compute_band_edges",
    "certified_gaps",
    "convergence_sweep",
    "gap_count_check",
    "decoupling_check",
    "phase_grid",
    "max_workers",
]

PHI0 = (0.0, 0.0)
PHIPI = (math.pi, math.pi)
EDGE_MODES = (BCMode.neumann(), BCMode.quasi(*PHI0), BCMode.quasi(*PHIPI), BCMode.dirichlet())
BRACKET_SLACK = 1e-7
SLOPE_WINDOW = (0.5, 1.5)
FLOOR_FACTOR = 5.0


def max_workers() -> int:
    """Worker cap from ``GAPFORGE_THREADS`` (0 or unset means one per CPU)."""
    raw = os.environ.get("GAPFORGE_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"GAPFORGE_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValidationError("GAPFORGE_THREADS must be non-negative")
    return n or (os.cpu_count() or 1)


def _run_jobs(fn, items):
    items = list(items)
    workers = min(max_workers(), len(items)) or 1
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def phase_grid(G: int) -> list[tuple[int, tuple[float, float]]]:
    """``G x G`` phases ``2 pi (i, j) / G`` with a flat index ``i * G + j``."""
    return [(i * G + j, (2 * math.pi * i / G, 2 * math.pi * j / G))
            for i in range(G) for j in range(G)]


@dataclass
class BandTable:
    """Fiber eigenvalues keyed by wall condition, plus run metadata."""

    eps: float
    N: int
    cell_hash: str
    values: dict[BCMode, np.ndarray]
    bracketing_ok: bool = True
    bracketing_defect: float = 0.0

    @property
    def rows(self) -> list[tuple[tuple[float, float] | None, str, int, float]]:
        out = []
        for mode, vals in self.values.items():
            for k, lam in enumerate(vals, start=1):
                out.append((mode.phi, mode.kind, k, float(lam)))
        return out

    def __getitem__(self, mode: BCMode) -> np.ndarray:
        return self.values[mode]

    @property
    def neumann(self):
        return self.values[EDGE_MODES[0]]

    @property
    def periodic(self):
        return self.values[EDGE_MODES[1]]

    @property
    def antiperiodic(self):
        return self.values[EDGE_MODES[2]]

    @property
    def dirichlet(self):
        return self.values[EDGE_MODES[3]]


def _prepared(cell, N):
    mesh = build_mesh(cell, N)
    return mesh, build_dofmap(mesh)


def compute_band_edges(cell: CellSpec, eps: float, N: int, k_max: int,
                       tol: float = 1e-8) -> BandTable:
    """Lowest ``k_max`` eigenvalues under the four bracketing wall conditions."""
    if k_max < 1 or k_max > cell.m + 2:
        raise ValidationError(f"k_max must lie in [1, m+2] = [1, {cell.m + 2}], got {k_max}")
    mesh, dofmap = _prepared(cell, N)
    vals = _run_jobs(
        lambda mode: fiber_eigenvalues(cell, eps, N, mode, k_max, tol, mesh, dofmap), EDGE_MODES
    )
    values = dict(zip(EDGE_MODES, vals))
    nv, dv = values[EDGE_MODES[0]], values[EDGE_MODES[3]]
    scale = max(1.0, float(np.max(np.abs(dv))))
    defect = 0.0
    for mode in EDGE_MODES[1:3]:
        qv = values[mode]
        defect = max(defect, float(np.max(nv - qv)), float(np.max(qv - dv)))
    ok = defect <= BRACKET_SLACK * scale
    return BandTable(float(eps), N, cell.digest(), values, ok, defect)


@dataclass
class GapEnclosure:
    """Intervals that surely lie inside / surely contain gap ``j``."""

    j: int
    inner: tuple[float, float]
    outer: tuple[float, float]
    limit: tuple[float, float]

    @property
    def certified(self) -> bool:
        return self.inner[0] < self.inner[1]

    def nested(self, tol: float = 1e-8) -> bool:
        """Inner interval inside the outer one, up to relative slack ``tol``."""
        if not self.certified:
            return True
        slack = tol * max(1.0, abs(self.outer[1]))
        return self.outer[0] <= self.inner[0] + slack and self.inner[1] <= self.outer[1] + slack

    @property
    def status(self) -> str:
        return "certified" if self.certified else "gap not certified at this eps/N"


def certified_gaps(edges: BandTable, limit: LimitSpectra) -> list[GapEnclosure]:
    m = limit.m
    if len(edges.neumann) < m + 1:
        raise ValidationError(f"band table must reach k = m+1 = {m + 1}")
    out = []
    for j in range(1, m + 1):
        inner = (float(edges.dirichlet[j - 1]), float(edges.neumann[j]))
        outer = (float(edges.antiperiodic[j - 1]), float(edges.periodic[j]))
        out.append(GapEnclosure(j, inner, outer, (limit.dirichlet_eigs[j - 1], limit.neumann_eigs[j])))
    return out


@dataclass
class TrackedSeries:
    """One eigenvalue followed along the sweep, with its limit."""

    mode: str
    k: int
    limit: float
    lambdas: list[float] = field(default_factory=list)
    margins: list[float] = field(default_factory=list)

    @property
    def errors(self) -> np.ndarray:
        return np.abs(np.array(self.lambdas) - self.limit)

    @property
    def name(self) -> str:
        return f"lambda_{self.k},{self.mode}"


@dataclass
class ConvergenceReport:
    eps: list[float]
    N: int
    coarse_N: int
    limit: LimitSpectra
    series: list[TrackedSeries]
    zero_mode: list[float]
    slope_window: tuple[float, float] = SLOPE_WINDOW

    def slope(self, s: TrackedSeries) -> float:
        """Least-squares slope of log error against log eps over the last three points."""
        e = s.errors[-3:]
        x = np.log(np.array(self.eps[-3:]))
        if np.any(e <= 0):
            return math.nan
        return float(np.polyfit(x, np.log(e), 1)[0])

    def monotone(self, s: TrackedSeries) -> bool:
        """Errors shrink along the sweep until they reach the mesh-error floor."""
        err = s.errors
        for i in range(1, len(err)):
            if err[i - 1] < FLOOR_FACTOR * s.margins[i - 1]:
                break
            if not err[i] < err[i - 1]:
                return False
        return True

    def empirical_constant(self, s: TrackedSeries) -> float:
        return float(np.max(s.errors / np.array(self.eps)))

    def one_sided(self, s: TrackedSeries) -> bool:
        """Eigenvalue stays below its limit up to the mesh margin."""
        lam = np.array(s.lambdas)
        return bool(np.all(lam <= s.limit + np.array(s.margins) + 1e-12 * max(1.0, s.limit)))

    def verdict(self, s: TrackedSeries) -> bool:
        lo, hi = self.slope_window
        sl = self.slope(s)
        return bool(lo <= sl <= hi and self.monotone(s))

    @property
    def passed(self) -> bool:
        return all(self.verdict(s) for s in self.series)

    def verdict_lines(self) -> list[str]:
        lines = []
        for s in self.series:
            lines.append(
                f"{'PASS' if self.verdict(s) else 'FAIL'} {s.name} -> {s.limit:.10g}: "
                f"slope {self.slope(s):.3f} (window {self.slope_window[0]}..{self.slope_window[1]}), "
                f"monotone {'yes' if self.monotone(s) else 'no'}, "
                f"below limit {'yes' if self.one_sided(s) else 'no'}, "
                f"empirical C {self.empirical_constant(s):.4g}"
            )
        return lines


def _coarse_partner(cell, N):
    if N % 2 == 0 and N // 2 >= 2 and is_grid_aligned(cell, N // 2):
        return N // 2
    return 2 * N


def convergence_sweep(cell: CellSpec, eps_list, N: int, k_max: int | None = None,
                      tol: float = 1e-8) -> ConvergenceReport:
    """Follow the gap-edge eigenvalues as the period shrinks.

    The mesh margin of each eigenvalue is a third of its change between the
    mesh and its half-resolution partner (double resolution if the cell is
    not aligned on the coarse grid).
    """
    m = cell.m
    if m == 0:
        raise ValidationError("convergence sweep needs at least one inclusion")
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 3:
        raise ValidationError("need at least three eps values")
    if any(e2 >= e1 for e1, e2 in zip(eps_list, eps_list[1:])):
        raise ValidationError("eps values must decrease strictly")
    k_max = m + 1 if k_max is None else k_max
    if k_max < m + 1:
        raise ValidationError(f"k_max must be at least m+1 = {m + 1}")
    limit = limit_spectra(cell.secular())
    coarse_N = _coarse_partner(cell, N)

    series = []
    for k in range(2, m + 2):
        for mode in ("neumann", "periodic"):
            series.append(TrackedSeries(mode, k, limit.neumann_eigs[k - 1]))
    for k in range(1, m + 1):
        for mode in ("dirichlet", "antiperiodic"):
            series.append(TrackedSeries(mode, k, limit.dirichlet_eigs[k - 1]))

    def run(eps):
        fine = compute_band_edges(cell, eps, N, k_max, tol)
        coarse = compute_band_edges(cell, eps, coarse_N, k_max, tol)
        return fine, coarse

    zero_mode = []
    for fine, coarse in _run_jobs(run, eps_list):
        zero_mode.append(float(fine.neumann[0]))
        for s in series:
            a = getattr(fine, s.mode)[s.k - 1]
            b = getattr(coarse, s.mode)[s.k - 1]
            s.lambdas.append(float(a))
            s.margins.append(abs(float(a) - float(b)) / 3.0)
    return ConvergenceReport(eps_list, N, coarse_N, limit, series, zero_mode)


@dataclass
class GapCountReport:
    m: int
    eps: float
    N: int
    G: int
    lambda_d: float
    lambda_grid_max: float
    bound_used: str
    window: float
    bands: list[tuple[float, float]]
    gaps: list[tuple[float, float]]
    raw_gaps: list[tuple[float, float]]

    @property
    def count(self) -> int:
        return len(self.gaps)

    @property
    def ok(self) -> bool:
        return self.count <= self.m


def _count_gaps(intervals, top):
    gaps = []
    intervals = sorted((lo, hi) for lo, hi in intervals if lo <= top)
    if not intervals:
        return gaps
    reach = intervals[0][1]
    for lo, hi in intervals[1:]:
        if lo > reach:
            gaps.append((reach, lo))
        reach = max(reach, hi)
    return gaps


def gap_count_check(cell: CellSpec, eps: float, N: int, G: int, tol: float = 1e-8,
                    with_grid_max: bool = True) -> GapCountReport:
    """Count spectral gaps below ``Lambda_D / eps^2`` on a ``G x G`` phase grid.

    Each sampled eigenvalue is widened by its solver uncertainty
    ``tol * max(1, |lambda|)`` before the bands are merged.
    """
    if G < 4:
        raise ValidationError(f"phase grid must be at least 4x4, got G={G}")
    mesh, dofmap = _prepared(cell, N)
    lam_d = lambda_phi(cell, "dirichlet", N, tol, mesh, dofmap)
    grid = phase_grid(G)
    grid_max = math.nan
    if with_grid_max:
        grid_max = max(_run_jobs(lambda p: lambda_phi(cell, p[1], N, tol, mesh, dofmap), grid))
    window = lam_d / eps**2

    def sample(p):
        mode = BCMode.quasi(*p[1])
        k = cell.m + 4
        while True:
            vals = fiber_eigenvalues(cell, eps, N, mode, k, tol, mesh, dofmap)
            if vals[-1] > window or k >= dofmap.n_dofs // 2:
                return vals
            k *= 2

    per_phase = _run_jobs(sample, grid)
    n_bands = min(len(v) for v in per_phase)
    table = np.array([v[:n_bands] for v in per_phase]).reshape(G, G, n_bands)
    bands, raw = [], []
    for k in range(n_bands):
        vals = table[:, :, k]
        lo, hi = float(vals.min()), float(vals.max())
        raw.append((lo, hi))
        bands.append((lo - tol * max(1.0, abs(lo)), hi + tol * max(1.0, abs(hi))))
    return GapCountReport(
        cell.m, float(eps), N, G, lam_d, grid_max, "Lambda_D", window,
        bands, _count_gaps(bands, window), _count_gaps(raw, window),
    )


def decoupling_check(cell: CellSpec, eps: float, N: int, phases, tol: float = 1e-8):
    """Compare ``eps^2 * lambda_{m+1}(phi)`` with ``Lambda_phi`` at each phase.

    Returns ``(phi, scaled eigenvalue, Lambda_phi)`` triples.
    """
    mesh, dofmap = _prepared(cell, N)
    k = cell.m + 1

    def one(phi):
        lam = fiber_eigenvalues(cell, eps, N, BCMode.quasi(*phi), k, tol, mesh, dofmap)[k - 1]
        return tuple(phi), float(lam) * eps**2, lambda_phi(cell, phi, N, tol, mesh, dofmap)

    return _run_jobs(one, [tuple(p) for p in phases])


def limits_for(cell: CellSpec) -> LimitSpectra:
    return limit_spectra(cell.secular())


def aligned(cell: CellSpec, N: int) -> CellSpec:
    return cell if is_grid_aligned(cell, N) else grid_align(cell, N)
