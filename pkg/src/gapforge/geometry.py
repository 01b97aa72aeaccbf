"""Unit-cell geometry: inclusion shapes, their measures and layouts."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AlignmentError, PlacementError, ValidationError
from .gap_algebra import POLE_SEPARATION, DesignParams, SecularCoefficients, coupling_rate

__all__ = [
    "InclusionShape",
    "CellSpec",
    "CellDiagnostics",
    "measure",
    "realize_design",
    "validate_cell",
    "grid_align",
    "alignment_changes",
    "LAYOUT_MARGIN",
]

LAYOUT_MARGIN = 0.02
_ALIGN_TOL = 1e-9


@dataclass(frozen=True)
class InclusionShape:
    """An axis-aligned rectangle (``half_extents``) or a disk (``radius``)."""

    kind: str
    center: tuple[float, float]
    half_extents: tuple[float, float] | None = None
    radius: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.kind == "rect":
            if self.half_extents is None or self.radius is not None:
                raise ValidationError("rectangles take half_extents and no radius")
            hx, hy = (float(h) for h in self.half_extents)
            if not (hx > 0 and hy > 0):
                raise ValidationError(f"half extents must be positive, got {(hx, hy)}")
            object.__setattr__(self, "half_extents", (hx, hy))
        elif self.kind == "disk":
            if self.radius is None or self.half_extents is not None:
                raise ValidationError("disks take a radius and no half_extents")
            if not float(self.radius) > 0:
                raise ValidationError(f"radius must be positive, got {self.radius}")
            object.__setattr__(self, "radius", float(self.radius))
        else:
            raise ValidationError(f"unknown inclusion kind {self.kind!r}")

    @classmethod
    def rect(cls, x0, y0, x1, y1) -> "InclusionShape":
        return cls("rect", ((x0 + x1) / 2, (y0 + y1) / 2), ((x1 - x0) / 2, (y1 - y0) / 2))

    @classmethod
    def disk(cls, center, radius) -> "InclusionShape":
        return cls("disk", tuple(center), radius=radius)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        cx, cy = self.center
        hx, hy = self.half_extents if self.kind == "rect" else (self.radius, self.radius)
        return cx - hx, cy - hy, cx + hx, cy + hy

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "center": list(self.center)}
        if self.kind == "rect":
            d["half_extents"] = list(self.half_extents)
        else:
            d["radius"] = self.radius
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InclusionShape":
        try:
            kind = d["kind"]
            center = tuple(d["center"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed inclusion {d!r}") from exc
        if len(center) != 2:
            raise ValidationError(f"center must have two coordinates, got {center}")
        he = d.get("half_extents")
        return cls(kind, center, tuple(he) if he is not None else None, d.get("radius"))


def measure(shape: InclusionShape) -> tuple[float, float]:
    """Exact (area, perimeter) of an inclusion."""
    if shape.kind == "rect":
        hx, hy = shape.half_extents
        return 4.0 * hx * hy, 4.0 * (hx + hy)
    r = shape.radius
    return math.pi * r * r, 2.0 * math.pi * r


@dataclass(frozen=True)
class CellSpec:
    """Inclusions and their interaction strengths inside the unit square.

    Geometric validity is not enforced on construction; see
    :func:`validate_cell`.
    """

    inclusions: tuple[InclusionShape, ...]
    strengths: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "inclusions", tuple(self.inclusions))
        q = tuple(float(x) for x in self.strengths)
        object.__setattr__(self, "strengths", q)
        if len(q) != len(self.inclusions):
            raise ValidationError(
                f"{len(self.inclusions)} inclusions but {len(q)} strengths"
            )
        if any(not (x > 0 and math.isfinite(x)) for x in q):
            raise ValidationError(f"strengths must be positive and finite, got {q}")

    @property
    def m(self) -> int:
        return len(self.inclusions)

    @property
    def volumes(self) -> np.ndarray:
        return np.array([measure(s)[0] for s in self.inclusions])

    @property
    def perimeters(self) -> np.ndarray:
        return np.array([measure(s)[1] for s in self.inclusions])

    @property
    def vol0(self) -> float:
        return 1.0 - math.fsum(self.volumes)

    @property
    def rates(self) -> np.ndarray:
        """Coupling rate of each inclusion, in storage order."""
        return np.array(
            [coupling_rate(q, p, v) for q, p, v in zip(self.strengths, self.perimeters, self.volumes)]
        )

    def secular(self) -> SecularCoefficients:
        return SecularCoefficients.from_measures(
            self.strengths, self.perimeters, self.volumes, self.vol0
        )

    def to_dict(self) -> dict:
        return {
            "inclusions": [s.to_dict() for s in self.inclusions],
            "strengths": list(self.strengths),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CellSpec":
        if not isinstance(d, dict) or "inclusions" not in d or "strengths" not in d:
            raise ValidationError("cell document needs 'inclusions' and 'strengths'")
        return cls(tuple(InclusionShape.from_dict(s) for s in d["inclusions"]), tuple(d["strengths"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CellSpec":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"cell file is not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]


def realize_design(params: DesignParams, layout: str = "row", shape: str = "square") -> CellSpec:
    """Place one inclusion of area ``b_j`` per design entry and set its strength.

    The ``"row"`` layout puts the shapes on the horizontal midline with equal
    gaps between neighbours and to the cell walls. Strengths are chosen so that
    the coupling rate of inclusion ``j`` equals ``a_j / b_j``.
    """
    if layout != "row":
        raise ValidationError(f"unknown layout policy {layout!r}")
    if shape == "square":
        widths = [math.sqrt(b) for b in params.b]
    elif shape == "disk":
        widths = [2.0 * math.sqrt(b / math.pi) for b in params.b]
    else:
        raise ValidationError(f"unknown shape {shape!r}")

    m = params.m
    gap = (1.0 - sum(widths)) / (m + 1)
    if gap < LAYOUT_MARGIN or max(widths) > 1.0 - 2 * LAYOUT_MARGIN:
        raise PlacementError(
            f"cannot place {m} shapes of widths {[round(w, 4) for w in widths]} in a row "
            f"with margin {LAYOUT_MARGIN}; reduce the volume fractions b_j or use another layout"
        )

    shapes = []
    x = gap
    for w in widths:
        center = (x + w / 2, 0.5)
        if shape == "square":
            shapes.append(InclusionShape("rect", center, (w / 2, w / 2)))
        else:
            shapes.append(InclusionShape("disk", center, radius=w / 2))
        x += w + gap
    q = []
    for s, rate in zip(shapes, params.rates):
        vol, perim = measure(s)
        q.append(rate * vol / perim)
    return CellSpec(tuple(shapes), tuple(q))


def _separation(s: InclusionShape, t: InclusionShape) -> float:
    """Signed distance between closures (negative when they overlap)."""
    if s.kind == "rect" and t.kind == "rect":
        dx = abs(s.center[0] - t.center[0]) - s.half_extents[0] - t.half_extents[0]
        dy = abs(s.center[1] - t.center[1]) - s.half_extents[1] - t.half_extents[1]
        if dx > 0 and dy > 0:
            return math.hypot(dx, dy)
        return max(dx, dy)
    if s.kind == "disk" and t.kind == "disk":
        return math.dist(s.center, t.center) - s.radius - t.radius
    rect, disk = (s, t) if s.kind == "rect" else (t, s)
    dx = abs(disk.center[0] - rect.center[0]) - rect.half_extents[0]
    dy = abs(disk.center[1] - rect.center[1]) - rect.half_extents[1]
    if dx <= 0 and dy <= 0:
        outside = max(dx, dy)
    else:
        outside = math.hypot(max(dx, 0.0), max(dy, 0.0))
    return outside - disk.radius


@dataclass
class CellDiagnostics:
    disjointness_margin: float
    containment_margin: float
    vol0: float
    rates: list[float]
    rates_increasing: bool
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems


def validate_cell(cell: CellSpec) -> CellDiagnostics:
    """Report the geometric and ordering assumptions a cell must satisfy."""
    problems = []
    shapes = cell.inclusions
    contain = math.inf
    for s in shapes:
        x0, y0, x1, y1 = s.bounds
        contain = min(contain, x0, y0, 1.0 - x1, 1.0 - y1)
    if shapes and not contain > 0:
        problems.append(f"inclusion touches or leaves the unit cell (margin {contain:.3g})")

    disjoint = math.inf
    for i in range(len(shapes)):
        for j in range(i + 1, len(shapes)):
            sep = _separation(shapes[i], shapes[j])
            disjoint = min(disjoint, sep)
            if not sep > 0:
                problems.append(f"inclusions {i} and {j} are not disjoint (separation {sep:.3g})")

    vol0 = cell.vol0
    if not vol0 > 0:
        problems.append(f"inclusions fill the cell (vol_0 = {vol0:.3g})")

    rates = cell.rates.tolist()
    increasing = all(r2 - r1 >= POLE_SEPARATION * r1 for r1, r2 in zip(rates, rates[1:]))
    if not increasing:
        problems.append(f"coupling rates are not strictly increasing: {rates}")
    return CellDiagnostics(disjoint, contain, vol0, rates, increasing, problems)


def _snap_bounds(shape: InclusionShape, N: int) -> tuple[int, int, int, int]:
    x0, y0, x1, y1 = shape.bounds
    return tuple(int(round(v * N)) for v in (x0, y0, x1, y1))


def grid_align(cell: CellSpec, N: int) -> CellSpec:
    """Snap every rectangle edge to the nearest multiple of ``1/N``.

    Strengths are kept, so the realized coupling rates follow the snapped
    measures. Raises :class:`AlignmentError` if a shape collapses, reaches the
    cell boundary, or comes into contact with another shape.
    """
    if N < 1:
        raise ValidationError(f"resolution must be positive, got {N}")
    boxes = []
    for k, s in enumerate(cell.inclusions):
        if s.kind != "rect":
            raise ValidationError("grid alignment supports rectangles only")
        i0, j0, i1, j1 = _snap_bounds(s, N)
        if i1 <= i0 or j1 <= j0:
            raise AlignmentError(f"inclusion {k} collapses at resolution {N}")
        if i0 < 1 or j0 < 1 or i1 > N - 1 or j1 > N - 1:
            raise AlignmentError(f"inclusion {k} reaches the cell boundary at resolution {N}")
        boxes.append((i0, j0, i1, j1))
    for a in range(len(boxes)):
        for b in range(a + 1, len(boxes)):
            p, r = boxes[a], boxes[b]
            # closures must stay at least one mesh cell apart
            if p[0] <= r[2] and r[0] <= p[2] and p[1] <= r[3] and r[1] <= p[3]:
                raise AlignmentError(f"inclusions {a} and {b} merge at resolution {N}")
    shapes = tuple(
        InclusionShape("rect", ((i0 + i1) / (2 * N), (j0 + j1) / (2 * N)),
                       ((i1 - i0) / (2 * N), (j1 - j0) / (2 * N)))
        for i0, j0, i1, j1 in boxes
    )
    return CellSpec(shapes, cell.strengths)


def is_grid_aligned(cell: CellSpec, N: int) -> bool:
    for s in cell.inclusions:
        if s.kind != "rect":
            return False
        if any(abs(v * N - round(v * N)) > _ALIGN_TOL for v in s.bounds):
            return False
    return True


def alignment_changes(original: CellSpec, aligned: CellSpec) -> list[dict]:
    """Per-inclusion change in volume, perimeter and coupling rate."""
    rows = []
    for j, (s, t, q) in enumerate(zip(original.inclusions, aligned.inclusions, original.strengths)):
        v0, p0 = measure(s)
        v1, p1 = measure(t)
        rows.append({
            "j": j,
            "d_volume": v1 - v0,
            "d_perimeter": p1 - p0,
            "rate_before": coupling_rate(q, p0, v0),
            "rate_after": coupling_rate(q, p1, v1),
        })
    return rows


def cell_from_sequences(centers: Sequence, half_extents: Sequence, strengths: Sequence) -> CellSpec:
    """Convenience constructor for rectangle-only cells."""
    shapes = tuple(InclusionShape("rect", c, h) for c, h in zip(centers, half_extents))
    return CellSpec(shapes, tuple(strengths))
