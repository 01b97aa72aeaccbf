"""Limit model of the gap problem as the period shrinks to zero.

Everything here is closed form or one-dimensional root finding: coupling
rates, the secular function whose roots are the right gap edges, the inverse
map from requested gaps to (strength x volume, volume fraction) pairs, the two
limit matrices, and the eigenvalue comparison bound used to control the rate.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import ConsistencyError, ValidationError

__all__ = [
    "TargetGaps",
    "DesignParams",
    "SecularCoefficients",
    "LimitSpectra",
    "coupling_rate",
    "eval_secular",
    "gap_roots",
    "inverse_design",
    "forward_design",
    "limit_neumann_matrix",
    "limit_neumann_eigenvalues",
    "limit_dirichlet_spectrum",
    "limit_spectra",
    "ep05_bound",
]

# relative separation below which two poles count as coincident
POLE_SEPARATION = 1e-10
BISECT_ABS_TOL = 1e-12
BISECT_REL_TOL = 1e-12
_MAX_BISECT = 400
_MAX_DOUBLINGS = 200


def _as_float_tuple(values, name):
    try:
        out = tuple(float(v) for v in values)
    except TypeError as exc:
        raise ValidationError(f"{name} must be a sequence of numbers") from exc
    if not all(math.isfinite(v) for v in out):
        raise ValidationError(f"{name} contains non-finite entries: {out}")
    return out


@dataclass(frozen=True)
class TargetGaps:
    """Requested limit gaps ``(A_j, B_j)``, strictly interlacing."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pairs = []
        for pair in self.intervals:
            if len(pair) != 2:
                raise ValidationError(f"gap {pair!r} is not a pair")
            pairs.append(_as_float_tuple(pair, "gap"))
        object.__setattr__(self, "intervals", tuple(pairs))
        if not pairs:
            raise ValidationError("at least one gap is required")
        edges = [e for pair in pairs for e in pair]
        if edges[0] <= 0:
            raise ValidationError(f"A_1 must be positive, got {edges[0]}")
        for left, right in zip(edges, edges[1:]):
            if not left < right:
                raise ValidationError(
                    f"gap edges must interlace strictly as A_1 < B_1 < A_2 < ...; "
                    f"got {left} >= {right}"
                )

    @classmethod
    def from_edges(cls, A: Sequence[float], B: Sequence[float]) -> "TargetGaps":
        if len(A) != len(B):
            raise ValidationError("A and B must have the same length")
        return cls(tuple(zip(A, B)))

    @property
    def m(self) -> int:
        return len(self.intervals)

    @property
    def A(self) -> np.ndarray:
        return np.array([p[0] for p in self.intervals])

    @property
    def B(self) -> np.ndarray:
        return np.array([p[1] for p in self.intervals])


@dataclass(frozen=True)
class DesignParams:
    """A point of the domain of the forward map.

    ``a[j]`` is a coupling rate times a volume fraction, ``b[j]`` the
    volume fraction of inclusion ``j``.
    """

    a: tuple[float, ...]
    b: tuple[float, ...]

    def __post_init__(self):
        a = _as_float_tuple(self.a, "a")
        b = _as_float_tuple(self.b, "b")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        if len(a) != len(b) or not a:
            raise ValidationError("a and b must be non-empty and of equal length")
        if min(a) <= 0 or min(b) <= 0:
            raise ValidationError("a_j and b_j must be positive")
        if sum(b) >= 1:
            raise ValidationError(f"volume fractions sum to {sum(b)} >= 1")
        rates = [x / y for x, y in zip(a, b)]
        if any(r1 >= r2 for r1, r2 in zip(rates, rates[1:])):
            raise ValidationError(f"ratios a_j/b_j must increase strictly, got {rates}")

    @property
    def m(self) -> int:
        return len(self.a)

    @property
    def b0(self) -> float:
        return 1.0 - math.fsum(self.b)

    @property
    def rates(self) -> np.ndarray:
        return np.array(self.a) / np.array(self.b)

    def secular(self) -> "SecularCoefficients":
        return SecularCoefficients(tuple(self.rates), self.b)


@dataclass(frozen=True)
class SecularCoefficients:
    """Poles ``A`` and weights ``b`` of the secular function.

    ``b0`` defaults to ``1 - sum(b)``; pass it explicitly when the weights
    are raw volumes rather than fractions of a unit cell.
    """

    A: tuple[float, ...]
    b: tuple[float, ...]
    b0: float | None = None

    def __post_init__(self):
        A = _as_float_tuple(self.A, "A")
        b = _as_float_tuple(self.b, "b")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        b0 = 1.0 - math.fsum(b) if self.b0 is None else float(self.b0)
        object.__setattr__(self, "b0", b0)
        if len(A) != len(b) or not A:
            raise ValidationError("poles and weights must be non-empty and of equal length")
        if min(A) <= 0 or min(b) <= 0:
            raise ValidationError("poles and weights must be positive")
        if not b0 > 0:
            raise ValidationError(f"complement weight b0 = {b0} must be positive")
        for j in range(len(A) - 1):
            if A[j + 1] - A[j] < POLE_SEPARATION * A[j]:
                raise ValidationError(
                    f"poles must increase strictly; A[{j}]={A[j]!r}, A[{j + 1}]={A[j + 1]!r}"
                )

    @classmethod
    def from_measures(cls, q, perims, vols, vol0) -> "SecularCoefficients":
        """Build from strengths and inclusion measures (volumes need not sum to 1)."""
        A = [coupling_rate(*t) for t in zip(q, perims, vols)]
        order = np.argsort(A, kind="stable")
        return cls(tuple(A[i] for i in order), tuple(float(vols[i]) for i in order), float(vol0))

    @property
    def m(self) -> int:
        return len(self.A)


@dataclass(frozen=True)
class LimitSpectra:
    neumann_eigs: tuple[float, ...]
    dirichlet_eigs: tuple[float, ...]

    @property
    def m(self) -> int:
        return len(self.dirichlet_eigs)

    @property
    def gaps(self) -> list[tuple[float, float]]:
        return list(zip(self.dirichlet_eigs, self.neumann_eigs[1:]))


def coupling_rate(q: float, surface_area: float, volume: float) -> float:
    """Return ``q * surface_area / volume``."""
    if not (q > 0 and surface_area > 0 and volume > 0):
        raise ValidationError(
            f"coupling rate needs positive inputs, got q={q}, area={surface_area}, volume={volume}"
        )
    return q * surface_area / volume


def _numerator(A, w, b0, lam):
    # b0 * prod(A_i - lam) + sum_j A_j b_j prod_{i != j}(A_i - lam)
    d = A - lam
    m = len(A)
    total = b0 * np.prod(d)
    for j in range(m):
        total += w[j] * np.prod(np.delete(d, j))
    return float(total)


def eval_secular(coeffs: SecularCoefficients, lam: float) -> tuple[float, float]:
    """Evaluate the secular function and its pole-cleared numerator at ``lam``.

    The rational value is ``nan`` within machine tolerance of a pole; the
    numerator is always finite.
    """
    A = np.asarray(coeffs.A)
    w = A * np.asarray(coeffs.b)
    num = _numerator(A, w, coeffs.b0, lam)
    d = A - lam
    if np.any(np.abs(d) <= 4 * np.finfo(float).eps * np.maximum(np.abs(A), 1.0)):
        return math.nan, num
    value = 1.0 + float(np.sum(w / (coeffs.b0 * d)))
    return value, num


def _bisect(f, lo, hi, f_lo):
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if hi - lo <= BISECT_ABS_TOL or hi - lo <= BISECT_REL_TOL * abs(mid):
            return mid
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gap_roots(coeffs: SecularCoefficients) -> np.ndarray:
    """Roots ``B_1 < ... < B_m`` of the secular function, one per bracket.

    Bisection runs on the cleared numerator over ``(A_j, A_{j+1})`` and, for
    the last root, over ``(A_m, U)`` with ``U`` doubled until the sign flips.
    """
    A = np.asarray(coeffs.A)
    w = A * np.asarray(coeffs.b)
    b0 = coeffs.b0

    def f(lam):
        return _numerator(A, w, b0, lam)

    m = len(A)
    upper = A[-1] + float(np.sum(w)) / b0 + 1.0
    for _ in range(_MAX_DOUBLINGS):
        if (f(upper) > 0) != (f(A[-1]) > 0):
            break
        upper *= 2.0
    else:
        raise ConsistencyError("no sign change above the largest pole")

    brackets = [(A[j], A[j + 1]) for j in range(m - 1)] + [(A[-1], upper)]
    roots = np.empty(m)
    for j, (lo, hi) in enumerate(brackets):
        f_lo, f_hi = f(lo), f(hi)
        if f_lo == 0.0 or f_hi == 0.0 or (f_lo > 0) == (f_hi > 0):
            raise ConsistencyError(
                f"bracket {j} = ({lo}, {hi}) shows no sign change "
                f"(numerator {f_lo:.3e}, {f_hi:.3e})"
            )
        roots[j] = _bisect(f, lo, hi, f_lo)
    return roots


def inverse_design(targets: TargetGaps) -> DesignParams:
    """Design parameters whose limit gaps are exactly ``targets``."""
    A, B = targets.A, targets.B
    m = targets.m
    rho = np.empty(m)
    for j in range(m):
        others = [i for i in range(m) if i != j]
        rho[j] = (B[j] - A[j]) / A[j] * np.prod((B[others] - A[j]) / (A[others] - A[j]))
    b = rho / (1.0 + rho.sum())
    return DesignParams(tuple(A * b), tuple(b))


def forward_design(params: DesignParams) -> TargetGaps:
    """The forward map: design parameters to limit gap edges."""
    coeffs = params.secular()
    return TargetGaps.from_edges(coeffs.A, gap_roots(coeffs))


def _check_lengths(q, perims, vols_inner):
    if not (len(q) == len(perims) == len(vols_inner)):
        raise ValidationError(
            f"size mismatch: {len(q)} strengths, {len(perims)} perimeters, "
            f"{len(vols_inner)} inclusion volumes"
        )


def limit_neumann_matrix(q, perims, vols) -> np.ndarray:
    """Matrix of the limit Neumann operator on piecewise constants.

    ``vols[0]`` is the volume of the complement, ``vols[1:]`` the inclusion
    volumes. The matrix is self-adjoint in the volume-weighted inner product.
    """
    q = np.asarray(q, dtype=float)
    perims = np.asarray(perims, dtype=float)
    vols = np.asarray(vols, dtype=float)
    if len(vols) != len(q) + 1:
        raise ValidationError(f"expected {len(q) + 1} volumes (complement first), got {len(vols)}")
    _check_lengths(q, perims, vols[1:])
    if np.any(q <= 0) or np.any(perims <= 0) or np.any(vols <= 0):
        raise ValidationError("strengths, perimeters and volumes must be positive")
    c = q * perims
    m = len(q)
    H = np.zeros((m + 1, m + 1))
    H[0, 0] = c.sum() / vols[0]
    H[0, 1:] = -c / vols[0]
    H[1:, 0] = -c / vols[1:]
    H[np.arange(1, m + 1), np.arange(1, m + 1)] = c / vols[1:]
    return H


def limit_neumann_eigenvalues(q, perims, vols) -> np.ndarray:
    """Ascending eigenvalues of :func:`limit_neumann_matrix`.

    Conjugating by ``D**0.5`` with ``D = diag(vols)`` gives an ordinary
    symmetric matrix.
    """
    H = limit_neumann_matrix(q, perims, vols)
    s = np.sqrt(np.asarray(vols, dtype=float))
    S = s[:, None] * H / s[None, :]
    S = 0.5 * (S + S.T)
    return scipy.linalg.eigvalsh(S)


def limit_dirichlet_spectrum(q, perims, vols) -> np.ndarray:
    """Eigenvalues of the limit Dirichlet operator, i.e. the sorted coupling rates."""
    _check_lengths(q, perims, vols)
    rates = np.sort([coupling_rate(*t) for t in zip(q, perims, vols)])
    for j in range(len(rates) - 1):
        if rates[j + 1] - rates[j] < POLE_SEPARATION * rates[j]:
            warnings.warn(
                f"coupling rates {rates[j]!r} and {rates[j + 1]!r} coincide; "
                "strict ordering of the rates is assumed downstream",
                RuntimeWarning,
                stacklevel=2,
            )
    return rates


def limit_spectra(coeffs: SecularCoefficients) -> LimitSpectra:
    B = gap_roots(coeffs)
    return LimitSpectra((0.0, *map(float, B)), tuple(map(float, coeffs.A)))


def ep05_bound(lam: float, delta1: float, delta2: float, n1: float, n2: float) -> float:
    """Upper bound on the k-th eigenvalue of the comparison operator.

    ``lam`` is the k-th eigenvalue of the reference operator and
    ``delta1``, ``delta2`` the defects of the norm and form estimates with
    weights of order ``n1``, ``n2``. Returns ``math.inf`` when the
    denominator ``1 - (1 + lam**n1) * delta1`` is not positive.
    """
    if min(delta1, delta2, n1, n2) < 0 or lam < 0:
        raise ValidationError("lam, deltas and orders must be non-negative")
    w1 = 1.0 + lam**n1
    w2 = 1.0 + lam**n2
    denom = 1.0 - w1 * delta1
    if not denom > 0:
        return math.inf
    return lam + (lam * w1 * delta1 + w2 * delta2) / denom
