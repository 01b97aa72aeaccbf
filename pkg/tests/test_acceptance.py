"""Acceptance criteria 1 to 10 at their stated tolerances.

Each test carries ``@pytest.mark.criterion(n)``; the terminal summary prints
one PASS/FAIL line per criterion. Run on its own with
``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""
import math
import sys
import time

import numpy as np
import pytest

from gapforge import (
    CellSpec,
    DesignParams,
    SecularCoefficients,
    TargetGaps,
    ep05_bound,
    gap_roots,
    grid_align,
    inverse_design,
    limit_neumann_eigenvalues,
    realize_design,
)
from gapforge.cli import main
from gapforge.fem import BCMode, build_dofmap, build_mesh, fiber_eigenvalues
from gapforge.lab import convergence_sweep, decoupling_check, gap_count_check

PI2 = math.pi**2
EMPTY = CellSpec((), ())
SWEEP_EPS = (0.5, 0.25, 0.125, 0.0625)


def criterion(n):
    return pytest.mark.criterion(n)


def spaced_poles(rng, m, lo=0.5, hi=50.0, rel_sep=0.05):
    while True:
        A = np.sort(np.exp(rng.uniform(math.log(lo), math.log(hi), m)))
        if np.all(np.diff(A) >= rel_sep * A[:-1]):
            return A


@pytest.fixture(scope="module")
def design_m1():
    # A = 1, b = 0.25, so B = 4/3; the centered square is already on the 64-grid
    return grid_align(realize_design(DesignParams((0.25,), (0.25,))), 64)


@pytest.fixture(scope="module")
def design_m2():
    B = sorted(np.roots([0.7, -2.5, 2.0]).real)
    params = inverse_design(TargetGaps.from_edges((1.0, 2.0), B))
    return grid_align(realize_design(params), 48)


# --- 1 to 3: gap algebra ----------------------------------------------------

@criterion(1)
def test_criterion_1_round_trip():
    rng = np.random.default_rng(20240601)
    start = time.perf_counter()
    for _ in range(100):
        m = int(rng.integers(1, 9))
        A = spaced_poles(rng, m)
        upper = np.append(A[1:], 2 * A[-1])
        B = A + rng.uniform(0.05, 0.95, m) * (upper - A)
        B_back = gap_roots(inverse_design(TargetGaps.from_edges(A, B)).secular())
        A_back = np.array(inverse_design(TargetGaps.from_edges(A, B)).rates)
        np.testing.assert_allclose(A_back, A, rtol=1e-10, atol=0)
        np.testing.assert_allclose(B_back, B, rtol=1e-10, atol=0)
    assert time.perf_counter() - start < 5.0


@criterion(2)
def test_criterion_2_matrix_equivalence():
    rng = np.random.default_rng(77)
    start = time.perf_counter()
    for _ in range(100):
        m = int(rng.integers(1, 7))
        vols = rng.uniform(0.01, 0.9 / m, m)
        perims = rng.uniform(0.2, 3.0, m)
        rates = spaced_poles(rng, m)
        q = rates * vols / perims
        vol0 = 1.0 - vols.sum()
        ev = np.sort(limit_neumann_eigenvalues(q, perims, [vol0, *vols]))
        B = gap_roots(SecularCoefficients.from_measures(q, perims, vols, vol0))
        assert abs(ev[0]) <= 1e-10
        np.testing.assert_allclose(ev[1:], B, rtol=1e-8, atol=1e-8)
    assert time.perf_counter() - start < 5.0


@criterion(3)
@pytest.mark.parametrize("A, b", [(1.0, 0.2), (4.0, 0.25), (0.7, 0.01), (33.0, 0.6)])
def test_criterion_3_single_gap_closed_form(A, b):
    (B,) = gap_roots(SecularCoefficients((A,), (b,)))
    assert abs(B - A / (1 - b)) <= 1e-12 * max(1.0, A / (1 - b))


@criterion(3)
def test_criterion_3_two_gap_quadratic():
    B = gap_roots(SecularCoefficients((1.0, 2.0), (0.2, 0.1)))
    oracle = sorted(np.roots([0.7, -2.5, 2.0]).real)
    np.testing.assert_allclose(B, [1.2098387323, 2.3615898391], atol=1e-9)
    np.testing.assert_allclose(B, oracle, atol=1e-9)


# --- 4 to 8: FEM and spectra -----------------------------------------------

@criterion(4)
def test_criterion_4_empty_cell_oracle():
    start = time.perf_counter()
    dirichlet = fiber_eigenvalues(EMPTY, 1.0, 64, BCMode.dirichlet(), 1)[0]
    neumann = fiber_eigenvalues(EMPTY, 1.0, 64, BCMode.neumann(), 2)[1]
    anti = fiber_eigenvalues(EMPTY, 1.0, 64, BCMode.quasi(math.pi, math.pi), 1)[0]
    assert dirichlet == pytest.approx(2 * PI2, rel=0.01)
    assert neumann == pytest.approx(PI2, rel=0.01)
    assert anti == pytest.approx(2 * PI2, rel=0.01)
    coarse = fiber_eigenvalues(EMPTY, 1.0, 32, BCMode.dirichlet(), 1)[0]
    ratio = (coarse - 2 * PI2) / (dirichlet - 2 * PI2)
    assert 3.0 <= ratio <= 5.0
    assert time.perf_counter() - start < 60.0


@criterion(5)
def test_criterion_5_bracketing(design_m1):
    N, eps, k = 64, 0.25, 3
    mesh = build_mesh(design_m1, N)
    dm = build_dofmap(mesh)
    lo = fiber_eigenvalues(design_m1, eps, N, BCMode.neumann(), k, mesh=mesh, dofmap=dm)
    hi = fiber_eigenvalues(design_m1, eps, N, BCMode.dirichlet(), k, mesh=mesh, dofmap=dm)
    rng = np.random.default_rng(5)
    for phi in rng.uniform(0.0, 2 * math.pi, size=(8, 2)):
        mid = fiber_eigenvalues(design_m1, eps, N, BCMode.quasi(*phi), k, mesh=mesh, dofmap=dm)
        assert np.all(lo <= mid + 1e-7), (phi, lo, mid)
        assert np.all(mid <= hi + 1e-7), (phi, mid, hi)


@pytest.fixture(scope="module")
def sweep_report(design_m1):
    return convergence_sweep(design_m1, SWEEP_EPS, 64)


@pytest.fixture(scope="module")
def verify_runs(design_m1, tmp_path_factory):
    root = tmp_path_factory.mktemp("verify")
    cell = root / "cell.json"
    cell.write_text(design_m1.to_json())
    runs = []
    for i in range(2):
        out = root / f"verify{i}.csv"
        code = main(["verify", "--cell", str(cell), "--eps-list", ",".join(map(str, SWEEP_EPS)),
                     "--mesh", "64", "--out", str(out)])
        runs.append((code, out.read_bytes()))
    return runs


@criterion(6)
def test_criterion_6_tracks_both_edges(sweep_report):
    names = {s.name for s in sweep_report.series}
    assert {"lambda_2,neumann", "lambda_1,dirichlet"} <= names
    limits = {s.name: s.limit for s in sweep_report.series}
    assert limits["lambda_2,neumann"] == pytest.approx(4 / 3, rel=1e-14)
    assert limits["lambda_1,dirichlet"] == pytest.approx(1.0, rel=1e-14)


@criterion(6)
def test_criterion_6_monotone_decrease(sweep_report):
    for s in sweep_report.series:
        assert sweep_report.monotone(s), (s.name, s.errors)


@criterion(6)
def test_criterion_6_slope_window(sweep_report):
    lo, hi = sweep_report.slope_window
    slopes = {s.name: sweep_report.slope(s) for s in sweep_report.series}
    assert all(lo <= v <= hi for v in slopes.values()), slopes


@criterion(6)
def test_criterion_6_verify_exit_code(verify_runs):
    assert verify_runs[0][0] == 0


@criterion(7)
def test_criterion_7_gap_count_m2(design_m2):
    report = gap_count_check(design_m2, 0.125, 48, 6)
    assert report.count <= 2, report.gaps


@criterion(7)
def test_criterion_7_gap_count_empty():
    report = gap_count_check(EMPTY, 0.125, 48, 6)
    assert report.count == 0, report.gaps


@criterion(8)
def test_criterion_8_decoupling(design_m1):
    rng = np.random.default_rng(8)
    phases = [(0.0, 0.0), (math.pi, 0.0), (math.pi, math.pi)]
    phases += [tuple(p) for p in rng.uniform(0.0, 2 * math.pi, size=(8, 2))]
    for phi, scaled, lam_phi in decoupling_check(design_m1, 0.25, 64, phases):
        assert scaled >= lam_phi - 1e-6, (phi, scaled, lam_phi)


# --- 9 and 10 ---------------------------------------------------------------

@criterion(9)
def test_criterion_9_ep05():
    for lam, n1, n2 in [(0.0, 1.0, 2.0), (3.0, 0.5, 0.5), (17.25, 2.0, 0.0)]:
        assert ep05_bound(lam, 0.0, 0.0, n1, n2) == lam
    assert ep05_bound(2.0, 0.01, 0.01, 1.0, 1.0) == pytest.approx(2.0927835052, abs=1e-10)
    assert math.isinf(ep05_bound(2.0, 0.5, 0.0, 1.0, 1.0))
    assert math.isinf(ep05_bound(2.0, 0.2, 0.3, 2.0, 1.0))


@criterion(10)
def test_criterion_10_forward_deterministic(design_m1, tmp_path):
    cell = tmp_path / "cell.json"
    cell.write_text(design_m1.to_json())
    outs = []
    for i in range(3):
        out = tmp_path / f"forward{i}.csv"
        assert main(["forward", "--cell", str(cell), "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]


@criterion(10)
def test_criterion_10_verify_deterministic(verify_runs):
    (code_a, csv_a), (code_b, csv_b) = verify_runs
    assert code_a == code_b
    assert csv_a == csv_b


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
