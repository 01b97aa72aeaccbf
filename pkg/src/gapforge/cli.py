"""Command-line interface.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 layout
infeasible, 5 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import fem, lab
from .errors import (
    AlignmentError,
    ConsistencyError,
    NumericalFailure,
    PlacementError,
    ValidationError,
)
from .gap_algebra import TargetGaps, gap_roots, inverse_design, limit_neumann_eigenvalues
from .geometry import CellSpec, grid_align, is_grid_aligned, realize_design, validate_cell

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_LAYOUT, EXIT_VERIFY = 0, 2, 3, 4, 5
MATRIX_TOL = 1e-7
N_RANGE = (8, 512)


class VerificationFailed(Exception):
    pass


def fmt(x) -> str:
    """Shortest round-trip text for a float."""
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from None


def load_cell(path) -> CellSpec:
    cell = CellSpec.from_dict(read_json(path))
    diag = validate_cell(cell)
    if not diag.ok:
        raise ValidationError(f"invalid cell {path}: " + "; ".join(diag.problems))
    return cell


def _check_mesh(N):
    if not N_RANGE[0] <= N <= N_RANGE[1]:
        raise ValidationError(f"mesh resolution must lie in [{N_RANGE[0]}, {N_RANGE[1]}], got {N}")


def _check_eps(eps):
    if not 0 < eps <= 1:
        raise ValidationError(f"eps must lie in (0, 1], got {eps}")


def _aligned_cell(cell, N):
    if is_grid_aligned(cell, N):
        return cell
    print(f"note: snapping inclusions to the {N}x{N} grid", file=sys.stderr)
    return grid_align(cell, N)


def cmd_design(args) -> int:
    doc = read_json(args.targets)
    gaps = doc.get("gaps") if isinstance(doc, dict) else None
    if not isinstance(gaps, list) or not gaps:
        raise ValidationError("targets file needs a non-empty 'gaps' list of [A, B] pairs")
    targets = TargetGaps(tuple(tuple(g) for g in gaps))
    params = inverse_design(targets)
    cell = realize_design(params)
    if args.mesh:
        _check_mesh(args.mesh)
        snapped = grid_align(cell, args.mesh)
        # snapping changes areas and perimeters; restore the target rates through q
        q = tuple(float(A * v / per) for A, v, per in zip(targets.A, snapped.volumes, snapped.perimeters))
        cell = CellSpec(snapped.inclusions, q)
        B_snapped = gap_roots(cell.secular())
        shift = float(np.max(np.abs(B_snapped - np.asarray(targets.B))))
        print(f"note: snapped to the {args.mesh}x{args.mesh} grid; rates kept, "
              f"largest B_j shift {shift:.3e}", file=sys.stderr)
    diag = validate_cell(cell)
    if not diag.ok:
        raise AlignmentError("realized cell is invalid: " + "; ".join(diag.problems))
    Path(args.out_cell).write_text(cell.to_json())
    rows = [
        (j + 1, float(A), float(B), params.b[j], cell.strengths[j], float(cell.rates[j]))
        for j, (A, B) in enumerate(targets.intervals)
    ]
    write_csv(args.out_summary, ["j", "A_target", "B_target", "b_j", "q_j", "A_realized"], rows)
    return EXIT_OK


def forward_rows(cell: CellSpec):
    coeffs = cell.secular()
    B = gap_roots(coeffs)
    order = np.argsort(cell.rates, kind="stable")
    vols = [cell.vol0, *cell.volumes[order]]
    eig = limit_neumann_eigenvalues(np.array(cell.strengths)[order], cell.perimeters[order], vols)
    Bm = np.sort(eig)[1:]
    return [(j + 1, coeffs.A[j], float(B[j]), float(Bm[j]), float(abs(B[j] - Bm[j])))
            for j in range(cell.m)]


def cmd_forward(args) -> int:
    cell = load_cell(args.cell)
    if cell.m == 0:
        raise ValidationError("cell has no inclusions")
    rows = forward_rows(cell)
    write_csv(args.out, ["j", "A_j", "B_j_bisection", "B_j_matrix", "abs_diff"], rows)
    worst = max(r[-1] for r in rows)
    if worst > MATRIX_TOL:
        raise ConsistencyError(f"bisection and matrix edges differ by {worst:.3e}")
    return EXIT_OK


def band_rows(cell, eps, N, G, k, tol=1e-8):
    """Quasi-periodic fiber eigenvalues on the ``G x G`` phase grid."""
    mesh = fem.build_mesh(cell, N)
    dofmap = fem.build_dofmap(mesh)
    grid = lab.phase_grid(G)
    vals = lab._run_jobs(
        lambda p: fem.fiber_eigenvalues(cell, eps, N, fem.BCMode.quasi(*p[1]), k, tol, mesh, dofmap),
        grid,
    )
    rows = []
    for (idx, phi), lam in zip(grid, vals):
        for kk, v in enumerate(lam, start=1):
            rows.append((idx, phi[0], phi[1], "quasi", kk, float(v)))
    rows.sort(key=lambda r: (r[3], r[0], r[4]))
    return rows


def symmetry_path(samples: int):
    """Phases along (0,0) -> (pi,0) -> (pi,pi) -> (0,0) with arc-length positions."""
    corners = [(0.0, 0.0), (math.pi, 0.0), (math.pi, math.pi), (0.0, 0.0)]
    pts, pos = [], []
    s0 = 0.0
    for a, b in zip(corners, corners[1:]):
        seg = math.dist(a, b)
        for t in np.linspace(0.0, 1.0, samples, endpoint=False):
            pts.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
            pos.append(s0 + t * seg)
        s0 += seg
    pts.append(corners[-1])
    pos.append(s0)
    return pts, pos


def band_svg(cell, eps, N, k, samples=12, tol=1e-8) -> str:
    mesh = fem.build_mesh(cell, N)
    dofmap = fem.build_dofmap(mesh)
    pts, pos = symmetry_path(samples)
    vals = np.array(lab._run_jobs(
        lambda p: fem.fiber_eigenvalues(cell, eps, N, fem.BCMode.quasi(*p), k, tol, mesh, dofmap),
        pts,
    ))
    levels = []
    if cell.m:
        lim = lab.limits_for(cell)
        levels = [*lim.dirichlet_eigs, *lim.neumann_eigs[1:]]
    W, Hh, pad = 640.0, 420.0, 40.0
    ymax = max(float(vals.max()), *levels, 1e-12) * 1.05
    xs = lambda s: pad + (W - 2 * pad) * s / pos[-1]  # noqa: E731
    ys = lambda v: Hh - pad - (Hh - 2 * pad) * v / ymax  # noqa: E731
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:g}" height="{Hh:g}" '
           f'viewBox="0 0 {W:g} {Hh:g}">']
    out.append(f'<rect x="{pad:g}" y="{pad:g}" width="{W - 2 * pad:g}" height="{Hh - 2 * pad:g}" '
               'fill="none" stroke="black"/>')
    for v in levels:
        out.append(f'<line x1="{pad:g}" x2="{W - pad:g}" y1="{ys(v):.3f}" y2="{ys(v):.3f}" '
                   'stroke="gray" stroke-dasharray="4 3"/>')
    for b in range(k):
        coords = " ".join(f"{xs(s):.3f},{ys(v):.3f}" for s, v in zip(pos, vals[:, b]))
        out.append(f'<polyline points="{coords}" fill="none" stroke="navy"/>')
    for label, s in zip(("(0,0)", "(pi,0)", "(pi,pi)", "(0,0)"), (0.0, math.pi, 2 * math.pi, pos[-1])):
        out.append(f'<text x="{xs(s):.3f}" y="{Hh - pad / 3:.3f}" font-size="11" '
                   f'text-anchor="middle">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_bands(args) -> int:
    _check_mesh(args.mesh)
    _check_eps(args.eps)
    if args.k < 1 or args.phi_grid < 1:
        raise ValidationError("--k and --phi-grid must be positive")
    cell = _aligned_cell(load_cell(args.cell), args.mesh)
    rows = band_rows(cell, args.eps, args.mesh, args.phi_grid, args.k)
    write_csv(args.out, ["phi_i", "phi_1", "phi_2", "mode", "k", "lambda"], rows)
    if args.svg:
        Path(args.svg).write_text(band_svg(cell, args.eps, args.mesh, args.k))
    return EXIT_OK


def parse_eps_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"cannot parse eps list {text!r}") from None


def verify_rows(report: lab.ConvergenceReport):
    rows = []
    for i, eps in enumerate(report.eps):
        for s in sorted(report.series, key=lambda s: (s.k, s.mode)):
            rows.append((eps, s.k, s.mode, s.lambdas[i], s.limit, float(s.errors[i]), s.margins[i]))
    return rows


def cmd_verify(args) -> int:
    _check_mesh(args.mesh)
    eps_list = parse_eps_list(args.eps_list)
    if len(eps_list) < 3:
        raise ValidationError("--eps-list needs at least three values")
    for e in eps_list:
        _check_eps(e)
    cell = _aligned_cell(load_cell(args.cell), args.mesh)
    report = lab.convergence_sweep(cell, eps_list, args.mesh)
    write_csv(args.out, ["eps", "k", "mode", "lambda", "limit", "abs_err", "mesh_margin"],
              verify_rows(report))
    for line in report.verdict_lines():
        print(line)
    zero = max(abs(z) for z in report.zero_mode)
    print(f"lowest Neumann eigenvalue max |lambda_1| = {zero:.3e}")
    if not report.passed:
        raise VerificationFailed("at least one tracked eigenvalue failed")
    print("verdict: PASS")
    return EXIT_OK


def cmd_lambda(args) -> int:
    _check_mesh(args.mesh)
    cell = _aligned_cell(load_cell(args.cell), args.mesh)
    print(f"Lambda_D {fmt(fem.lambda_phi(cell, 'dirichlet', args.mesh))}")
    if args.phi_grid:
        vals = [fem.lambda_phi(cell, phi, args.mesh) for _, phi in lab.phase_grid(args.phi_grid)]
        print(f"Lambda_phi_max {fmt(max(vals))}")
        print(f"Lambda_phi_min {fmt(min(vals))}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gapforge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="realize a cell with prescribed limit gaps")
    d.add_argument("--targets", required=True)
    d.add_argument("--out-cell", required=True)
    d.add_argument("--out-summary", required=True)
    d.add_argument("--mesh", type=int, default=64,
                   help="snap the cell to this grid (0 keeps the exact layout)")
    d.set_defaults(func=cmd_design)

    f = sub.add_parser("forward", help="limit gaps of a cell, two independent ways")
    f.add_argument("--cell", required=True)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_forward)

    b = sub.add_parser("bands", help="fiber eigenvalues on a phase grid")
    b.add_argument("--cell", required=True)
    b.add_argument("--eps", type=float, required=True)
    b.add_argument("--mesh", type=int, required=True)
    b.add_argument("--phi-grid", type=int, required=True)
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--svg")
    b.set_defaults(func=cmd_bands)

    v = sub.add_parser("verify", help="convergence of the gap edges as eps shrinks")
    v.add_argument("--cell", required=True)
    v.add_argument("--eps-list", required=True)
    v.add_argument("--mesh", type=int, required=True)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_verify)

    lam = sub.add_parser("lambda", help="decoupling thresholds of the complement")
    lam.add_argument("--cell", required=True)
    lam.add_argument("--mesh", type=int, required=True)
    lam.add_argument("--phi-grid", type=int)
    lam.set_defaults(func=cmd_lambda)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (PlacementError, AlignmentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LAYOUT
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, ConsistencyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except VerificationFailed as exc:
        print(f"verdict: FAIL ({exc})", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
