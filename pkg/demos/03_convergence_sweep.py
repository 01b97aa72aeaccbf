"""Watch the gap edges approach their limits as the period shrinks.

The errors fall by a factor of four per halving of eps for this cell,
a log-log slope of two. Each row also shows the mesh margin, the
estimated discretization error from comparing against a coarser grid.
"""
from gapforge import DesignParams, grid_align, realize_design
from gapforge.lab import convergence_sweep

cell = grid_align(realize_design(DesignParams((0.25,), (0.25,))), 32)
report = convergence_sweep(cell, [0.5, 0.25, 0.125, 0.0625], 32)

for s in report.series:
    print(s.name, "limit", s.limit)
    for eps, lam, err, margin in zip(report.eps, s.lambdas, s.errors, s.margins):
        print(f"  eps={eps:<7} lambda={lam:.10f}  err={err:.3e}  mesh margin={margin:.1e}")
    print(f"  fitted slope {report.slope(s):.3f}")
print()
print("\n".join(report.verdict_lines()))
