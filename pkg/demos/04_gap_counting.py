"""Count gaps below the decoupling threshold for a two-inclusion design.

Below Lambda_D / eps^2 the spectrum has at most as many gaps as there are
inclusions. The bands are sampled on a 6x6 phase grid at eps = 0.125.
"""
import numpy as np

from gapforge import TargetGaps, grid_align, inverse_design, realize_design
from gapforge.lab import gap_count_check

B = sorted(np.roots([0.7, -2.5, 2.0]).real)
cell = grid_align(realize_design(inverse_design(TargetGaps.from_edges((1.0, 2.0), B))), 48)
report = gap_count_check(cell, 0.125, 48, 6)

print(f"Lambda_D = {report.lambda_d:.4f}, window [0, {report.window:.1f}]")
for lo, hi in report.gaps:
    print(f"  gap ({lo:.4f}, {hi:.4f})")
print(f"{report.count} gap(s) for m = {report.m}:", "ok" if report.ok else "too many")
