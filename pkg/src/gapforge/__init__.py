"""Design and verification of spectral gaps for periodic delta-prime lattices."""
from .errors import (
    AlignmentError,
    ConsistencyError,
    GapforgeError,
    NumericalFailure,
    PlacementError,
    ValidationError,
)
from .gap_algebra import (
    DesignParams,
    LimitSpectra,
    SecularCoefficients,
    TargetGaps,
    coupling_rate,
    ep05_bound,
    eval_secular,
    forward_design,
    gap_roots,
    inverse_design,
    limit_dirichlet_spectrum,
    limit_neumann_eigenvalues,
    limit_neumann_matrix,
    limit_spectra,
)
from .geometry import CellSpec, InclusionShape, grid_align, measure, realize_design, validate_cell

__version__ = "0.1.0"
