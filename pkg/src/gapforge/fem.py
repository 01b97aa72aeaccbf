"""Bilinear finite elements for the fiber problems on the unit cell.

Nodes lying on an inclusion boundary carry two degrees of freedom, one trace
from inside the inclusion and one from outside, so the discrete space is the
broken H^1 space of the cell cut along the interfaces. The interface form
couples the two traces through the jump.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalFailure, ValidationError
from .geometry import CellSpec, is_grid_aligned

__all__ = [
    "StructuredMesh",
    "DofMap",
    "BCMode",
    "AssembledSystem",
    "EigenResult",
    "build_mesh",
    "build_dofmap",
    "assemble",
    "solve_smallest",
    "fiber_eigenvalues",
    "lambda_phi",
    "element_matrices",
    "dump_coo",
]

DENSE_LIMIT = 1500
HERMITIAN_TOL = 1e-13
SHIFT = -1.0


@dataclass
class StructuredMesh:
    """Uniform N x N grid of square elements on the unit cell.

    Node ``(i, j)`` sits at ``(i/N, j/N)`` and has index ``i + (N+1) j``.
    ``labels[e]`` is 0 for the complement and ``j + 1`` inside inclusion
    ``j``. ``boxes[j]`` gives the integer bounds ``(i0, j0, i1, j1)``.
    """

    N: int
    nodes: np.ndarray
    elements: np.ndarray
    labels: np.ndarray
    boxes: list[tuple[int, int, int, int]]
    interface_edges: list[np.ndarray]

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def node(self, i, j):
        return i + (self.N + 1) * j


def _box_boundary_nodes(box, N):
    i0, j0, i1, j1 = box
    out = []
    for j in range(j0, j1 + 1):
        for i in range(i0, i1 + 1):
            if i in (i0, i1) or j in (j0, j1):
                out.append(i + (N + 1) * j)
    return out


def _box_boundary_edges(box, N):
    i0, j0, i1, j1 = box
    n = lambda i, j: i + (N + 1) * j  # noqa: E731
    edges = []
    for i in range(i0, i1):
        edges.append((n(i, j0), n(i + 1, j0)))
        edges.append((n(i, j1), n(i + 1, j1)))
    for j in range(j0, j1):
        edges.append((n(i0, j), n(i0, j + 1)))
        edges.append((n(i1, j), n(i1, j + 1)))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def build_mesh(cell: CellSpec, N: int) -> StructuredMesh:
    """Structured mesh whose lines contain every inclusion boundary."""
    if N < 2:
        raise ValidationError(f"resolution must be at least 2, got {N}")
    if not is_grid_aligned(cell, N):
        raise ValidationError(
            f"cell is not aligned with the {N}x{N} grid; run geometry.grid_align(cell, {N}) first"
        )
    ii, jj = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="xy")
    nodes = np.column_stack([ii.ravel() / N, jj.ravel() / N])

    ex, ey = np.meshgrid(np.arange(N), np.arange(N), indexing="xy")
    ex, ey = ex.ravel(), ey.ravel()
    n0 = ex + (N + 1) * ey
    elements = np.column_stack([n0, n0 + 1, n0 + N + 2, n0 + N + 1])

    labels = np.zeros(N * N, dtype=np.int64)
    boxes = []
    edges = []
    for k, s in enumerate(cell.inclusions):
        box = tuple(int(round(v * N)) for v in s.bounds)
        boxes.append(box)
        i0, j0, i1, j1 = box
        inside = (ex >= i0) & (ex < i1) & (ey >= j0) & (ey < j1)
        if np.any(labels[inside] != 0):
            raise ValidationError(f"inclusion {k} overlaps another inclusion")
        labels[inside] = k + 1
        edges.append(_box_boundary_edges(box, N))
    return StructuredMesh(N, nodes, elements, labels, boxes, edges)


@dataclass
class DofMap:
    """Degrees of freedom of the broken space.

    DOF ``n`` for ``n < n_nodes`` is the (exterior) value at node ``n``;
    ``interior[j]`` maps a boundary node of inclusion ``j`` to its interior
    trace DOF.
    """

    n_dofs: int
    element_dofs: np.ndarray
    interior: list[dict[int, int]]
    boundary_nodes: np.ndarray

    @property
    def n_interface(self) -> int:
        return sum(len(d) for d in self.interior)


def build_dofmap(mesh: StructuredMesh) -> DofMap:
    N = mesh.N
    next_dof = mesh.n_nodes
    interior = []
    element_dofs = mesh.elements.copy()
    for k, box in enumerate(mesh.boxes):
        nodes = _box_boundary_nodes(box, N)
        mapping = {n: next_dof + t for t, n in enumerate(nodes)}
        next_dof += len(nodes)
        interior.append(mapping)
        idx = np.flatnonzero(mesh.labels == k + 1)
        sub = element_dofs[idx]
        lookup = np.vectorize(lambda n: mapping.get(n, n), otypes=[np.int64])
        element_dofs[idx] = lookup(sub)
    i = np.arange(N + 1)
    border = np.unique(np.concatenate([
        i, i + (N + 1) * N, (N + 1) * i, (N + 1) * i + N,
    ]))
    return DofMap(next_dof, element_dofs, interior, border)


@dataclass(frozen=True)
class BCMode:
    """Boundary condition on the cell walls.

    ``kind`` is ``"neumann"``, ``"dirichlet"`` or ``"quasi"``; quasi-periodic
    modes carry the phase pair ``phi`` with components in ``[0, 2 pi)``.
    """

    kind: str
    phi: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in ("neumann", "dirichlet", "quasi"):
            raise ValidationError(f"unknown boundary mode {self.kind!r}")
        if self.kind == "quasi":
            if self.phi is None or len(self.phi) != 2:
                raise ValidationError("quasi-periodic mode needs a phase pair")
            phi = tuple(float(p) for p in self.phi)
            if not all(0.0 <= p < 2 * math.pi for p in phi):
                raise ValidationError(f"phase components must lie in [0, 2pi), got {phi}")
            object.__setattr__(self, "phi", phi)
        elif self.phi is not None:
            raise ValidationError(f"{self.kind} mode takes no phase")

    @classmethod
    def neumann(cls):
        return cls("neumann")

    @classmethod
    def dirichlet(cls):
        return cls("dirichlet")

    @classmethod
    def quasi(cls, phi1, phi2):
        return cls("quasi", (phi1 % (2 * math.pi), phi2 % (2 * math.pi)))

    @property
    def label(self) -> str:
        if self.kind == "quasi":
            return f"quasi({self.phi[0]:.6g},{self.phi[1]:.6g})"
        return self.kind


def element_matrices(h: float) -> tuple[np.ndarray, np.ndarray]:
    """Stiffness and mass of a square bilinear element of side ``h`` (2x2 Gauss)."""
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
    g = 1.0 / math.sqrt(3.0)
    K = np.zeros((4, 4))
    M = np.zeros((4, 4))
    jac = h / 2.0
    for xi in (-g, g):
        for eta in (-g, g):
            N = (1 + corners[:, 0] * xi) * (1 + corners[:, 1] * eta) / 4
            dxi = corners[:, 0] * (1 + corners[:, 1] * eta) / 4
            deta = corners[:, 1] * (1 + corners[:, 0] * xi) / 4
            grad = np.column_stack([dxi, deta]) / jac
            K += grad @ grad.T * jac**2
            M += np.outer(N, N) * jac**2
    return K, M


def _edge_mass(h):
    return h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])


def _scatter(element_dofs, block, n):
    ne, nl = element_dofs.shape
    rows = np.repeat(element_dofs, nl, axis=1).ravel()
    cols = np.tile(element_dofs, (1, nl)).ravel()
    vals = np.tile(block.ravel(), ne)
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def _jump_matrix(mesh: StructuredMesh, dofmap: DofMap, strengths) -> sp.csr_matrix:
    Me = _edge_mass(mesh.h)
    block = np.block([[Me, -Me], [-Me, Me]])
    parts = []
    for k, edges in enumerate(mesh.interface_edges):
        if len(edges) == 0:
            continue
        interior = dofmap.interior[k]
        inner = np.vectorize(interior.__getitem__, otypes=[np.int64])(edges)
        dofs = np.hstack([edges, inner])
        parts.append(strengths[k] * _scatter(dofs, block, dofmap.n_dofs))
    if not parts:
        return sp.csr_matrix((dofmap.n_dofs, dofmap.n_dofs))
    return sum(parts[1:], parts[0]).tocsr()


def _prolongation(mesh: StructuredMesh, dofmap: DofMap, mode: BCMode, keep=None) -> sp.csr_matrix:
    """Map reduced DOFs to full DOFs for the given wall condition.

    ``keep`` restricts the retained DOFs further (used to drop DOFs that no
    assembled element touches).
    """
    n = dofmap.n_dofs
    N = mesh.N
    full = np.arange(n)
    if keep is None:
        keep = np.ones(n, dtype=bool)
    if mode.kind == "neumann":
        masters = full[keep]
        return sp.identity(n, format="csr")[:, masters]
    if mode.kind == "dirichlet":
        mask = keep.copy()
        mask[dofmap.boundary_nodes] = False
        return sp.identity(n, format="csr")[:, full[mask]]

    p1 = np.exp(1j * mode.phi[0])
    p2 = np.exp(1j * mode.phi[1])
    target = np.arange(n)
    factor = np.ones(n, dtype=complex)
    for t in range(N + 1):
        # right wall folds onto left wall, top wall onto bottom
        target[N + (N + 1) * t] = (N + 1) * t
        factor[N + (N + 1) * t] = p1
        target[t + (N + 1) * N] = t
        factor[t + (N + 1) * N] = p2
    target[N + (N + 1) * N] = 0
    factor[N + (N + 1) * N] = p1 * p2
    is_master = (target == full) & keep
    masters = full[is_master]
    col_of = -np.ones(n, dtype=np.int64)
    col_of[masters] = np.arange(len(masters))
    rows = full[keep | (target != full)]
    cols = col_of[target[rows]]
    if np.any(cols < 0):
        raise ValidationError("quasi-periodic folding hit an unassembled master DOF")
    return sp.csr_matrix((factor[rows], (rows, cols)), shape=(n, len(masters)))


@dataclass
class AssembledSystem:
    """Reduced pencil ``(H, M)`` of one fiber problem.

    ``P`` maps reduced coefficient vectors back to the full DOF space.
    """

    H: sp.csr_matrix
    M: sp.csr_matrix
    eps: float
    mode: BCMode
    P: sp.csr_matrix
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.H.shape[0]


def _check_system(H, M):
    diff = abs(H - H.conj().T)
    scale = abs(H).max() if H.nnz else 1.0
    if diff.nnz and diff.max() > HERMITIAN_TOL * scale:
        raise NumericalFailure(f"assembled H is not Hermitian (defect {diff.max():.3e})")
    # every DOF is covered by a positive definite element mass, so a positive
    # diagonal certifies M > 0
    d = M.diagonal().real
    if np.any(d <= 0):
        raise NumericalFailure("mass matrix has an uncovered degree of freedom")


def assemble(mesh: StructuredMesh, dofmap: DofMap, cell: CellSpec, eps: float,
             mode: BCMode, region: str = "all") -> AssembledSystem:
    """Assemble ``(1/eps^2) stiffness + interface jump form`` and the mass matrix.

    With ``region="exterior"`` only complement elements are assembled and no
    jump term is added, which gives the complement Laplacian with natural
    conditions on the interfaces.
    """
    if not eps > 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    if len(cell.inclusions) != len(mesh.boxes):
        raise ValidationError("mesh and cell describe different inclusions")
    Ke, Me = element_matrices(mesh.h)
    if region == "all":
        edofs = dofmap.element_dofs
    elif region == "exterior":
        edofs = dofmap.element_dofs[mesh.labels == 0]
    else:
        raise ValidationError(f"unknown region {region!r}")
    n = dofmap.n_dofs
    K = _scatter(edofs, Ke, n)
    Mf = _scatter(edofs, Me, n)
    Hf = K / eps**2
    if region == "all":
        Hf = Hf + _jump_matrix(mesh, dofmap, cell.strengths)
    keep = np.zeros(n, dtype=bool)
    keep[np.unique(edofs)] = True

    P = _prolongation(mesh, dofmap, mode, keep)
    Ph = P.conj().T
    H = (Ph @ Hf @ P).tocsr()
    M = (Ph @ Mf @ P).tocsr()
    _check_system(H, M)
    H = ((H + H.conj().T) * 0.5).tocsr()
    M = ((M + M.conj().T) * 0.5).tocsr()
    if mode.kind != "quasi":
        H, M = H.real.tocsr(), M.real.tocsr()
    return AssembledSystem(H, M, float(eps), mode, P.tocsr(), {"region": region, "N": mesh.N})


@dataclass
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray | None
    residuals: np.ndarray


def _residuals(H, M, vals, vecs):
    Mu = M @ vecs
    R = H @ vecs - Mu * vals[None, :]
    return np.linalg.norm(R, axis=0) / np.linalg.norm(Mu, axis=0)


def solve_smallest(system: AssembledSystem, k: int, tol: float = 1e-8,
                   return_vectors: bool = False) -> EigenResult:
    """The ``k`` smallest eigenvalues of ``H u = lambda M u``, ascending.

    Small systems use a dense Hermitian solver; larger ones use shift-invert
    Lanczos about ``-1`` with a fixed start vector, so results are
    reproducible.
    """
    n = system.n
    if not 1 <= k <= n:
        raise ValidationError(f"cannot compute {k} eigenvalues of a {n}-dimensional problem")
    if not tol > 0:
        raise ValidationError("tol must be positive")
    H, M = system.H, system.M
    if n <= DENSE_LIMIT or k >= n - 1:
        vals, vecs = scipy.linalg.eigh(H.toarray(), M.toarray(), subset_by_index=[0, k - 1])
    else:
        v0 = np.random.default_rng(12345).standard_normal(n)
        if np.iscomplexobj(H.data):
            v0 = v0 + 0j
        try:
            vals, vecs = spla.eigsh(H.tocsc(), k=k, M=M.tocsc(), sigma=SHIFT, which="LM",
                                    v0=v0, tol=0.0, maxiter=max(1000, 20 * n))
        except spla.ArpackNoConvergence as exc:
            raise NumericalFailure(
                f"shift-invert Lanczos did not converge for {system.mode.label}",
                residuals=getattr(exc, "eigenvalues", None),
            ) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order].real, vecs[:, order]
    res = _residuals(H, M, vals, vecs)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if np.any(res > tol) or np.any(vals < -tol * scale):
        raise NumericalFailure(
            f"eigenpairs for {system.mode.label} miss tolerance {tol:g}: "
            f"residuals {np.array2string(res, precision=2)}",
            residuals=res,
        )
    return EigenResult(vals, vecs if return_vectors else None, res)


def fiber_eigenvalues(cell: CellSpec, eps: float, N: int, mode: BCMode, k: int,
                      tol: float = 1e-8, mesh=None, dofmap=None) -> np.ndarray:
    """Convenience wrapper: mesh, assemble and solve one fiber problem."""
    mesh = mesh if mesh is not None else build_mesh(cell, N)
    dofmap = dofmap if dofmap is not None else build_dofmap(mesh)
    system = assemble(mesh, dofmap, cell, eps, mode)
    return solve_smallest(system, k, tol).values


def lambda_phi(cell: CellSpec, phi, N: int, tol: float = 1e-8, mesh=None, dofmap=None) -> float:
    """Lowest eigenvalue of the complement Laplacian, natural on the interfaces.

    ``phi`` is a phase pair for quasi-periodic walls, or ``"dirichlet"`` (or a
    :class:`BCMode`) for the Dirichlet wall bound.
    """
    if isinstance(phi, BCMode):
        mode = phi
    elif isinstance(phi, str):
        mode = BCMode(phi)
    else:
        mode = BCMode.quasi(*phi)
    if mode.kind == "neumann":
        raise ValidationError("the Neumann wall problem has a trivial zero eigenvalue")
    mesh = mesh if mesh is not None else build_mesh(cell, N)
    dofmap = dofmap if dofmap is not None else build_dofmap(mesh)
    system = assemble(mesh, dofmap, cell, 1.0, mode, region="exterior")
    return float(solve_smallest(system, 1, tol).values[0])


def dump_coo(path, A) -> None:
    """Write ``A`` as ``row col re im`` lines (0-based indices)."""
    C = sp.coo_matrix(A)
    order = np.lexsort((C.col, C.row))
    data = C.data.astype(complex)
    with open(path, "w") as fh:
        fh.write(f"% {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for t in order:
            fh.write(f"{C.row[t]} {C.col[t]} {float(data[t].real)!r} {float(data[t].imag)!r}\n")
