"""P1 finite elements on an interval.

The boundary of an interval is its two end points, so boundary traces are
plain nodal values and the boundary mass matrix is a 0/1 selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.linalg.lapack import dgtsv
from scipy.sparse.linalg import splu

from .errors import AssemblyError, DomainError, NumericalBlowup, PreconditionError


@dataclass(frozen=True)
class SpaceMesh:
    coords: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    dimension: int = 1

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        elements = np.asarray(self.elements, dtype=np.int64)
        boundary = np.asarray(self.boundary, dtype=np.int64)
        if self.dimension != 1:
            raise DomainError("only interval meshes are supported")
        if elements.ndim != 2 or elements.shape[1] != 2:
            raise AssemblyError("interval elements need exactly two nodes")
        if elements.size and (elements.min() < 0 or elements.max() >= coords.size):
            raise AssemblyError("element references a missing node")
        for name, arr in (("coords", coords), ("elements", elements), ("boundary", boundary)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self) -> int:
        return self.coords.size

    @property
    def n_boundary(self) -> int:
        return self.boundary.size

    @property
    def h(self) -> float:
        return float(np.max(self.element_sizes()))

    def element_sizes(self) -> np.ndarray:
        return np.abs(np.diff(self.coords[self.elements], axis=1)[:, 0])

    @property
    def extent(self) -> tuple[float, float]:
        return float(self.coords.min()), float(self.coords.max())


def interval_mesh(n_elements: int, a: float = 0.0, b: float = 1.0) -> SpaceMesh:
    if n_elements < 1 or not b > a:
        raise DomainError("need n_elements >= 1 and b > a")
    coords = np.linspace(a, b, n_elements + 1)
    elements = np.column_stack([np.arange(n_elements), np.arange(1, n_elements + 1)])
    return SpaceMesh(coords, elements, np.array([0, n_elements]))


def mesh_from_nodes(coords) -> SpaceMesh:
    coords = np.sort(np.asarray(coords, dtype=float))
    n = coords.size - 1
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return SpaceMesh(coords, elements, np.array([0, n]))


def read_mesh(path) -> SpaceMesh:
    """Read a plain-text node/element listing.

    Format::

        nodes N
        x_0
        ...
        elements E
        i j
        ...

    Blank lines and ``#`` comments are ignored.  Boundary nodes are those
    belonging to exactly one element.
    """
    lines = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    try:
        head, n = lines[0].split()
        assert head == "nodes"
        n = int(n)
        coords = np.array([float(s) for s in lines[1:1 + n]])
        head, e = lines[1 + n].split()
        assert head == "elements"
        e = int(e)
        elements = np.array([[int(v) for v in s.split()] for s in lines[2 + n:2 + n + e]])
    except (AssertionError, ValueError, IndexError) as exc:
        raise AssemblyError(f"malformed mesh listing {path}: {exc}") from exc
    if coords.size != n or elements.shape != (e, 2):
        raise AssemblyError(f"malformed mesh listing {path}")
    counts = np.bincount(elements.ravel(), minlength=n)
    return SpaceMesh(coords, elements, np.flatnonzero(counts == 1))


def write_mesh(mesh: SpaceMesh, path) -> None:
    out = [f"nodes {mesh.n_nodes}"]
    out += [repr(float(x)) for x in mesh.coords]
    out.append(f"elements {len(mesh.elements)}")
    out += [f"{i} {j}" for i, j in mesh.elements]
    Path(path).write_text("\n".join(out) + "\n")


@dataclass(frozen=True)
class FemMatrices:
    M: sp.csr_matrix
    K: sp.csr_matrix
    B: sp.csr_matrix  # (n_nodes, n_boundary): boundary load from boundary values
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return self.M.shape[0]

    def boundary_load(self, g) -> np.ndarray:
        """B @ g for one slice (n_boundary,) or a series (n_t, n_boundary)."""
        g = np.asarray(g, dtype=float)
        return (self.B @ g.T).T if g.ndim == 2 else self.B @ g

    def trace(self, u) -> np.ndarray:
        """B^T u: boundary values of nodal fields, time along axis 0."""
        u = np.asarray(u, dtype=float)
        return (self.B.T @ u.T).T if u.ndim == 2 else self.B.T @ u


def _check_elements(mesh: SpaceMesh) -> np.ndarray:
    he = mesh.element_sizes()
    if np.any(~np.isfinite(he)) or np.any(he <= 0):
        bad = int(np.flatnonzero(~(he > 0))[0])
        raise AssemblyError(f"degenerate element {bad} (length {he[bad]})")
    return he


def _scatter(mesh: SpaceMesh, local: np.ndarray) -> sp.csr_matrix:
    """Sum element matrices local[e, a, b] into a global CSR matrix."""
    el = mesh.elements
    rows = np.repeat(el, 2, axis=1).ravel()
    cols = np.tile(el, (1, 2)).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble(mesh: SpaceMesh) -> FemMatrices:
    he = _check_elements(mesh)
    ref_m = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    ref_k = np.array([[1.0, -1.0], [-1.0, 1.0]])
    M = _scatter(mesh, he[:, None, None] * ref_m)
    K = _scatter(mesh, ref_k[None, :, :] / he[:, None, None])
    nb = mesh.n_boundary
    B = sp.csr_matrix((np.ones(nb), (mesh.boundary, np.arange(nb))), shape=(mesh.n_nodes, nb))
    return FemMatrices(M, K, B)


def assemble_weighted(mesh: SpaceMesh, w) -> sp.csr_matrix:
    """Mass matrix of int w phi_i phi_j with w nodally interpolated.

    The underlying trilinear form is symmetric in (w, u, v), so
    ``assemble_weighted(mesh, w) @ u == assemble_weighted(mesh, u) @ w``.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (mesh.n_nodes,):
        raise PreconditionError(f"weight has shape {w.shape}, expected ({mesh.n_nodes},)")
    if not np.all(np.isfinite(w)):
        raise NumericalBlowup("non-finite weight in assemble_weighted")
    he = _check_elements(mesh)
    w1 = w[mesh.elements[:, 0]]
    w2 = w[mesh.elements[:, 1]]
    local = np.empty((he.size, 2, 2))
    local[:, 0, 0] = (3.0 * w1 + w2) / 12.0
    local[:, 1, 1] = (w1 + 3.0 * w2) / 12.0
    local[:, 0, 1] = local[:, 1, 0] = (w1 + w2) / 12.0
    return _scatter(mesh, he[:, None, None] * local)


def neumann_extension(mesh: SpaceMesh, mats: FemMatrices, g_slice) -> np.ndarray:
    """Discrete lift G of boundary data: (K + M) G = B g.

    Also accepts a series of slices of shape (n_t, n_boundary); the
    factorization is reused across slices.
    """
    g = np.asarray(g_slice, dtype=float)
    if g.shape[-1] != mesh.n_boundary:
        raise PreconditionError("boundary data must cover every boundary node")
    lu = mats._cache.get("ext_lu")
    if lu is None:
        lu = splu((mats.K + mats.M).tocsc())
        mats._cache["ext_lu"] = lu
    rhs = mats.boundary_load(g)
    G = lu.solve(np.ascontiguousarray(rhs.T)).T if g.ndim == 2 else lu.solve(rhs)
    if not np.all(np.isfinite(G)):
        raise NumericalBlowup("Neumann extension solve produced non-finite values")
    return G


def h1_norm(mats: FemMatrices, u) -> float:
    u = np.asarray(u, dtype=float)
    return float(np.sqrt(u @ (mats.K @ u) + u @ (mats.M @ u)))


def l2_norm(mats: FemMatrices, u) -> float:
    u = np.asarray(u, dtype=float)
    return float(np.sqrt(u @ (mats.M @ u)))


class Tridiagonal:
    """Tridiagonal matrix (lower, diag, upper) on a chain-ordered interval mesh.

    Used by the time steppers, which rebuild and solve one such system per
    step; ``LAPACK ``gtsv`` keeps each solve O(n).
    """

    __slots__ = ("lower", "diag", "upper")

    def __init__(self, lower, diag, upper):
        self.lower = lower
        self.diag = diag
        self.upper = upper

    @classmethod
    def symmetric(cls, diag, off):
        return cls(off, diag, off)

    @classmethod
    def from_sparse(cls, A):
        A = sp.dia_matrix(A)
        return cls(A.diagonal(-1).copy(), A.diagonal().copy(), A.diagonal(1).copy())

    def __matmul__(self, x):
        y = self.diag * x
        y[:-1] += self.upper * x[1:]
        y[1:] += self.lower * x[:-1]
        return y

    def __add__(self, other):
        return Tridiagonal(self.lower + other.lower, self.diag + other.diag, self.upper + other.upper)

    def __mul__(self, s):
        return Tridiagonal(self.lower * s, self.diag * s, self.upper * s)

    __rmul__ = __mul__

    @property
    def T(self):
        return Tridiagonal(self.upper, self.diag, self.lower)

    def scale_columns(self, s):
        """self @ diag(s)."""
        return Tridiagonal(self.lower * s[:-1], self.diag * s, self.upper * s[1:])

    def banded(self):
        n = self.diag.size
        ab = np.zeros((3, n))
        ab[0, 1:] = self.upper
        ab[1] = self.diag
        ab[2, :-1] = self.lower
        return ab

    def solve(self, rhs):
        x, info = dgtsv(self.lower, self.diag, self.upper, rhs)[3:]
        if info > 0:
            raise NumericalBlowup(f"singular tridiagonal system (pivot {info})")
        return x

    def toarray(self):
        return (np.diag(self.diag) + np.diag(self.upper, 1) + np.diag(self.lower, -1))


def is_chain(mesh: SpaceMesh) -> bool:
    el = mesh.elements
    n = mesh.n_nodes
    return (el.shape[0] == n - 1 and np.array_equal(el[:, 0], np.arange(n - 1))
            and np.array_equal(el[:, 1], np.arange(1, n)))


def weighted_bands(mesh: SpaceMesh, w):
    """Diagonal and off-diagonal of assemble_weighted for stacked weights.

    ``w`` has shape (..., n_nodes); returns arrays of shape (..., n_nodes)
    and (..., n_nodes - 1).
    """
    he = _check_elements(mesh)
    w = np.asarray(w, dtype=float)
    wl, wr = w[..., :-1], w[..., 1:]
    off = he * (wl + wr) / 12.0
    diag = np.zeros_like(w)
    diag[..., :-1] += he * (3.0 * wl + wr) / 12.0
    diag[..., 1:] += he * (wl + 3.0 * wr) / 12.0
    return diag, off
