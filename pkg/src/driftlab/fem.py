"""P1 finite elements on a :class:`~driftlab.diskmesh.TriMesh`.

Scalars live at vertices (continuous piecewise linear), vectors live on
cells (piecewise constant).  Every integral below is computed with the exact
formula for the P0/P1 integrand, so the only error is rounding.

Right-hand sides are *dual vectors*: entry ``i`` is the integral of the
source against the hat function of vertex ``i``.  All Poisson solves use the
sign convention ``-Δw = rhs``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, bicgstab, cg
from scipy.spatial import cKDTree

from .diskmesh import TriMesh, boundary_geometry

RTOL = 1e-10


class SolverError(RuntimeError):
    """Krylov iteration failed to reach tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


class CompatibilityError(ValueError):
    """Neumann data violate the Gauss compatibility condition."""

    def __init__(self, defect: float, scale: float):
        super().__init__(f"Neumann compatibility defect {defect:.3e} (data scale {scale:.3e})")
        self.defect = defect
        self.scale = scale


class DomainError(ValueError):
    """Input outside the admissible domain of an operation."""


@dataclass(frozen=True, eq=False)
class ScalarField:
    """P1 field: one value per vertex."""

    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_vertices,):
            raise ValueError(f"expected {self.mesh.n_vertices} vertex values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar field has non-finite values")
        object.__setattr__(self, "values", v)

    def __add__(self, other):
        return ScalarField(self.mesh, self.values + _vals(other))

    def __sub__(self, other):
        return ScalarField(self.mesh, self.values - _vals(other))

    def __mul__(self, other):
        # nodewise product, i.e. interpolation of the product back to P1
        return ScalarField(self.mesh, self.values * _vals(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.mesh, -self.values)

    def cell_average(self) -> np.ndarray:
        return self.values[self.mesh.triangles].mean(axis=1)


@dataclass(frozen=True, eq=False)
class CellVectorField:
    """Piecewise-constant vector field: one 2-vector per triangle."""

    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_triangles, 2):
            raise ValueError(f"expected ({self.mesh.n_triangles}, 2) cell vectors, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("cell vector field has non-finite values")
        object.__setattr__(self, "values", v)

    def __add__(self, other):
        return CellVectorField(self.mesh, self.values + _vals(other))

    def __sub__(self, other):
        return CellVectorField(self.mesh, self.values - _vals(other))

    def __neg__(self):
        return CellVectorField(self.mesh, -self.values)

    def __mul__(self, scale):
        """Scale by a number or by per-cell scalars."""
        s = np.asarray(_vals(scale), dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        return CellVectorField(self.mesh, self.values * s)

    __rmul__ = __mul__

    def dot(self, other) -> np.ndarray:
        return np.einsum("ij,ij->i", self.values, _vals(other))


def _vals(x):
    return x.values if isinstance(x, (ScalarField, CellVectorField)) else x


# ---------------------------------------------------------------------------
# geometry helpers


def basis_gradients(mesh: TriMesh) -> np.ndarray:
    """(T, 3, 2) array of hat-function gradients on each triangle."""
    if "grads" not in mesh._cache:
        p = mesh.vertices[mesh.triangles]
        area2 = 2.0 * mesh.areas
        g = np.empty((mesh.n_triangles, 3, 2))
        for i in range(3):
            a, b = p[:, (i + 1) % 3], p[:, (i + 2) % 3]
            g[:, i, 0] = (a[:, 1] - b[:, 1]) / area2
            g[:, i, 1] = (b[:, 0] - a[:, 0]) / area2
        mesh._cache["grads"] = g
    return mesh._cache["grads"]


def lumped_mass(mesh: TriMesh) -> np.ndarray:
    """Integral of each hat function (row sums of the mass matrix)."""
    if "lumped" not in mesh._cache:
        m = np.zeros(mesh.n_vertices)
        np.add.at(m, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
        mesh._cache["lumped"] = m
    return mesh._cache["lumped"]


def mass_matrix(mesh: TriMesh) -> sp.csr_matrix:
    if "mass" not in mesh._cache:
        local = (np.ones((3, 3)) + np.eye(3)) / 12.0
        data = mesh.areas[:, None, None] * local[None]
        mesh._cache["mass"] = _scatter(mesh, data)
    return mesh._cache["mass"]


def _scatter(mesh: TriMesh, local: np.ndarray) -> sp.csr_matrix:
    """Sum per-cell 3x3 blocks into a global CSR matrix.

    COO duplicates are summed in a fixed order, so the result is
    bit-reproducible.
    """
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def interpolate(mesh: TriMesh, func) -> ScalarField:
    x, y = mesh.vertices.T
    return ScalarField(mesh, np.broadcast_to(np.asarray(func(x, y), dtype=float), x.shape).copy())


def sample_cells(mesh: TriMesh, func) -> CellVectorField:
    """Evaluate a vector function ``func(x, y) -> (fx, fy)`` at centroids."""
    x, y = mesh.centroids.T
    fx, fy = func(x, y)
    return CellVectorField(
        mesh, np.column_stack([np.broadcast_to(fx, x.shape), np.broadcast_to(fy, x.shape)])
    )


def area(mesh: TriMesh) -> float:
    return float(mesh.areas.sum())


def integrate(f: ScalarField) -> float:
    return float(lumped_mass(f.mesh) @ f.values)


def mean(f: ScalarField) -> float:
    return integrate(f) / area(f.mesh)


# ---------------------------------------------------------------------------
# differential operators


def gradient(f: ScalarField) -> CellVectorField:
    # differences against the first vertex make constants exactly gradient-free
    g = basis_gradients(f.mesh)
    v = f.values[f.mesh.triangles]
    d = v[:, 1:] - v[:, :1]
    return CellVectorField(f.mesh, np.einsum("tij,ti->tj", g[:, 1:], d))


def perp(g: CellVectorField) -> CellVectorField:
    """Rotate each cell vector by +90 degrees: (a, b) -> (-b, a)."""
    v = g.values
    return CellVectorField(g.mesh, np.column_stack([-v[:, 1], v[:, 0]]))


def weak_divergence(g: CellVectorField) -> np.ndarray:
    """Dual vector ``L[i] = -sum_T g_T . grad(phi_i) |T|``.

    No boundary term is included; see :func:`boundary_normal_load`.
    """
    mesh = g.mesh
    contrib = -np.einsum("tij,tj->ti", basis_gradients(mesh), g.values) * mesh.areas[:, None]
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), contrib.ravel())
    return out


def cell_load(mesh: TriMesh, c: np.ndarray) -> np.ndarray:
    """Dual vector of a per-cell constant source: ``int c phi_i``."""
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), np.repeat(np.asarray(c) * mesh.areas / 3.0, 3))
    return out


def flux_load(mesh: TriMesh, flux) -> np.ndarray:
    """Dual vector of per-boundary-edge data: ``oint flux phi_i ds``."""
    geom = boundary_geometry(mesh)
    half = np.broadcast_to(np.asarray(flux, dtype=float), geom.length.shape) * geom.length / 2.0
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.boundary_edges[:, 0], half)
    np.add.at(out, mesh.boundary_edges[:, 1], half)
    return out


def boundary_trace(g: CellVectorField, direction: str = "normal") -> np.ndarray:
    """Per-boundary-edge ``g . nu`` or ``g . tau`` using the adjacent cell value."""
    geom = boundary_geometry(g.mesh)
    vec = g.values[g.mesh.boundary_cells]
    ref = geom.normal if direction == "normal" else geom.tangent
    return np.einsum("ij,ij->i", vec, ref)


def boundary_normal_load(g: CellVectorField) -> np.ndarray:
    """Dual vector ``oint (g . nu) phi_i ds``.

    Added to :func:`weak_divergence` it gives ``int div(g) phi_i`` for the
    field restricted to the disk.
    """
    return flux_load(g.mesh, boundary_trace(g, "normal"))


def divergence_load(g: CellVectorField) -> np.ndarray:
    """Dual vector of ``div g`` on the closed disk, boundary term included."""
    return weak_divergence(g) + boundary_normal_load(g)


def nodal_divergence(g: CellVectorField) -> ScalarField:
    """Lumped-mass P1 representative of ``div g`` inside the disk."""
    return ScalarField(g.mesh, divergence_load(g) / lumped_mass(g.mesh))


def boundary_integral(mesh: TriMesh, values) -> float:
    geom = boundary_geometry(mesh)
    return float(np.sum(np.broadcast_to(np.asarray(values, dtype=float), geom.length.shape) * geom.length))


def norms(f) -> dict:
    """L2, Linf and (for P1 fields) the H1 seminorm."""
    if isinstance(f, ScalarField):
        v = f.values
        return {
            "l2": float(np.sqrt(max(v @ (mass_matrix(f.mesh) @ v), 0.0))),
            "linf": float(np.max(np.abs(v))) if v.size else 0.0,
            "h1": float(np.sqrt(np.sum(gradient(f).values ** 2 * f.mesh.areas[:, None]))),
        }
    v = f.values
    sq = np.sum(v**2, axis=1)
    return {"l2": float(np.sqrt(np.sum(sq * f.mesh.areas))), "linf": float(np.sqrt(sq.max()))}


def l2(f) -> float:
    return norms(f)["l2"]


def h1(f: ScalarField) -> float:
    return norms(f)["h1"]


# ---------------------------------------------------------------------------
# assembly


def assemble_stiffness(mesh: TriMesh, coeff=None) -> sp.csr_matrix:
    """``K[i, j] = sum_T coeff_T grad(phi_i) . grad(phi_j) |T|``."""
    g = basis_gradients(mesh)
    w = mesh.areas
    if coeff is not None:
        c = np.broadcast_to(np.asarray(coeff, dtype=float), w.shape)
        if np.any(~(c > 0)):
            raise DomainError("stiffness coefficient must be strictly positive")
        w = w * c
    local = np.einsum("tik,tjk->tij", g, g) * w[:, None, None]
    return _scatter(mesh, local)


def assemble_drift(mesh: TriMesh, b: CellVectorField) -> sp.csr_matrix:
    """``N[i, j] = int (b . grad(phi_j)) phi_i``."""
    g = basis_gradients(mesh)
    bg = np.einsum("tjk,tk->tj", g, b.values) * (mesh.areas / 3.0)[:, None]
    local = np.broadcast_to(bg[:, None, :], (mesh.n_triangles, 3, 3))
    return _scatter(mesh, np.ascontiguousarray(local))


def assemble_skew(mesh: TriMesh, coeff_cells: np.ndarray) -> sp.csr_matrix:
    """``C[i, j] = sum_T c_T (perp grad(phi_j)) . grad(phi_i) |T|`` (skew-symmetric)."""
    g = basis_gradients(mesh)
    gp = np.stack([-g[..., 1], g[..., 0]], axis=-1)
    local = np.einsum("tjk,tik->tij", gp, g) * (np.asarray(coeff_cells) * mesh.areas)[:, None, None]
    return _scatter(mesh, local)


@dataclass(frozen=True, eq=False)
class SparseSystem:
    """Linear system with its constraint descriptor.

    ``dirichlet`` is ``(indices, values)`` or ``None``; ``mean_zero`` marks a
    pure Neumann system solved in the mean-zero subspace.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet: tuple | None = None
    mean_zero: bool = False


# ---------------------------------------------------------------------------
# solvers


def _krylov(A, b, *, symmetric: bool, M=None, x0=None, maxiter: int, what: str) -> np.ndarray:
    bnorm = np.linalg.norm(b)
    start = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=float)
    # iterate on the correction from x0; scipy short-circuits b = 0 to x = 0,
    # which would hide the start vector
    r0 = b - A @ start
    ref = bnorm if bnorm > 0 else np.linalg.norm(r0)
    if ref == 0.0:
        return start.copy()
    solver = cg if symmetric else bicgstab
    d, info = solver(A, r0, rtol=0.0, atol=RTOL * ref, maxiter=maxiter, M=M)
    x = start + d
    res = np.linalg.norm(b - A @ x) / ref
    if info != 0 or not np.all(np.isfinite(x)):
        raise SolverError(f"{what}: {'CG' if symmetric else 'BiCGStab'} did not converge (info={info})", res)
    return x


def _jacobi(diag: np.ndarray) -> LinearOperator:
    inv = 1.0 / np.where(diag != 0, diag, 1.0)
    return LinearOperator((len(diag), len(diag)), matvec=lambda v: inv * v.ravel())


def boundary_values(mesh: TriMesh, g) -> np.ndarray:
    """Resolve boundary data to an array ordered like ``mesh.boundary_vertices``.

    ``g`` may be a number, a callable ``g(x, y)``, an array over boundary
    vertices, or a :class:`ScalarField` whose trace is taken.
    """
    bv = mesh.boundary_vertices
    if isinstance(g, ScalarField):
        return g.values[bv].copy()
    if callable(g):
        x, y = mesh.vertices[bv].T
        return np.broadcast_to(np.asarray(g(x, y), dtype=float), x.shape).copy()
    return np.broadcast_to(np.asarray(g, dtype=float), bv.shape).copy()


def solve_constrained(mesh: TriMesh, matrix, rhs, g, *, symmetric=True, x0=None, what="solve") -> ScalarField:
    """Solve ``matrix w = rhs`` with Dirichlet trace ``g`` by eliminating boundary rows."""
    bv = mesh.boundary_vertices
    inner = mesh.interior_vertices
    gb = boundary_values(mesh, g)
    w = np.zeros(mesh.n_vertices)
    w[bv] = gb
    A = sp.csr_matrix(matrix)
    A_ii = A[inner][:, inner]
    r = np.asarray(rhs, dtype=float)[inner] - A[inner][:, bv] @ gb
    xi0 = None if x0 is None else np.asarray(x0, dtype=float)[inner]
    w[inner] = _krylov(
        A_ii, r, symmetric=symmetric, M=_jacobi(A_ii.diagonal()), x0=xi0,
        maxiter=10 * mesh.n_vertices, what=what,
    )
    return ScalarField(mesh, w)


def solve_dirichlet(mesh: TriMesh, rhs, g=0.0, coeff=None, x0=None) -> ScalarField:
    """Solve ``-div(coeff grad w) = rhs`` with ``w = g`` on the boundary."""
    K = assemble_stiffness(mesh, coeff)
    return solve_constrained(mesh, K, rhs, g, symmetric=True, x0=x0, what="solve_dirichlet")


def compatibility_defect(mesh: TriMesh, rhs, flux=0.0) -> tuple[float, float]:
    """Return ``(sum rhs + oint flux, |rhs|_1 + oint |flux|)``."""
    rhs = np.asarray(rhs, dtype=float)
    geom = boundary_geometry(mesh)
    fl = np.broadcast_to(np.asarray(flux, dtype=float), geom.length.shape)
    defect = float(rhs.sum() + np.sum(fl * geom.length))
    scale = float(np.abs(rhs).sum() + np.sum(np.abs(fl) * geom.length))
    return defect, scale


def solve_neumann(mesh: TriMesh, rhs, flux=0.0, compat_tol: float = 1e-2, x0=None) -> ScalarField:
    """Solve ``-Δw = rhs``, ``∂w/∂ν = flux``, ``∫w = 0``.

    ``flux`` is given per boundary edge (midpoint values).  Any remaining
    incompatibility within ``compat_tol`` is projected onto constants before
    the solve.  The singular system is made positive definite with the rank
    one term ``c m m^T`` (``m`` the lumped mass); on compatible data this
    leaves the solution unchanged and pins its mean to zero.
    """
    rhs = np.asarray(rhs, dtype=float)
    defect, scale = compatibility_defect(mesh, rhs, flux)
    if abs(defect) > compat_tol * scale + 1e-14 * max(scale, 1.0):
        raise CompatibilityError(defect, scale)
    m = lumped_mass(mesh)
    F = rhs + flux_load(mesh, flux)
    F = F - F.sum() * m / m.sum()
    K = assemble_stiffness(mesh)
    diag = K.diagonal()
    c = diag.mean() / (m @ m / len(m))
    n = mesh.n_vertices
    op = LinearOperator((n, n), matvec=lambda v: K @ v.ravel() + c * m * (m @ v.ravel()))
    w = _krylov(op, F, symmetric=True, M=_jacobi(diag + c * m * m), x0=x0, maxiter=10 * n, what="solve_neumann")
    w = w - (m @ w) / m.sum()
    return ScalarField(mesh, w)


# ---------------------------------------------------------------------------
# point location / evaluation


def locate(mesh: TriMesh, points: np.ndarray, k: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Containing cell and barycentric coordinates for each point.

    Points slightly outside the polygonal disk (between a boundary chord and
    the circle) are assigned to the nearest candidate cell and evaluated by
    linear extrapolation.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if "tree" not in mesh._cache:
        mesh._cache["tree"] = cKDTree(mesh.centroids)
    k = min(k, mesh.n_triangles)
    _, cand = mesh._cache["tree"].query(pts, k=k)
    cand = cand.reshape(len(pts), k)
    p = mesh.vertices[mesh.triangles[cand]]  # (n, k, 3, 2)
    v0, v1, v2 = p[..., 0, :], p[..., 1, :], p[..., 2, :]
    det = (v1[..., 0] - v0[..., 0]) * (v2[..., 1] - v0[..., 1]) - (v1[..., 1] - v0[..., 1]) * (v2[..., 0] - v0[..., 0])
    d = pts[:, None, :] - v0
    l1 = (d[..., 0] * (v2[..., 1] - v0[..., 1]) - d[..., 1] * (v2[..., 0] - v0[..., 0])) / det
    l2_ = ((v1[..., 0] - v0[..., 0]) * d[..., 1] - (v1[..., 1] - v0[..., 1]) * d[..., 0]) / det
    lam = np.stack([1.0 - l1 - l2_, l1, l2_], axis=-1)
    best = np.argmax(lam.min(axis=-1), axis=1)
    rows = np.arange(len(pts))
    return cand[rows, best], lam[rows, best]


def evaluate(f, points: np.ndarray) -> np.ndarray:
    cells, lam = locate(f.mesh, points)
    if isinstance(f, ScalarField):
        return np.einsum("ij,ij->i", f.values[f.mesh.triangles[cells]], lam)
    return f.values[cells]


# ---------------------------------------------------------------------------
# field export


def write_field(f, path, kind: str = "cell") -> None:
    """Write the ``diskfield v1`` text format.

    Plain arrays are written with ``kind`` (``cell`` for per-triangle
    scalars, ``dual`` for per-vertex load vectors).
    """
    if isinstance(f, ScalarField):
        lines = ["diskfield v1", f"scalar {f.mesh.n_vertices}"] + [f"{v:.17g}" for v in f.values]
    elif isinstance(f, CellVectorField):
        lines = ["diskfield v1", f"vector {f.mesh.n_triangles}"] + [f"{a:.17g} {b:.17g}" for a, b in f.values]
    else:
        arr = np.asarray(f, dtype=float)
        lines = ["diskfield v1", f"{kind} {len(arr)}"] + [f"{v:.17g}" for v in arr]
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(mesh: TriMesh, path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "diskfield v1":
        raise ValueError(f"{path}:1: not a diskfield v1 file")
    try:
        kind, count = lines[1].split()
        count = int(count)
    except (IndexError, ValueError):
        raise ValueError(f"{path}:2: malformed header") from None
    rows = []
    for lineno, ln in enumerate(lines[2 : 2 + count], start=3):
        try:
            rows.append([float(s) for s in ln.split()])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: cannot parse {ln!r}") from None
        if kind == "vector" and len(rows[-1]) != 2:
            raise ValueError(f"{path}:{lineno}: expected 2 components")
    if len(rows) != count:
        raise ValueError(f"{path}: expected {count} rows, found {len(rows)}")
    arr = np.array(rows)
    if kind == "scalar":
        return ScalarField(mesh, arr[:, 0])
    if kind == "vector":
        return CellVectorField(mesh, arr)
    if kind in ("cell", "dual"):
        return arr[:, 0]
    raise ValueError(f"{path}:2: unknown field kind {kind!r}")
