"""Drift equation ``Δu + b·grad u = 0``, its conservation form, and rescaling."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diskmesh, fem
from .fem import CellVectorField, DomainError, ScalarField


@dataclass(frozen=True, eq=False)
class DriftProblem:
    """Drift problem data.

    ``g`` is boundary data (anything :func:`fem.boundary_values` accepts);
    ``f`` is an optional dual-vector source for manufactured solutions.
    """

    mesh: diskmesh.TriMesh
    b: CellVectorField
    g: object = 0.0
    f: np.ndarray | None = None


def drift_matrix(mesh, b: CellVectorField):
    """Weak form ``int grad u·grad phi - int (b·grad u) phi``."""
    return fem.assemble_stiffness(mesh) - fem.assemble_drift(mesh, b)


def solve_drift(prob: DriftProblem, x0=None) -> ScalarField:
    """Nonsymmetric solve of ``-Δu - b·grad u = f`` with trace ``g``."""
    mesh = prob.mesh
    f = np.zeros(mesh.n_vertices) if prob.f is None else np.asarray(prob.f, dtype=float)
    return fem.solve_constrained(mesh, drift_matrix(mesh, prob.b), f, prob.g, symmetric=False, x0=x0, what="solve_drift")


def conservation_matrix(A: ScalarField, B: ScalarField):
    """Weak form ``int (A grad u - B perp grad u)·grad phi``.

    ``A`` and ``B`` are averaged to cells; the ``B`` part is skew-symmetric
    and annihilated on interior rows when ``B`` is constant.
    """
    if np.any(A.values <= 0):
        raise DomainError("conservation form needs A > 0 at every node")
    mesh = A.mesh
    return fem.assemble_stiffness(mesh, A.cell_average()) - fem.assemble_skew(mesh, B.cell_average())


def solve_conservation(A: ScalarField, B: ScalarField, g=0.0, f=None, x0=None) -> ScalarField:
    """Solve ``-div(A grad u - B perp grad u) = A f`` with trace ``g``.

    The source is scaled nodewise by ``A`` so that the solution matches
    :func:`solve_drift` with the same ``f``.
    """
    mesh = A.mesh
    K = conservation_matrix(A, B)
    rhs = np.zeros(mesh.n_vertices) if f is None else A.values * np.asarray(f, dtype=float)
    skew = np.ptp(B.values) > 0
    return fem.solve_constrained(mesh, K, rhs, g, symmetric=not skew, x0=x0, what="solve_conservation")


def uniqueness_energy(A: ScalarField, B: ScalarField, x0=None) -> tuple[float, ScalarField]:
    """Solve the homogeneous conservation problem with zero trace and return ``int A |grad v|^2``.

    A random ``x0`` exercises uniqueness of the discrete system: the solver
    must still land on ``v = 0``.
    """
    v = solve_conservation(A, B, 0.0, None, x0=x0)
    g = fem.gradient(v).values
    energy = float(np.sum(A.cell_average() * np.sum(g**2, axis=1) * A.mesh.areas))
    return energy, v


# ---------------------------------------------------------------------------
# rescaling


def _check_ball(center, radius):
    c = np.asarray(center, dtype=float)
    if radius <= 0 or np.hypot(*c) + radius > 1.0 + 1e-12:
        raise DomainError(f"ball B_{radius}({tuple(c)}) is not contained in the unit disk")
    return c


def rescale(field, center=(0.0, 0.0), radius: float = 1.0, mesh=None):
    """Pull a field on ``B_r(x0)`` back to the unit disk.

    Scalars: ``u~(x) = u(x0 + r x)`` at the target mesh vertices.
    Cell vectors: ``b~(x) = r b(x0 + r x)`` at the target centroids.
    """
    c = _check_ball(center, radius)
    target = field.mesh if mesh is None else mesh
    if isinstance(field, ScalarField):
        pts = c + radius * target.vertices
        return ScalarField(target, fem.evaluate(field, pts))
    pts = c + radius * target.centroids
    return CellVectorField(target, radius * fem.evaluate(field, pts))


def l2_on_ball(field: CellVectorField, center, radius: float) -> float:
    """L2 norm of a cell field over the cells whose centroid lies in ``B_r(x0)``."""
    c = _check_ball(center, radius)
    mesh = field.mesh
    inside = np.linalg.norm(mesh.centroids - c, axis=1) <= radius
    return float(np.sqrt(np.sum(np.sum(field.values[inside] ** 2, axis=1) * mesh.areas[inside])))


# ---------------------------------------------------------------------------
# problem bundles


def write_bundle(prob: DriftProblem, directory) -> None:
    """Directory with ``mesh.txt``, ``b.field``, ``g.csv`` and optional ``f.field``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    diskmesh.write_mesh(prob.mesh, d / "mesh.txt")
    fem.write_field(prob.b, d / "b.field")
    gb = fem.boundary_values(prob.mesh, prob.g)
    with open(d / "g.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vertex", "value"])
        for i, v in zip(prob.mesh.boundary_vertices, gb):
            w.writerow([int(i), f"{v:.17g}"])
    if prob.f is not None:
        fem.write_field(np.asarray(prob.f), d / "f.field", kind="dual")


def read_bundle(directory) -> DriftProblem:
    d = Path(directory)
    mesh = diskmesh.read_mesh(d / "mesh.txt")
    b = fem.read_field(mesh, d / "b.field")
    if not isinstance(b, CellVectorField):
        raise ValueError(f"{d / 'b.field'}: expected a vector field")
    values = {}
    with open(d / "g.csv", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if lineno == 1 and row and row[0] == "vertex":
                continue
            try:
                values[int(row[0])] = float(row[1])
            except (IndexError, ValueError):
                raise ValueError(f"{d / 'g.csv'}:{lineno}: malformed row {row!r}") from None
    missing = [int(i) for i in mesh.boundary_vertices if int(i) not in values]
    if missing:
        raise ValueError(f"{d / 'g.csv'}: no value for boundary vertices {missing[:5]}")
    g = np.array([values[int(i)] for i in mesh.boundary_vertices])
    f = None
    if (d / "f.field").exists():
        f = fem.read_field(mesh, d / "f.field")
        f = f.values if isinstance(f, ScalarField) else np.asarray(f)
    return DriftProblem(mesh, b, g, f)
