"""Hardy-space surrogate on a periodic grid, Jacobian fields and Wente solves.

The H^1(R^2) norm ``|f|_1 + |R1 f|_1 + |R2 f|_1`` is approximated on the
square ``[-L, L)^2`` sampled at ``N x N`` nodes, with the Riesz transforms
applied as FFT multipliers.  Disk fields are zero-extended.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fem
from .fem import DomainError, ScalarField

DEFAULT_L = 4.0
DEFAULT_N = 256


class GridConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PeriodicGrid:
    L: float = DEFAULT_L
    N: int = DEFAULT_N

    def __post_init__(self):
        if self.N < 2 or self.N & (self.N - 1):
            raise GridConfigError(f"grid size N must be a power of two, got {self.N}")
        if self.L < 2:
            raise GridConfigError(f"half-width L must be >= 2, got {self.L}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    def axis(self) -> np.ndarray:
        return -self.L + self.spacing * np.arange(self.N)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """``(X, Y)`` with ``X[i, j] = x_i``, ``Y[i, j] = y_j`` (row index is x)."""
        a = self.axis()
        return np.meshgrid(a, a, indexing="ij")


def riesz_multiplier(N: int, j: int) -> np.ndarray:
    """``-i xi_j / |xi|`` on the FFT frequency lattice.

    Zero at the origin and on the Nyquist lines, where the sign of the
    frequency is ambiguous; this keeps the transform of real data real.
    """
    if N < 2 or N & (N - 1):
        raise GridConfigError(f"grid size N must be a power of two, got {N}")
    k = np.fft.fftfreq(N) * N
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    mod = np.hypot(K1, K2)
    comp = K1 if j == 1 else K2
    m = np.zeros((N, N), dtype=complex)
    ok = (mod > 0) & (np.abs(K1) != N // 2) & (np.abs(K2) != N // 2)
    m[ok] = -1j * comp[ok] / mod[ok]
    return m


def riesz_transform(f: np.ndarray, j: int) -> np.ndarray:
    if j not in (1, 2):
        raise ValueError("Riesz index must be 1 or 2")
    f = np.asarray(f, dtype=float)
    if f.ndim != 2 or f.shape[0] != f.shape[1]:
        raise GridConfigError(f"expected a square sample array, got shape {f.shape}")
    out = np.fft.ifft2(riesz_multiplier(f.shape[0], j) * np.fft.fft2(f))
    scale = np.linalg.norm(f)
    if np.linalg.norm(out.imag) > 1e-10 * max(scale, np.finfo(float).tiny):
        raise ArithmeticError("Riesz transform produced a non-negligible imaginary part")
    return out.real


@dataclass(frozen=True)
class HardyReport:
    l1: float
    riesz_l1: tuple
    total: float
    mean: float
    grid: PeriodicGrid

    def as_row(self) -> dict:
        return {
            "l1": self.l1,
            "riesz1_l1": self.riesz_l1[0],
            "riesz2_l1": self.riesz_l1[1],
            "total": self.total,
            "mean": self.mean,
            "N": self.grid.N,
            "L": self.grid.L,
        }


def hardy_norm(f: np.ndarray, grid: PeriodicGrid) -> HardyReport:
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.N, grid.N):
        raise GridConfigError(f"samples have shape {f.shape}, grid is {grid.N}x{grid.N}")
    dA = grid.cell_area
    l1 = float(np.abs(f).sum() * dA)
    r = tuple(float(np.abs(riesz_transform(f, j)).sum() * dA) for j in (1, 2))
    return HardyReport(l1, r, l1 + r[0] + r[1], float(f.sum() * dA), grid)


def rasterize(f, grid: PeriodicGrid, mesh=None) -> np.ndarray:
    """Sample a disk field on the grid; zero outside the closed unit disk.

    ``f`` may be a :class:`ScalarField` (P1 interpolant is point-sampled),
    a per-cell array (value of the containing cell; ``mesh`` required) or
    a callable ``f(x, y)``.
    """
    X, Y = grid.nodes()
    inside = X**2 + Y**2 <= 1.0
    pts = np.column_stack([X[inside], Y[inside]])
    out = np.zeros((grid.N, grid.N))
    if isinstance(f, ScalarField):
        out[inside] = fem.evaluate(f, pts)
    elif callable(f):
        out[inside] = f(pts[:, 0], pts[:, 1])
    else:
        if mesh is None:
            raise ValueError("rasterizing cell values needs the mesh")
        cells, _ = fem.locate(mesh, pts)
        out[inside] = np.asarray(f)[cells]
    return out


def divergence_hardy(b: fem.CellVectorField, grid: PeriodicGrid) -> HardyReport:
    """Surrogate norm of ``div b`` (lumped nodal divergence inside the disk, zero outside)."""
    return hardy_norm(rasterize(fem.nodal_divergence(b), grid), grid)


def jacobian(u: ScalarField, v: ScalarField) -> np.ndarray:
    """Per-cell ``grad u · perp grad v``."""
    return fem.gradient(u).dot(fem.perp(fem.gradient(v)))


def clms_check(u: ScalarField, v: ScalarField, grid: PeriodicGrid) -> float:
    """``|grad u · perp grad v|_H1 / (|grad u|_2 |grad v|_2)``."""
    nu, nv = fem.h1(u), fem.h1(v)
    if nu == 0 or nv == 0:
        raise DomainError("CLMS ratio needs nonzero gradients")
    J = jacobian(u, v)
    if not np.any(J):
        return 0.0
    return hardy_norm(rasterize(J, grid, u.mesh), grid).total / (nu * nv)


@dataclass(frozen=True, eq=False)
class WenteResult:
    w: ScalarField
    ratio_inf: float
    ratio_grad: float
    compat_defect: float


def wente_solve(u: ScalarField, v: ScalarField, bc: str = "dirichlet") -> WenteResult:
    """Solve ``Δw = grad u · perp grad v`` with zero Dirichlet data or zero-flux/zero-mean.

    For the Neumann branch the mean of the Jacobian is projected out first;
    the removed amount is returned as ``compat_defect``.
    """
    mesh = u.mesh
    rhs = -fem.cell_load(mesh, jacobian(u, v))
    defect = 0.0
    if bc == "dirichlet":
        w = fem.solve_dirichlet(mesh, rhs, 0.0)
    elif bc == "neumann":
        m = fem.lumped_mass(mesh)
        defect = float(rhs.sum())
        w = fem.solve_neumann(mesh, rhs - defect * m / m.sum(), 0.0)
    else:
        raise ValueError(f"unknown boundary condition {bc!r}")
    denom = fem.h1(u) * fem.h1(v)
    if denom == 0:
        return WenteResult(w, 0.0, 0.0, defect)
    return WenteResult(w, float(np.max(np.abs(w.values))) / denom, fem.h1(w) / denom, defect)


def write_grid(f: np.ndarray, grid: PeriodicGrid, path) -> None:
    """Row-major float64 dump behind a 16-byte ``N, L`` header."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<qd", grid.N, grid.L))
        fh.write(np.ascontiguousarray(f, dtype="<f8").tobytes())


def read_grid(path) -> tuple[np.ndarray, PeriodicGrid]:
    raw = Path(path).read_bytes()
    N, L = struct.unpack("<qd", raw[:16])
    grid = PeriodicGrid(L, int(N))
    return np.frombuffer(raw[16:], dtype="<f8").reshape(grid.N, grid.N).copy(), grid


def write_reports(rows: list, path) -> None:
    """CSV of :meth:`HardyReport.as_row` dicts (extra leading keys allowed)."""
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})
