"""Fixed-point construction of the gauge pair (A, B) with ``A b = grad A + perp grad B``.

The iteration works with ``Atilde = A P`` and ``B``.  Starting from
``(1, B0)``, each step solves one Dirichlet problem for ``Atilde - 1`` and
one zero-flux Neumann problem for ``B - B0`` whose sources are bilinear in
the previous iterate.  ``A`` is recovered nodewise as ``Atilde / P``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .fem import CellVectorField, ScalarField
from .hodge import HodgeParts, smallness_report

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 60
B0_COMPAT_TOL = 0.25
DIVERGENCE_CAP = 1e8


class ConvergenceError(RuntimeError):
    """The iteration did not contract to ``tol`` within ``max_iter`` steps.

    ``decomp`` holds the last iterate with its residuals and the full trace.
    """

    def __init__(self, message: str, decomp: "RiviereDecomp"):
        super().__init__(message)
        self.decomp = decomp
        self.trace = decomp.contraction_trace


@dataclass(frozen=True, eq=False)
class RiviereState:
    Atilde: ScalarField
    B: ScalarField


@dataclass(eq=False)
class RiviereDecomp:
    A: ScalarField
    B: ScalarField
    Atilde: ScalarField
    B0: ScalarField
    iterations: int
    contraction_trace: list
    residual_ab: float
    residual_step2: float
    bounds_report: dict
    converged: bool = True
    history: list = field(default_factory=list)

    @property
    def contraction_ratios(self) -> list:
        t = self.contraction_trace
        return [t[k + 1] / t[k] for k in range(len(t) - 1) if t[k] > 0]

    @property
    def contraction_ratio(self) -> float:
        """Largest observed successive-difference ratio (0 when fewer than two steps)."""
        r = self.contraction_ratios
        return max(r) if r else 0.0


def b0_solve(parts: HodgeParts, b: CellVectorField, compat_tol: float = B0_COMPAT_TOL) -> ScalarField:
    """Solve ``ΔB0 = div(grad(xi) Pinv)``, ``∂B0/∂ν = b·τ``, zero mean.

    Since ``P = 1`` on the boundary and ``∂xi/∂ν = b·τ``, the flux equals
    the normal component of ``grad(xi) Pinv``, so the weak form is simply
    ``int grad B0 · grad phi = int Pinv grad xi · grad phi`` (``Pinv``
    averaged to cells).  It is compatible by construction and reproduces
    ``B0 = xi`` when ``P = 1``.  The discrete defect
    ``oint b·τ - int div(grad(xi) Pinv)`` is still checked and raises
    :class:`~driftlab.fem.CompatibilityError` beyond ``compat_tol``.
    """
    report = smallness_report(parts)
    if not report["passed"]:
        log.warning("b0_solve: smallness check failed (energy=%.3g, |P|inf=%.3g)", report["energy"], report["P_inf"])
    mesh = b.mesh
    G = fem.gradient(parts.xi) * parts.Pinv.cell_average()
    tau = fem.boundary_trace(b, "tangent")
    defect, scale = fem.compatibility_defect(mesh, -fem.divergence_load(G), tau)
    if abs(defect) > compat_tol * scale + 1e-14:
        raise fem.CompatibilityError(defect, scale)
    return fem.solve_neumann(mesh, -fem.weak_divergence(G), 0.0)


def fixed_point_step(state: RiviereState, parts: HodgeParts, B0: ScalarField) -> RiviereState:
    """One application of the map ``(Ahat, Bhat) -> (Atilde, B)``."""
    mesh = B0.mesh
    dA = state.Atilde - 1.0
    grad_dA = fem.gradient(dA)
    perp_gxi = fem.perp(fem.gradient(parts.xi))
    perp_gB = fem.perp(fem.gradient(state.B))
    gP = fem.gradient(parts.P)
    gPinv = fem.gradient(parts.Pinv)

    # Δ(Atilde - 1) = grad(Ahat - 1)·perp grad(xi) - perp grad(Bhat)·grad P
    src_a = grad_dA.dot(perp_gxi) - perp_gB.dot(gP)
    Atilde = fem.solve_dirichlet(mesh, -fem.cell_load(mesh, src_a), 0.0) + 1.0

    # Δ(B - B0) = div((Ahat - 1) grad(xi) Pinv) + perp grad(Ahat - 1)·grad Pinv
    H = fem.gradient(parts.xi) * (dA.cell_average() * parts.Pinv.cell_average())
    J = fem.perp(grad_dA).dot(gPinv)
    # Ahat - 1 vanishes on the boundary, so H carries no boundary flux
    rhs_b = -fem.weak_divergence(H) - fem.cell_load(mesh, J)
    corr = fem.solve_neumann(mesh, rhs_b, 0.0)
    return RiviereState(Atilde, B0 + corr)


def ab_residual_field(A: ScalarField, B: ScalarField, b: CellVectorField) -> CellVectorField:
    """Cell field ``A b - grad A - perp grad B``."""
    return b * A.cell_average() - fem.gradient(A) - fem.perp(fem.gradient(B))


def step2_field(Atilde: ScalarField, B: ScalarField, parts: HodgeParts) -> CellVectorField:
    """Cell field ``grad Atilde - Atilde perp grad(xi) + P perp grad B``."""
    return (
        fem.gradient(Atilde)
        - fem.perp(fem.gradient(parts.xi)) * Atilde.cell_average()
        + fem.perp(fem.gradient(B)) * parts.P.cell_average()
    )


def step2_residual(decomp: RiviereDecomp, parts: HodgeParts) -> float:
    return fem.l2(step2_field(decomp.Atilde, decomp.B, parts))


def reconstruct_drift(A: ScalarField, B: ScalarField) -> CellVectorField:
    """``A^{-1} grad A + A^{-1} perp grad B`` with ``A^{-1}`` averaged to cells."""
    inv = (1.0 / A.values)[A.mesh.triangles].mean(axis=1)
    return (fem.gradient(A) + fem.perp(fem.gradient(B))) * inv


def _finish(b, parts, state, B0, trace, history, converged) -> RiviereDecomp:
    A = state.Atilde * parts.Pinv
    AP = A * parts.P
    bounds = {
        "AP_inf": float(np.max(np.abs(AP.values))),
        "AP_inv_inf": float(np.max(np.abs(1.0 / AP.values))),
        "Atilde_minus_1_inf": float(np.max(np.abs(state.Atilde.values - 1.0))),
        "grad_Atilde_l2": fem.h1(state.Atilde),
        "grad_B_l2": fem.h1(state.B),
    }
    return RiviereDecomp(
        A=A,
        B=state.B,
        Atilde=state.Atilde,
        B0=B0,
        iterations=len(trace),
        contraction_trace=trace,
        residual_ab=fem.l2(ab_residual_field(A, state.B, b)),
        residual_step2=fem.l2(step2_field(state.Atilde, state.B, parts)),
        bounds_report=bounds,
        converged=converged,
        history=history,
    )


def decompose(
    b: CellVectorField,
    parts: HodgeParts,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    start_perturbation: float = 0.0,
) -> RiviereDecomp:
    """Iterate :func:`fixed_point_step` from ``(1, B0)`` until the step size drops below ``tol``.

    The step size is ``|Atilde_{k+1} - Atilde_k|_inf + |grad(B_{k+1} - B_k)|_2``.
    ``start_perturbation`` adds ``delta (1 - |x|^2)`` to the initial
    ``Atilde``; it probes the contraction of the map itself when the
    unperturbed start already sits on the fixed point.
    Raises :class:`ConvergenceError` (carrying the partial decomposition)
    when ``max_iter`` is exhausted or the iterates blow up.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("need tol > 0 and max_iter >= 1")
    mesh = b.mesh
    B0 = b0_solve(parts, b)
    bubble = 1.0 - np.sum(mesh.vertices**2, axis=1)
    bubble[mesh.boundary_vertices] = 0.0
    state = RiviereState(fem.ScalarField(mesh, 1.0 + start_perturbation * bubble), B0)
    trace, history = [], []
    converged = False
    for k in range(1, max_iter + 1):
        try:
            new = fixed_point_step(state, parts, B0)
        except (fem.SolverError, ValueError) as exc:
            log.warning("decompose: step %d failed: %s", k, exc)
            break
        d_a = float(np.max(np.abs(new.Atilde.values - state.Atilde.values)))
        d_b = fem.h1(new.B - state.B)
        state = new
        step = d_a + d_b
        trace.append(step)
        res = fem.l2(ab_residual_field(state.Atilde * parts.Pinv, state.B, b))
        history.append({"iter": k, "dAtilde_inf": d_a, "dB_h1": d_b, "residual_ab": res})
        if step < tol:
            converged = True
            break
        if not np.isfinite(step) or step > DIVERGENCE_CAP:
            break
    decomp = _finish(b, parts, state, B0, trace, history, converged)
    if not converged:
        raise ConvergenceError(
            f"fixed point did not converge in {len(trace)} steps (last step {trace[-1] if trace else float('nan'):.3e})",
            decomp,
        )
    return decomp


def write_trace(decomp: RiviereDecomp, path) -> None:
    """CSV with columns ``iter, dAtilde_inf, dB_h1, residual_ab``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "dAtilde_inf", "dB_h1", "residual_ab"])
        for row in decomp.history:
            w.writerow([row["iter"], f"{row['dAtilde_inf']:.17g}", f"{row['dB_h1']:.17g}", f"{row['residual_ab']:.17g}"])
