"""Linear Hodge splitting ``b = perp grad(xi) - grad(p)`` and the gauge ``P = exp(p)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .fem import CellVectorField, ScalarField

DEFAULT_EPSILON = 1e-2


@dataclass(frozen=True, eq=False)
class HodgeParts:
    p: ScalarField
    xi: ScalarField
    P: ScalarField
    Pinv: ScalarField
    residual_l2: float
    epsilon_report: dict


def hodge_decompose(b: CellVectorField) -> HodgeParts:
    """Split a cell field into its rotated-gradient and gradient parts.

    ``p`` solves ``-Δp = div b`` with ``p = 0`` on the boundary.  ``xi``
    solves ``-Δxi = curl b`` with ``∂xi/∂ν = b·τ`` and zero mean; the weak
    curl is the divergence of the rotated field including its boundary
    term, which cancels the flux exactly (discrete Stokes identity).
    """
    mesh = b.mesh
    p = fem.solve_dirichlet(mesh, fem.weak_divergence(b), 0.0)
    rhs_xi = fem.divergence_load(fem.perp(b))
    flux = fem.boundary_trace(b, "tangent")
    xi = fem.solve_neumann(mesh, rhs_xi, flux)
    P = ScalarField(mesh, np.exp(p.values))
    Pinv = ScalarField(mesh, np.exp(-p.values))
    residual = fem.l2(b - fem.perp(fem.gradient(xi)) + fem.gradient(p))
    report = {
        "energy": fem.h1(xi) ** 2 + fem.h1(P) ** 2 + fem.h1(Pinv) ** 2,
        "P_inf": float(np.max(P.values)),
        "Pinv_inf": float(np.max(Pinv.values)),
    }
    return HodgeParts(p, xi, P, Pinv, residual, report)


def smallness_report(parts: HodgeParts, epsilon: float = DEFAULT_EPSILON) -> dict:
    """Check the gradient-energy, sup-norm and two-sided gauge bounds against ``epsilon``."""
    r = dict(parts.epsilon_report)
    r["epsilon"] = epsilon
    r["energy_ok"] = r["energy"] < epsilon or r["energy"] == 0.0
    r["P_ok"] = r["P_inf"] <= 1.0 + epsilon
    r["gauge_ok"] = 0.1 <= r["P_inf"] <= 10.0 and 0.1 <= r["Pinv_inf"] <= 10.0
    r["passed"] = bool(r["energy_ok"] and r["P_ok"] and r["gauge_ok"])
    return r


def stokes_defect(b: CellVectorField) -> float:
    """``int curl b + oint b·τ`` as assembled by :func:`hodge_decompose` (zero up to rounding)."""
    rhs = fem.divergence_load(fem.perp(b))
    defect, _ = fem.compatibility_defect(b.mesh, rhs, fem.boundary_trace(b, "tangent"))
    return defect


def orthogonality(parts: HodgeParts) -> float:
    """``int perp grad(xi) . grad(p)``."""
    mesh = parts.p.mesh
    a = fem.perp(fem.gradient(parts.xi))
    return float(np.sum(a.dot(fem.gradient(parts.p)) * mesh.areas))


def boundary_flux_mismatch(b: CellVectorField, parts: HodgeParts) -> float:
    """``oint |b·τ - ∂xi/∂ν|`` with the discrete normal derivative of ``xi``."""
    dxi = fem.boundary_trace(fem.gradient(parts.xi), "normal")
    return fem.boundary_integral(b.mesh, np.abs(fem.boundary_trace(b, "tangent") - dxi))


def pbound_ratio(parts: HodgeParts, div_hardy_total: float) -> float:
    """Measured ``(|p|_inf + |grad p|_2) / |div b|_H1``; ``nan`` when the denominator vanishes."""
    num = float(np.max(np.abs(parts.p.values))) + fem.h1(parts.p)
    return num / div_hardy_total if div_hardy_total > 0 else float("nan")
