"""Local Hölder exponents from oscillation decay on dyadic balls."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .fem import DomainError, ScalarField

RESOLUTION_FACTOR = 4.0
FIT_TOL = 0.05
MIN_R2 = 0.98


class WindowError(ValueError):
    """Fewer than three admissible radii."""


@dataclass(frozen=True)
class HolderFit:
    center: tuple
    radii: np.ndarray
    oscillations: np.ndarray
    alpha: float
    fit_r2: float
    window: tuple

    @property
    def conclusive(self) -> bool:
        return bool(np.isfinite(self.alpha) and self.fit_r2 >= MIN_R2)


def _guard(u: ScalarField, center, r):
    c = np.asarray(center, dtype=float)
    if np.hypot(*c) + r > 1.0 + 1e-12:
        raise DomainError(f"ball B_{r}({tuple(c)}) leaves the unit disk")
    if r < RESOLUTION_FACTOR * u.mesh.h:
        raise DomainError(f"radius {r} is below {RESOLUTION_FACTOR:g}h = {RESOLUTION_FACTOR * u.mesh.h:.4g}")
    return c


def oscillation(u: ScalarField, center, r: float) -> float:
    """``max - min`` of the nodal values inside ``B_r(center)``."""
    c = _guard(u, center, r)
    inside = np.linalg.norm(u.mesh.vertices - c, axis=1) <= r * (1 + 1e-12)
    vals = u.values[inside]
    return float(vals.max() - vals.min())


def holder_fit(u: ScalarField, center=(0.0, 0.0), r_max: float = 0.8, n_dyadic: int = 4) -> HolderFit:
    """Least-squares slope of ``log osc`` against ``log r`` on ``r_max 2^-k``.

    Radii below ``4h`` are dropped.  The slope is capped at ``1 + FIT_TOL``
    because a P1 field is Lipschitz at every scale.
    """
    if n_dyadic < 3:
        raise WindowError("need n_dyadic >= 3")
    c = np.asarray(center, dtype=float)
    rmin = RESOLUTION_FACTOR * u.mesh.h
    radii = np.array([r_max * 0.5**k for k in range(n_dyadic)])
    radii = radii[radii >= rmin]
    if len(radii) < 3:
        raise WindowError(f"only {len(radii)} radii in [{rmin:.4g}, {r_max:.4g}]")
    osc = np.array([oscillation(u, c, r) for r in radii])
    pos = osc > 0
    if pos.sum() < 3:
        return HolderFit(tuple(c), radii, osc, float("nan"), 0.0, (radii[-1], radii[0]))
    x, y = np.log(radii[pos]), np.log(osc[pos])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - pred) ** 2) / ss_tot if ss_tot > 0 else 1.0
    alpha = min(float(slope), 1.0 + FIT_TOL)
    return HolderFit(tuple(c), radii, osc, alpha, float(r2), (float(radii[-1]), float(radii[0])))


def write_scan(rows: list, path) -> None:
    """CSV ``param, x0_x, x0_y, alpha, fit_r2, r_min, r_max``; rows are ``(param, HolderFit)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param", "x0_x", "x0_y", "alpha", "fit_r2", "r_min", "r_max"])
        for param, fit in rows:
            w.writerow([param, f"{fit.center[0]:.17g}", f"{fit.center[1]:.17g}", f"{fit.alpha:.17g}",
                        f"{fit.fit_r2:.17g}", f"{fit.window[0]:.17g}", f"{fit.window[1]:.17g}"])
