"""Catalog of drift fields.

Scalar ingredients (stream functions, the ``h`` and ``v`` of a Jacobian
drift) are given as expressions in ``x`` and ``y``, e.g. ``"x*y"`` or
``"exp(-4*(x**2+y**2))"``; gradients are taken symbolically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy

from . import fem
from .diskmesh import TriMesh
from .fem import CellVectorField

KINDS = ("zero", "radial_source", "radial_sink", "vortex", "jacobian", "stream", "custom_file")

_X, _Y = sympy.symbols("x y")


@lru_cache(maxsize=64)
def scalar_function(expr: str):
    """Return ``(f, grad_f)`` as numpy callables for an expression in x, y."""
    try:
        e = sympy.sympify(expr, locals={"x": _X, "y": _Y})
    except (sympy.SympifyError, TypeError, SyntaxError) as exc:
        raise ValueError(f"cannot parse scalar expression {expr!r}: {exc}") from None
    extra = e.free_symbols - {_X, _Y}
    if extra:
        raise ValueError(f"expression {expr!r} uses unknown symbols {sorted(map(str, extra))}")
    f = sympy.lambdify((_X, _Y), e, "numpy")
    fx = sympy.lambdify((_X, _Y), sympy.diff(e, _X), "numpy")
    fy = sympy.lambdify((_X, _Y), sympy.diff(e, _Y), "numpy")

    def grad(x, y):
        return np.broadcast_to(fx(x, y), np.shape(x)), np.broadcast_to(fy(x, y), np.shape(x))

    return (lambda x, y: np.broadcast_to(f(x, y), np.shape(x))), grad


@dataclass(frozen=True)
class DriftSpec:
    """One catalog entry.

    ``norm`` rescales the field to that L2 norm on the disk (``None`` keeps
    the raw amplitude).  ``kappa`` and ``eps`` parameterize the radial and
    vortex kinds; ``h``/``v`` the Jacobian kind; ``xi`` the stream kind;
    ``path`` the custom-file kind.
    """

    kind: str = "zero"
    kappa: float = 1.0
    eps: float = 0.3
    xi: str = "x*y"
    h: str = "x"
    v: str = "y"
    path: str | None = None
    norm: float | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown drift kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("radial_sink", "vortex") and not self.eps > 0:
            raise ValueError(f"{self.kind} needs eps > 0")
        if self.norm is not None and not self.norm > 0:
            raise ValueError("normalization target must be positive")
        if self.kind == "custom_file" and not self.path:
            raise ValueError("custom_file drift needs a path")

    @classmethod
    def from_dict(cls, d: dict) -> "DriftSpec":
        known = {k: d[k] for k in ("kind", "kappa", "eps", "xi", "h", "v", "path", "norm") if k in d}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown drift keys {sorted(unknown)}")
        return cls(**known)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("kind", "kappa", "eps", "xi", "h", "v", "path", "norm")}

    def label(self) -> str:
        if self.kind == "stream":
            return f"stream({self.xi})"
        if self.kind == "jacobian":
            return f"jacobian({self.h}; {self.v})"
        if self.kind in ("radial_sink", "vortex"):
            return f"{self.kind}({self.kappa:g},{self.eps:g})"
        if self.kind == "radial_source":
            return f"radial_source({self.kappa:g})"
        return self.kind


def make_drift(dspec: DriftSpec, mesh: TriMesh) -> CellVectorField:
    """Build the cell field for ``dspec``.

    radial_source: ``kappa (x, y)``; radial_sink: ``-kappa (x, y)/(r^2+eps^2)``
    (both sampled at centroids).  vortex: ``kappa (-y, x)/(r^2+eps^2)``, taken
    as ``perp grad`` of the P1 interpolant of ``(kappa/2) log(r^2+eps^2)``;
    stream: ``perp grad`` of the P1 interpolant of ``xi``.  Both are exactly
    divergence free on the mesh.  jacobian: ``h perp grad v`` from P1
    samples of ``h`` and ``v``.
    """
    k, e = dspec.kappa, dspec.eps
    if dspec.kind == "zero":
        return CellVectorField(mesh, np.zeros((mesh.n_triangles, 2)))
    if dspec.kind == "radial_source":
        b = fem.sample_cells(mesh, lambda x, y: (k * x, k * y))
    elif dspec.kind == "radial_sink":
        b = fem.sample_cells(mesh, lambda x, y: (-k * x / (x * x + y * y + e * e), -k * y / (x * x + y * y + e * e)))
    elif dspec.kind == "vortex":
        # perp grad of (kappa/2) log(r^2 + eps^2), from its P1 interpolant
        psi = fem.interpolate(mesh, lambda x, y: 0.5 * k * np.log(x * x + y * y + e * e))
        b = fem.perp(fem.gradient(psi))
    elif dspec.kind == "stream":
        xi, _ = scalar_function(dspec.xi)
        b = fem.perp(fem.gradient(fem.interpolate(mesh, xi)))
    elif dspec.kind == "jacobian":
        hf, _ = scalar_function(dspec.h)
        vf, _ = scalar_function(dspec.v)
        h = fem.interpolate(mesh, hf)
        v = fem.interpolate(mesh, vf)
        b = fem.perp(fem.gradient(v)) * h.cell_average()
    else:
        b = fem.read_field(mesh, dspec.path)
        if not isinstance(b, CellVectorField):
            raise ValueError(f"{dspec.path}: expected a vector field")
    if dspec.norm is not None:
        n = fem.l2(b)
        if n > 0:
            b = b * (dspec.norm / n)
    return b


def default_catalog(norm: float = 0.05) -> list[DriftSpec]:
    """Drifts used by the acceptance harness and the ``pipeline`` defaults."""
    return [
        DriftSpec("zero"),
        DriftSpec("stream", xi="x*y", norm=norm),
        DriftSpec("stream", xi="exp(-2*(x**2+y**2))*sin(2*x+y)", norm=norm),
        DriftSpec("vortex", kappa=1.0, eps=0.3, norm=norm),
        DriftSpec("jacobian", h="1+x*y", v="sin(x)+y**2", norm=norm),
        DriftSpec("jacobian", h="cos(2*y)", v="x*y+x", norm=norm),
        DriftSpec("radial_source", kappa=1.0, norm=norm),
        DriftSpec("radial_sink", kappa=1.0, eps=0.3, norm=norm),
    ]
