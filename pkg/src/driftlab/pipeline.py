"""Experiment pipelines: decompose, solve, measure, report."""

from __future__ import annotations

import contextlib
import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import diskmesh, driftsolve, fem, hardy, hodge, holder, riviere
from .drifts import DriftSpec, make_drift

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    level: int = 4
    solver_rtol: float = fem.RTOL
    epsilon: float = hodge.DEFAULT_EPSILON
    fp_tol: float = riviere.DEFAULT_TOL
    fp_max_iter: int = riviere.DEFAULT_MAX_ITER
    hardy_L: float = hardy.DEFAULT_L
    hardy_N: int = hardy.DEFAULT_N
    holder_center: tuple = (0.0, 0.0)
    holder_r_max: float = 0.8
    holder_n_dyadic: int = 4
    n_boundary: int = 5
    seed: int = 0
    drift: dict = field(default_factory=lambda: {"kind": "zero"})
    sweep_eps: tuple = (0.4, 0.2, 0.1)
    sweep_kappa: float = 1.0
    calibrate_lo: float = 0.0
    calibrate_hi: float = 20.0
    calibrate_rel_tol: float = 1e-3
    calibrate_perturbation: float = 1e-3
    catalog: bool = False
    catalog_norm: float = 0.05
    bundle: str | None = None
    out: str = "out"

    def __post_init__(self):
        for name in ("solver_rtol", "epsilon", "fp_tol", "hardy_L", "holder_r_max", "calibrate_hi", "calibrate_rel_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"config: {name} must be positive")
        if self.level < 0 or self.fp_max_iter < 1 or self.n_boundary < 0:
            raise ValueError("config: level, fp_max_iter and n_boundary must be nonnegative (fp_max_iter >= 1)")
        self.holder_center = tuple(float(c) for c in self.holder_center)
        self.sweep_eps = tuple(float(e) for e in self.sweep_eps)
        hardy.PeriodicGrid(self.hardy_L, self.hardy_N)

    @property
    def grid(self) -> hardy.PeriodicGrid:
        return hardy.PeriodicGrid(self.hardy_L, self.hardy_N)

    @property
    def drift_spec(self) -> DriftSpec:
        return DriftSpec.from_dict(self.drift)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["holder_center"] = list(self.holder_center)
        d["sweep_eps"] = list(self.sweep_eps)
        return d


def load_config(path=None, **overrides) -> RunConfig:
    """Read a JSON config; missing keys take their defaults."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        if not isinstance(data, dict):
            raise ValueError(f"{path}: top level must be an object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    names = {f.name for f in fields(RunConfig)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    return RunConfig(**data)


@contextlib.contextmanager
def solver_tolerance(rtol: float):
    old = fem.RTOL
    fem.RTOL = rtol
    try:
        yield
    finally:
        fem.RTOL = old


def random_boundary_data(rng: np.random.Generator, degree: int = 4):
    """Random harmonic polynomial ``c0 + sum_k (a_k Re z^k + b_k Im z^k) / k^2``."""
    a = rng.normal(size=degree + 1)
    c = rng.normal(size=degree + 1)

    def g(x, y):
        z = np.asarray(x) + 1j * np.asarray(y)
        out = np.full(np.shape(z), a[0])
        for k in range(1, degree + 1):
            zk = z**k
            out = out + (a[k] * zk.real + c[k] * zk.imag) / k**2
        return out

    return g


def boundary_family(config: RunConfig) -> list:
    """``x`` followed by ``n_boundary`` seeded random harmonic polynomials."""
    rng = np.random.default_rng(config.seed)
    return [("x", lambda x, y: np.asarray(x, dtype=float))] + [
        (f"random{k}", random_boundary_data(rng)) for k in range(config.n_boundary)
    ]


def _stage(summary: dict, name: str):
    """Record a failing stage in ``summary['failures']`` instead of raising."""

    class _Guard(contextlib.AbstractContextManager):
        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, Exception):
                summary.setdefault("failures", {})[name] = f"{exc_type.__name__}: {exc}"
                log.warning("stage %s failed: %s", name, exc)
                return True
            return False

    return _Guard()


def _num(x):
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _num(obj)


def run_pipeline(config: RunConfig, dspec: DriftSpec | None = None, out=None, mesh=None) -> dict:
    """Hodge split, smallness, gauge decomposition, both solvers, Hölder fits, Hardy report.

    Writes fields, CSVs and ``summary.json`` under ``out`` (when given) and
    returns the summary.  Stage failures are recorded, not raised.
    """
    dspec = dspec or config.drift_spec
    mesh = mesh or diskmesh.build_disk_mesh(config.level)
    grid = config.grid
    summary: dict = {"config": config.to_dict(), "drift": dspec.to_dict(), "label": dspec.label(),
                     "mesh": {"level": mesh.level, "V": mesh.n_vertices, "T": mesh.n_triangles, "h": mesh.h},
                     "failures": {}}
    outdir = Path(out) if out is not None else None
    if outdir is not None:
        outdir.mkdir(parents=True, exist_ok=True)
        diskmesh.write_mesh(mesh, outdir / "mesh.txt")

    with solver_tolerance(config.solver_rtol):
        b = make_drift(dspec, mesh)
        summary["b_l2"] = fem.l2(b)
        parts = decomp = None
        with _stage(summary, "hodge"):
            parts = hodge.hodge_decompose(b)
            small = hodge.smallness_report(parts, config.epsilon)
            summary["hodge"] = {"residual_l2": parts.residual_l2, "orthogonality": hodge.orthogonality(parts),
                                "p_inf": float(np.max(np.abs(parts.p.values))), "xi_mean": fem.mean(parts.xi)}
            summary["smallness"] = small
        with _stage(summary, "hardy"):
            rep = hardy.divergence_hardy(b, grid)
            summary["hardy_div_b"] = rep.as_row()
            if parts is not None:
                summary["hodge"]["pbound_ratio"] = hodge.pbound_ratio(parts, rep.total)
        if parts is not None:
            with _stage(summary, "riviere"):
                try:
                    decomp = riviere.decompose(b, parts, config.fp_tol, config.fp_max_iter)
                except riviere.ConvergenceError as exc:
                    summary["failures"]["riviere"] = str(exc)
                    decomp = exc.decomp
                summary["riviere"] = {
                    "converged": decomp.converged,
                    "iterations": decomp.iterations,
                    "contraction_ratio": decomp.contraction_ratio,
                    "residual_ab": decomp.residual_ab,
                    "residual_step2": decomp.residual_step2,
                    "A_minus_1_inf": float(np.max(np.abs(decomp.A.values - 1.0))),
                    "B_minus_xi_l2": fem.l2(decomp.B - parts.xi),
                    "bounds": decomp.bounds_report,
                }
                if decomp.converged:
                    e, _ = driftsolve.uniqueness_energy(decomp.A, decomp.B)
                    summary["riviere"]["uniqueness_energy"] = e

        solutions = []
        for name, g in boundary_family(config):
            row = {"data": name}
            u = None
            with _stage(summary, f"solve_drift[{name}]"):
                u = driftsolve.solve_drift(driftsolve.DriftProblem(mesh, b, g))
            if decomp is not None and decomp.converged:
                with _stage(summary, f"solve_conservation[{name}]"):
                    uc = driftsolve.solve_conservation(decomp.A, decomp.B, g)
                    if u is not None:
                        gmax = float(np.max(np.abs(fem.boundary_values(mesh, g))))
                        row["cons_drift_l2"] = fem.l2(u - uc) / gmax if gmax > 0 else fem.l2(u - uc)
                    u = u if u is not None else uc
            if u is not None:
                with _stage(summary, f"holder[{name}]"):
                    fit = holder.holder_fit(u, config.holder_center, config.holder_r_max, config.holder_n_dyadic)
                    row.update(alpha=fit.alpha, fit_r2=fit.fit_r2, conclusive=fit.conclusive,
                               r_min=fit.window[0], r_max=fit.window[1])
                    solutions.append((name, fit))
                if outdir is not None and name == "x":
                    fem.write_field(u, outdir / "u_x.field")
            summary.setdefault("solutions", []).append(row)

    if outdir is not None:
        fem.write_field(b, outdir / "b.field")
        if parts is not None:
            for nm in ("p", "xi", "P"):
                fem.write_field(getattr(parts, nm), outdir / f"{nm}.field")
        if decomp is not None:
            for nm in ("A", "B", "Atilde", "B0"):
                fem.write_field(getattr(decomp, nm), outdir / f"{nm}.field")
            riviere.write_trace(decomp, outdir / "trace.csv")
        holder.write_scan(solutions, outdir / "holder.csv")
        if "hardy_div_b" in summary:
            hardy.write_reports([{"label": dspec.label(), **summary["hardy_div_b"]}], outdir / "hardy.csv")
        write_summary(summary, outdir / "summary.json")
    return summary


def write_summary(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n")


def radial_sink_sweep(config: RunConfig, out=None, mesh=None) -> list[dict]:
    """Hardy surrogate of ``div b`` and the smallest fitted alpha for each ``eps`` in ``config.sweep_eps``.

    Rows are ordered by decreasing ``eps``.
    """
    mesh = mesh or diskmesh.build_disk_mesh(config.level)
    rows = []
    for eps in sorted(config.sweep_eps, reverse=True):
        dspec = DriftSpec("radial_sink", kappa=config.sweep_kappa, eps=eps)
        b = make_drift(dspec, mesh)
        rep = hardy.divergence_hardy(b, config.grid)
        alphas, r2s = [], []
        with solver_tolerance(config.solver_rtol):
            for name, g in boundary_family(config):
                try:
                    u = driftsolve.solve_drift(driftsolve.DriftProblem(mesh, b, g))
                    fit = holder.holder_fit(u, config.holder_center, config.holder_r_max, config.holder_n_dyadic)
                except (fem.SolverError, ValueError) as exc:
                    log.warning("sweep eps=%g data=%s: %s", eps, name, exc)
                    continue
                alphas.append(fit.alpha)
                r2s.append(fit.fit_r2)
        rows.append({
            "eps_reg": eps,
            "b_l2": fem.l2(b),
            "hardy_total": rep.total,
            "alpha": min(alphas) if alphas else float("nan"),
            "fit_r2": min(r2s) if r2s else float("nan"),
        })
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        with open(Path(out) / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["eps_reg", "b_l2", "hardy_total", "alpha", "fit_r2"])
            for r in rows:
                w.writerow([f"{r[k]:.17g}" for k in ("eps_reg", "b_l2", "hardy_total", "alpha", "fit_r2")])
    return rows


def contracts(dspec: DriftSpec, mesh, config: RunConfig) -> tuple[bool, float]:
    """Whether the gauge iteration contracts for ``dspec``; also returns the observed ratio.

    The iteration starts from a perturbed ``Atilde`` (``calibrate_perturbation``)
    so that exact one-step fixed points still exercise the map.  A run
    contracts if it converges, or if it stays finite and the median of its
    last five successive-difference ratios is below one.
    """
    b = make_drift(dspec, mesh)
    with solver_tolerance(config.solver_rtol):
        try:
            parts = hodge.hodge_decompose(b)
            d = riviere.decompose(b, parts, config.fp_tol, config.fp_max_iter,
                                  start_perturbation=config.calibrate_perturbation)
        except riviere.ConvergenceError as exc:
            d = exc.decomp
        except (fem.SolverError, ValueError):
            return False, float("inf")
    ratios = d.contraction_ratios
    tail = float(np.median(ratios[-5:])) if ratios else 0.0
    if d.converged:
        return True, d.contraction_ratio
    ok = bool(np.all(np.isfinite(d.contraction_trace)) and tail < 1.0)
    return ok, tail


def calibrate_epsilon(config: RunConfig, family: DriftSpec | None = None, mesh=None) -> dict:
    """Bisect the amplitude ``|b|_2`` at which the gauge iteration stops contracting."""
    family = family or config.drift_spec
    mesh = mesh or diskmesh.build_disk_mesh(config.level)
    lo, hi = config.calibrate_lo, config.calibrate_hi
    probes = []

    def at(a):
        dspec = DriftSpec(**{**family.to_dict(), "norm": a if a > 0 else None})
        ok, ratio = contracts(dspec, mesh, config)
        probes.append({"amplitude": a, "contracts": ok, "ratio": ratio})
        return ok

    if at(hi):
        threshold = hi
    else:
        while hi - lo > config.calibrate_rel_tol * hi:
            mid = 0.5 * (lo + hi)
            if at(mid):
                lo = mid
            else:
                hi = mid
        threshold = lo
    dspec = DriftSpec(**{**family.to_dict(), "norm": threshold if threshold > 0 else None})
    b = make_drift(dspec, mesh)
    rep = hardy.divergence_hardy(b, config.grid)
    return {
        "family": family.label(),
        "level": mesh.level,
        "threshold_amplitude": threshold,
        "b_l2": fem.l2(b),
        "hardy_total": rep.total,
        "epsilon1_estimate": fem.l2(b) + rep.total,
        "probes": probes,
    }
