"""Command-line driver: ``driftlab <verb> --config run.json --out dir``.

Exit status is 0 for a completed run (stage failures are recorded in the
written summary), 2 for configuration errors and 3 for I/O errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import diskmesh, driftsolve, fem, hardy, hodge, holder, pipeline, riviere
from .drifts import DriftSpec, default_catalog, make_drift

log = logging.getLogger("driftlab")

EXIT_CONFIG = 2
EXIT_IO = 3


def _specs(config: pipeline.RunConfig) -> list[DriftSpec]:
    return default_catalog(config.catalog_norm) if config.catalog else [config.drift_spec]


def _slug(dspec: DriftSpec, k: int) -> str:
    return f"{k:02d}_{dspec.kind}"


def cmd_mesh(config, out: Path) -> dict:
    mesh = diskmesh.build_disk_mesh(config.level)
    diskmesh.write_mesh(mesh, out / "mesh.txt")
    return {"level": mesh.level, "V": mesh.n_vertices, "E": len(mesh.edges), "T": mesh.n_triangles,
            "B": len(mesh.boundary_edges), "h": mesh.h}


def cmd_decompose(config, out: Path) -> dict:
    mesh = diskmesh.build_disk_mesh(config.level)
    dspec = config.drift_spec
    b = make_drift(dspec, mesh)
    summary = {"config": config.to_dict(), "label": dspec.label(), "failures": {}}
    with pipeline.solver_tolerance(config.solver_rtol):
        parts = hodge.hodge_decompose(b)
        summary["smallness"] = hodge.smallness_report(parts, config.epsilon)
        summary["hodge_residual_l2"] = parts.residual_l2
        try:
            d = riviere.decompose(b, parts, config.fp_tol, config.fp_max_iter)
        except riviere.ConvergenceError as exc:
            summary["failures"]["riviere"] = str(exc)
            d = exc.decomp
    summary.update(converged=d.converged, iterations=d.iterations, residual_ab=d.residual_ab,
                   residual_step2=d.residual_step2, bounds=d.bounds_report)
    diskmesh.write_mesh(mesh, out / "mesh.txt")
    fem.write_field(b, out / "b.field")
    for name, f in (("p", parts.p), ("xi", parts.xi), ("P", parts.P), ("A", d.A), ("B", d.B)):
        fem.write_field(f, out / f"{name}.field")
    riviere.write_trace(d, out / "trace.csv")
    return summary


def cmd_solve(config, out: Path) -> dict:
    if config.bundle:
        prob = driftsolve.read_bundle(config.bundle)
        data = [("bundle", prob.g)]
        mesh, b, f = prob.mesh, prob.b, prob.f
    else:
        mesh = diskmesh.build_disk_mesh(config.level)
        b, f = make_drift(config.drift_spec, mesh), None
        data = pipeline.boundary_family(config)
    summary = {"config": config.to_dict(), "failures": {}, "solutions": []}
    diskmesh.write_mesh(mesh, out / "mesh.txt")
    with pipeline.solver_tolerance(config.solver_rtol):
        for name, g in data:
            try:
                u = driftsolve.solve_drift(driftsolve.DriftProblem(mesh, b, g, f))
            except fem.SolverError as exc:
                summary["failures"][name] = str(exc)
                continue
            fem.write_field(u, out / f"u_{name}.field")
            summary["solutions"].append({"data": name, **fem.norms(u)})
    return summary


def cmd_hardy(config, out: Path) -> dict:
    mesh = diskmesh.build_disk_mesh(config.level)
    grid = config.grid
    rows = []
    for dspec in _specs(config):
        rep = hardy.divergence_hardy(make_drift(dspec, mesh), grid)
        rows.append({"label": dspec.label(), **rep.as_row()})
    hardy.write_reports(rows, out / "hardy.csv")
    x = fem.interpolate(mesh, lambda x, y: x)
    y = fem.interpolate(mesh, lambda x, y: y)
    with pipeline.solver_tolerance(config.solver_rtol):
        w = hardy.wente_solve(x, y)
    return {"config": config.to_dict(), "reports": rows,
            "wente_xy": {"w_inf": float(np.max(np.abs(w.w.values))), "ratio_inf": w.ratio_inf,
                         "ratio_grad": w.ratio_grad},
            "clms_xy": hardy.clms_check(x, y, grid)}


def cmd_holder(config, out: Path) -> dict:
    mesh = diskmesh.build_disk_mesh(config.level)
    b = make_drift(config.drift_spec, mesh)
    rows, summary = [], {"config": config.to_dict(), "failures": {}, "fits": []}
    with pipeline.solver_tolerance(config.solver_rtol):
        for name, g in pipeline.boundary_family(config):
            try:
                u = driftsolve.solve_drift(driftsolve.DriftProblem(mesh, b, g))
                fit = holder.holder_fit(u, config.holder_center, config.holder_r_max, config.holder_n_dyadic)
            except (fem.SolverError, ValueError) as exc:
                summary["failures"][name] = str(exc)
                continue
            rows.append((name, fit))
            summary["fits"].append({"data": name, "alpha": fit.alpha, "fit_r2": fit.fit_r2,
                                    "conclusive": fit.conclusive})
    holder.write_scan(rows, out / "holder.csv")
    return summary


def cmd_pipeline(config, out: Path) -> dict:
    mesh = diskmesh.build_disk_mesh(config.level)
    if not config.catalog:
        return pipeline.run_pipeline(config, out=out, mesh=mesh)
    runs = []
    # runs are independent and write to their own directories; merged in catalog order
    for k, dspec in enumerate(_specs(config)):
        s = pipeline.run_pipeline(config, dspec, out / _slug(dspec, k), mesh)
        runs.append({"dir": _slug(dspec, k), "label": s["label"], "failures": s["failures"],
                     "smallness_passed": s.get("smallness", {}).get("passed"),
                     "residual_ab": s.get("riviere", {}).get("residual_ab"),
                     "min_alpha": min((r.get("alpha", float("nan")) for r in s.get("solutions", [])), default=None)})
    sweep = pipeline.radial_sink_sweep(config, out, mesh)
    return {"config": config.to_dict(), "runs": runs, "sweep": sweep}


def cmd_calibrate(config, out: Path) -> dict:
    mesh = diskmesh.build_disk_mesh(config.level)
    results = [pipeline.calibrate_epsilon(config, dspec, mesh) for dspec in _specs(config)]
    return {"config": config.to_dict(), "calibration": results}


VERBS = {
    "mesh": (cmd_mesh, "build the disk mesh and write it"),
    "decompose": (cmd_decompose, "Hodge split and gauge decomposition of the configured drift"),
    "solve": (cmd_solve, "solve the drift equation (configured drift or a problem bundle)"),
    "hardy": (cmd_hardy, "Hardy surrogate of div b, Wente and CLMS checks"),
    "holder": (cmd_holder, "Hölder fits of solutions for random boundary data"),
    "pipeline": (cmd_pipeline, "full experiment run (optionally over the catalog plus the radial-sink sweep)"),
    "calibrate": (cmd_calibrate, "bisect the amplitude at which the gauge iteration stops contracting"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    for name, (_, help_) in VERBS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="JSON run configuration (defaults apply to missing keys)")
        p.add_argument("--out", type=Path, help="output directory (overrides the config)")
        p.add_argument("--level", type=int, help="mesh level (overrides the config)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = pipeline.load_config(args.config, level=args.level,
                                      out=str(args.out) if args.out is not None else None)
        DriftSpec.from_dict(config.drift)
    except OSError as exc:
        print(f"driftlab: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as exc:
        print(f"driftlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        summary = VERBS[args.verb][0](config, out)
        pipeline.write_summary(summary, out / "summary.json")
    except OSError as exc:
        print(f"driftlab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed input files (bundles, custom drifts) surface as parse errors
        print(f"driftlab: input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    failures = summary.get("failures") or {}
    print(f"driftlab {args.verb}: wrote {out}" + (f" ({len(failures)} recorded stage failures)" if failures else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
