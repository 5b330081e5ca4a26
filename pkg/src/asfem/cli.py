"""Command line front end.

Subcommands: `run` executes one adaptive trace and writes CSV artifacts,
`verify` executes the verification suite (decomposition identity, sandwich
bound, effectivity stability, convergence rates) and prints a pass/fail
table, `mesh-info` validates and summarizes an ASCII mesh file.

Exit codes: 0 success, 2 configuration error, 3 invariant violation,
4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .adapt import (ESTIMATORS, PROBLEMS, adapt_loop, fit_rate,
                    reference_energy_error)
from .estimate import SmootherEstimator
from .fem import (SolverError, FeSpace, assemble_load, assemble_stiffness,
                  galerkin_solve, residual_functional)
from .mesh import MeshError, all_patches, mesh_stats, read_mesh, uniform_refine
from .schwarz import (DecompositionError, VerificationReport,
                      build_decomposition, spectral_bounds,
                      verify_decomposition_identity, write_verification_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_SOLVER = 4


class ConfigError(ValueError):
    """A run configuration that cannot be accepted."""


@dataclass
class RunConfig:
    """Flat key/value run configuration (JSON on disk)."""
    problem: str = "unit_square_manufactured"
    p: int = 1
    estimator: str = "explicit_zeta"
    theta: float = 0.5
    max_dof: int = 2000
    q: int = 2
    solver: str = "auto"
    rel_tol: float = 1e-8
    output: str = "."
    verify_spectral: bool = False
    verify_identity: bool = False
    mesh_file: str = ""
    detail: str = "full"

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem: unknown problem {self.problem!r}; "
                              f"choose one of {sorted(PROBLEMS)}")
        if self.p not in (1, 2):
            raise ConfigError(f"p: degree must be 1 or 2, got {self.p}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator: unknown estimator "
                              f"{self.estimator!r}; choose one of {ESTIMATORS}")
        if not 0.0 < self.theta <= 1.0:
            raise ConfigError(f"theta: must be in (0, 1], got {self.theta}")
        if self.max_dof < 1:
            raise ConfigError(f"max_dof: must be >= 1, got {self.max_dof}")
        if not 1 <= self.q <= 4:
            raise ConfigError(f"q: enrichment must be in [1, 4], got {self.q}")
        if self.solver not in ("auto", "direct_dense", "pcg"):
            raise ConfigError(f"solver: unknown solver {self.solver!r}")
        if not 1e-14 <= self.rel_tol <= 1e-2:
            raise ConfigError(f"rel_tol: must be in [1e-14, 1e-2], "
                              f"got {self.rel_tol}")
        if self.detail not in ("full", "light"):
            raise ConfigError(f"detail: must be 'full' or 'light', "
                              f"got {self.detail!r}")
        return self

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object of key/value pairs")
        known = set(cls.__dataclass_fields__)
        for key in raw:
            if key not in known:
                raise ConfigError(f"{key}: unknown configuration key")
        cfg = cls(**raw)
        return cfg.validate()

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _trial_vectors(rng_seed, count, dim):
    return np.random.default_rng(rng_seed).standard_normal((count, dim))


def cmd_run(cfg, output_dir, levels_cap):
    problem = PROBLEMS[cfg.problem]
    os.makedirs(output_dir, exist_ok=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        trace = adapt_loop(problem, estimator=cfg.estimator, theta=cfg.theta,
                           max_dof=cfg.max_dof, p=cfg.p, q=cfg.q,
                           rel_tol=cfg.rel_tol, levels_cap=levels_cap,
                           solver=cfg.solver, detail=cfg.detail,
                           spectra="auto" if cfg.detail == "full" else "off")
    trace_path = os.path.join(output_dir, "trace.csv")
    trace.to_csv(trace_path)
    print(f"wrote {trace_path} ({len(trace.records)} levels)")

    if cfg.verify_spectral or cfg.verify_identity:
        reports = _verification_reports(problem, cfg, levels_cap)
        ver_path = os.path.join(output_dir, "verification.csv")
        write_verification_csv(reports, ver_path)
        print(f"wrote {ver_path} ({len(reports)} levels)")
    return EXIT_OK


def _verification_reports(problem, cfg, levels_cap, max_levels=6):
    """Two-level solver-deployment spectra and the decomposition identity,
    level by level on uniformly refined meshes of the problem domain."""
    mesh = problem.base_mesh()
    prev_space = None
    reports = []
    levels = max_levels if levels_cap is None else min(levels_cap, max_levels)
    K = problem.coefficient
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for level in range(levels + 1):
            space = FeSpace(mesh, cfg.p)
            if prev_space is not None and space.n_free > 0 \
                    and prev_space.n_free > 0:
                A = assemble_stiffness(space, K)
                D = build_decomposition(space, A, all_patches(mesh),
                                        coarse=(prev_space, mesh.parent))
                rep = VerificationReport(lambda_min=float("nan"),
                                         lambda_max=float("nan"),
                                         cond=float("nan"))
                if cfg.verify_spectral:
                    method = "dense_eig" if A.dim <= 2000 else "lanczos"
                    rep = spectral_bounds(A, D, method=method)
                if cfg.verify_identity and A.dim <= 200:
                    rep.identity_err = verify_decomposition_identity(
                        D, _trial_vectors(0, 20, A.dim))
                rep.level = level
                rep.ndof = space.n_free
                reports.append(rep)
            prev_space = space
            mesh, _ = uniform_refine(mesh, 1)
            if space.n_free > cfg.max_dof:
                break
    return reports


def cmd_verify(cfg, output_dir, levels_cap):
    problem = PROBLEMS[cfg.problem]
    rows = []
    failed = []

    def record(status, name, detail=""):
        rows.append((status, name, detail))
        if status == "FAIL":
            failed.append((name, detail))

    if cfg.mesh_file:
        try:
            mesh = read_mesh(cfg.mesh_file)
            st = mesh_stats(mesh)
            record("PASS", "mesh-invariants",
                   f"nv={mesh.num_vertices} nt={mesh.num_triangles} "
                   f"min_angle={st.min_angle:.2f}")
        except MeshError as exc:
            record("FAIL", "mesh-invariants", str(exc))
            _print_table(rows)
            print(f"invariant violated: mesh-invariants: {failed[0][1]}",
                  file=sys.stderr)
            return EXIT_INVARIANT

    levels = 4 if levels_cap is None else levels_cap
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _verify_properties(problem, cfg, levels, record)

    _print_table(rows)
    if failed:
        name, detail = failed[0]
        print(f"invariant violated: {name}: {detail}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _verify_properties(problem, cfg, levels, record):
    mesh = problem.base_mesh()
    K = problem.coefficient
    identity_done = False
    ratios_zeta, ratios_eta = [], []
    trace = adapt_loop(problem, estimator=cfg.estimator, theta=1.0,
                       max_dof=cfg.max_dof, p=cfg.p, q=cfg.q,
                       levels_cap=levels + 1, spectra="off", detail="light")

    mesh = problem.base_mesh()
    for level in range(levels + 1):
        space = FeSpace(mesh, cfg.p)
        if space.n_free == 0:
            mesh, _ = uniform_refine(mesh, 1)
            continue
        A = assemble_stiffness(space, K)
        b = assemble_load(space, problem.f, quad_order=problem.quad_order)
        if not np.any(b):
            record("SKIP", f"sandwich-level-{level}",
                   "zero residual (0/0): skipped")
            mesh, _ = uniform_refine(mesh, 1)
            continue
        u_h = galerkin_solve(A, b)
        r = residual_functional(space, K, problem.f, u_h,
                                quad_order=problem.quad_order)
        est = SmootherEstimator(r, mode="enriched", q=cfg.q)
        if est.A.dim <= 2000:
            rep = est.spectral_report()
            total = est.total()
            err2 = est.reference_error_squared()
            ratio = total / err2
            ok = (rep.lambda_min - 1e-9 <= ratio <= rep.lambda_max + 1e-9)
            record("PASS" if ok else "FAIL", f"sandwich-level-{level}",
                   f"ratio={ratio:.4f} in [{rep.lambda_min:.4f}, "
                   f"{rep.lambda_max:.4f}]")
            if not identity_done and est.A.dim <= 200:
                err = verify_decomposition_identity(
                    est.decomposition, _trial_vectors(1, 20, est.A.dim))
                record("PASS" if err <= 1e-8 else "FAIL",
                       "decomposition-identity", f"max rel err={err:.3e}")
                identity_done = True
        err = reference_energy_error(problem, u_h)
        if err > 0:
            from .estimate import explicit_estimator, residual_data
            from .mesh import all_patches as _ap
            data = residual_data(space, K, problem.f, u_h)
            ind = explicit_estimator(data, _ap(mesh))
            ratios_zeta.append(ind.total / err)
            bub = SmootherEstimator(r, mode="bubble")
            ratios_eta.append(np.sqrt(np.sum(bub.patch_values() ** 2)) / err)
        mesh, _ = uniform_refine(mesh, 1)
        if space.n_free > cfg.max_dof:
            break

    for name, ratios in (("effectivity-zeta", ratios_zeta),
                         ("effectivity-eta", ratios_eta)):
        if len(ratios) >= 2:
            spread = max(ratios) / min(ratios)
            record("PASS" if spread <= 10.0 else "FAIL", name,
                   f"spread={spread:.2f} over {len(ratios)} levels (<= 10)")
        else:
            record("SKIP", name, "fewer than 2 levels with positive error")

    err_col = trace.column("energy_error")
    nd = trace.column("ndof")
    keep = (nd > 3) & np.isfinite(err_col) & (err_col > 0)
    if keep.sum() >= 3:
        slope = float(np.polyfit(np.log(nd[keep]), np.log(err_col[keep]), 1)[0])
        ok = slope <= -0.25
        record("PASS" if ok else "FAIL", "convergence-rate",
               f"uniform slope={slope:.3f} (expect <= -0.25)")
    else:
        record("SKIP", "convergence-rate", "not enough levels with positive error")


def _print_table(rows):
    width = max((len(name) for _, name, _ in rows), default=10) + 2
    for status, name, detail in rows:
        print(f"{status:5s} {name:{width}s} {detail}")


def cmd_mesh_info(mesh_path):
    try:
        mesh = read_mesh(mesh_path)
    except MeshError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"cannot read mesh file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    st = mesh_stats(mesh)
    nb = int(mesh.boundary_edge.sum())
    print(f"vertices      {mesh.num_vertices}")
    print(f"triangles     {mesh.num_triangles}")
    print(f"edges         {len(mesh.edges)} ({nb} boundary)")
    print(f"regions       {sorted(set(int(r) for r in mesh.region_id))}")
    print(f"min angle     {st.min_angle:.4f} deg")
    print(f"max overlap M {st.max_overlap}")
    print(f"h range       [{st.h_min:.6g}, {st.h_max:.6g}]")
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="asfem",
        description="Adaptive FEM driven by an additive Schwarz smoother "
                    "that doubles as the error estimator.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--output", default=None, help="output directory")
        p.add_argument("--levels-cap", type=int, default=None,
                       help="cap on the number of levels")
    p = sub.add_parser("mesh-info")
    p.add_argument("--mesh", required=True, help="ASCII mesh file")
    args = parser.parse_args(argv)

    if args.command == "mesh-info":
        return cmd_mesh_info(args.mesh)

    try:
        cfg = RunConfig.from_file(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TypeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    output_dir = args.output or cfg.output
    try:
        if args.command == "run":
            return cmd_run(cfg, output_dir, args.levels_cap)
        return cmd_verify(cfg, output_dir, args.levels_cap)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (MeshError, DecompositionError) as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
