"""The solve-estimate-mark-refine loop, reference errors and rate fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimate import (AmbientBundle, SmootherEstimator, data_oscillation,
                       explicit_estimator, residual_data)
from .fem import (Coefficient, FeFunction, FeSpace, assemble_load,
                  assemble_stiffness, galerkin_solve, residual_functional)
from .mesh import all_patches, builtin_mesh, refine_bisection, uniform_refine
from .quadrature import triangle_rule
from .schwarz import build_decomposition, pcg_solve


# -- problems -------------------------------------------------------------------

@dataclass
class ProblemSpec:
    """A benchmark problem: domain, coefficient, source, optional exact
    solution (value and gradient callbacks on (m, 2) point arrays)."""
    name: str
    domain: str
    f: object
    coefficient: Coefficient = field(default_factory=Coefficient.identity)
    n0: int = 1
    exact: object = None
    exact_grad: object = None
    quad_order: int = 12

    def base_mesh(self):
        return builtin_mesh(self.domain, self.n0)

    @property
    def has_exact(self):
        return self.exact_grad is not None


def _sin_sin(x):
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def _sin_sin_grad(x):
    return np.stack([np.pi * np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
                     np.pi * np.sin(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])],
                    axis=-1)


def _problem_registry():
    reg = {}
    reg["unit_square_manufactured"] = ProblemSpec(
        name="unit_square_manufactured", domain="unit_square",
        f=lambda x: 2.0 * np.pi ** 2 * _sin_sin(x),
        exact=_sin_sin, exact_grad=_sin_sin_grad)
    reg["l_shape"] = ProblemSpec(
        name="l_shape", domain="l_shape",
        f=lambda x: np.ones(len(x)))
    reg["checkerboard"] = ProblemSpec(
        name="checkerboard", domain="checkerboard_square",
        f=lambda x: np.ones(len(x)),
        coefficient=Coefficient({0: 1.0, 1: 100.0, 2: 100.0, 3: 1.0}))
    reg["zero_source"] = ProblemSpec(
        name="zero_source", domain="unit_square",
        f=lambda x: np.zeros(len(x)),
        exact=lambda x: np.zeros(len(x)),
        exact_grad=lambda x: np.zeros((len(x), 2)))
    return reg


PROBLEMS = _problem_registry()


# -- marking --------------------------------------------------------------------

def dorfler_mark(indicators, theta):
    """Greedy bulk marking: the smallest descending prefix whose sum reaches
    theta times the total.  Ties break toward the lower index; only nonzero
    indicators are ever marked.
    """
    ind = np.asarray(indicators, dtype=float)
    if np.any(ind < 0):
        raise ValueError("indicators must be nonnegative")
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must be in (0, 1], got {theta}")
    if not np.any(ind > 0):
        raise ValueError("all-zero indicators: nothing to mark")
    order = np.lexsort((np.arange(len(ind)), -ind))
    csum = np.cumsum(ind[order])
    need = theta * csum[-1]
    last = int(np.flatnonzero(csum >= need)[0])
    marked = order[:last + 1]
    marked = marked[ind[marked] > 0]
    return np.sort(marked)


def vertex_marks_to_elements(mesh, vertex_indicators, theta, patches=None):
    """Dorfler-select vertices, then mark the union of their patches."""
    patches = all_patches(mesh) if patches is None else patches
    sel = dorfler_mark(vertex_indicators, theta)
    elems = np.unique(np.concatenate([patches[v].triangles for v in sel]))
    return elems, sel


# -- reference errors -------------------------------------------------------------

def reference_energy_error(problem, u_h, mode="auto", extra_refinements=2):
    """Energy norm of u - u_h.

    manufactured: high-order quadrature of K grad(u - u_h) . grad(u - u_h)
    against the exact gradient callback.  deep_refine: solve on the mesh
    uniformly refined `extra_refinements` times (one refinement = two
    bisection sweeps, halving h) and use the nested-space identity
    ||u_ref - u_h||_A^2 = ||u_ref||_A^2 - ||u_h||_A^2.
    """
    if mode == "auto":
        mode = "manufactured" if problem.has_exact else "deep_refine"
    space = u_h.space
    K = problem.coefficient
    if mode == "manufactured":
        if not problem.has_exact:
            raise ValueError(f"problem {problem.name} has no exact solution")
        order = max(problem.quad_order, 2 * space.degree + 4)
        pts, w = triangle_rule(order)
        _, _, det, _ = space.geometry()
        adet = np.abs(det)
        tris = np.arange(space.mesh.num_triangles)
        phys = space.physical_points(pts)
        gu = np.asarray(problem.exact_grad(phys.reshape(-1, 2)),
                        dtype=float).reshape(*phys.shape[:2], 2)
        diff = gu - u_h.element_grads(tris, pts)
        Kel = K.on_elements(space.mesh)
        val = np.einsum('q,t,tab,tqa,tqb->', w, adet, Kel, diff, diff)
        return float(np.sqrt(max(0.0, val)))
    if mode == "deep_refine":
        ref_mesh, ancestor = uniform_refine(space.mesh, 2 * extra_refinements)
        ref_space = FeSpace(ref_mesh, space.degree)
        A_ref = assemble_stiffness(ref_space, K)
        b_ref = assemble_load(ref_space, problem.f, quad_order=problem.quad_order)
        u_ref = _solve(problem, ref_space, A_ref, b_ref,
                       coarse=(space, ancestor))
        b_h = assemble_load(space, problem.f, quad_order=problem.quad_order)
        val = b_ref @ u_ref.free_values() - b_h @ u_h.free_values()
        return float(np.sqrt(max(0.0, val)))
    raise ValueError(f"unknown mode {mode!r}")


def _solve(problem, space, A, b, coarse=None):
    """Direct below 3000 dofs, two-level PCG above."""
    if space.n_free == 0:
        return FeFunction.from_free(space, np.zeros(0))
    if space.n_free < 3000 or coarse is None or coarse[0].n_free == 0:
        return galerkin_solve(A, b)
    D = build_decomposition(space, A, all_patches(space.mesh), coarse=coarse)
    res = pcg_solve(A, b, D, rel_tol=1e-12, max_iter=400)
    return FeFunction.from_free(space, res.x)


# -- the adaptive loop -------------------------------------------------------------

@dataclass
class LevelRecord:
    level: int
    ndof: int
    energy_error: float
    eta_tilde_total: float
    zeta_total: float
    smoother_estimate: float
    osc: float
    pcg_iters: int
    lambda_min: float
    lambda_max: float
    marked_count: int


TRACE_HEADER = ("level,ndof,energy_error,eta_tilde_total,zeta_total,"
                "smoother_estimate,osc,pcg_iters,lambda_min,lambda_max,"
                "marked_count")


@dataclass
class AdaptTrace:
    problem: str
    estimator: str
    theta: float
    degree: int
    records: list = field(default_factory=list)

    def column(self, name):
        return np.array([getattr(rec, name) for rec in self.records], dtype=float)

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_csv_string())

    def to_csv_string(self):
        lines = [TRACE_HEADER]
        for r in self.records:
            lines.append(",".join([
                str(r.level), str(r.ndof), repr(r.energy_error),
                repr(r.eta_tilde_total), repr(r.zeta_total),
                repr(r.smoother_estimate), repr(r.osc), str(r.pcg_iters),
                repr(r.lambda_min), repr(r.lambda_max), str(r.marked_count)]))
        return "\n".join(lines) + "\n"


ESTIMATORS = ("explicit_zeta", "bubble_eta", "smoother")


def adapt_loop(problem, estimator="explicit_zeta", theta=0.5, max_dof=2000,
               p=1, q=2, rel_tol=1e-8, spectra="auto", levels_cap=None,
               error_mode="auto", detail="full", solver="auto"):
    """Run solve -> estimate -> mark -> refine until ndof exceeds max_dof.

    estimator selects the marking quantity: per-element explicit indicators,
    per-vertex bubble estimates, or per-vertex smoother (enriched) local
    energies.  With detail='full' every level record carries all estimator
    totals; detail='light' computes only what the marking needs (plus the
    explicit indicators, oscillation and the reference error) and leaves
    the rest NaN, which keeps deep convergence studies affordable.  The
    spectral columns are NaN when `spectra` is 'off' (dense eigensolve up
    to dimension 2000, Lanczos beyond).
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; "
                         f"choose one of {ESTIMATORS}")
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must be in (0, 1], got {theta}")
    trace = AdaptTrace(problem=problem.name, estimator=estimator, theta=theta,
                       degree=p)
    mesh = problem.base_mesh()
    prev_space = None
    level = 0
    while True:
        space = FeSpace(mesh, p)
        if space.n_free > max_dof:
            break
        if levels_cap is not None and level >= levels_cap:
            break
        K = problem.coefficient
        A = assemble_stiffness(space, K)
        b = assemble_load(space, problem.f, quad_order=problem.quad_order)

        pcg_iters = 0
        if space.n_free == 0:
            u_h = FeFunction.from_free(space, np.zeros(0))
        else:
            two_level = prev_space is not None and prev_space.n_free > 0
            if two_level:
                D = build_decomposition(space, A, all_patches(mesh),
                                        coarse=(prev_space, mesh.parent))
                res = pcg_solve(A, b, D, rel_tol=rel_tol, max_iter=600)
                pcg_iters = res.iterations
            use_pcg = (solver == "pcg"
                       or (solver == "auto" and space.n_free >= 3000))
            if use_pcg and two_level:
                u_h = FeFunction.from_free(space, pcg_solve(
                    A, b, D, rel_tol=1e-12, max_iter=800).x)
            elif use_pcg:
                u_h = galerkin_solve(A, b, solver="pcg")
            else:
                u_h = galerkin_solve(A, b)

        r = residual_functional(space, K, problem.f, u_h,
                                quad_order=problem.quad_order)
        patches = all_patches(mesh)
        data = residual_data(space, K, problem.f, u_h)
        explicit = explicit_estimator(data, patches)
        osc_total, _ = data_oscillation(space, problem.f,
                                        quad_order=problem.quad_order)

        nv = mesh.num_vertices
        eta_tilde = np.full(nv, float("nan"))
        eta_enriched = np.full(nv, float("nan"))
        smoother_total = float("nan")
        lam_min = lam_max = float("nan")
        want_bubble = detail == "full" or estimator == "bubble_eta"
        want_enriched = detail == "full" or estimator == "smoother"
        bundle = AmbientBundle(r, 2) if (want_bubble or
                                         (want_enriched and q == 2)) else None
        if want_enriched:
            enriched = SmootherEstimator(r, patches=patches, mode="enriched",
                                         q=q, ambient=bundle if q == 2 else None)
            eta_enriched = enriched.patch_values()
            smoother_total = enriched.total()
            if spectra != "off":
                rep = enriched.spectral_report()
                lam_min, lam_max = rep.lambda_min, rep.lambda_max
        if want_bubble:
            bubble = SmootherEstimator(r, patches=patches, mode="bubble",
                                       ambient=bundle)
            eta_tilde = bubble.patch_values()

        energy_error = float("nan")
        if problem.has_exact or error_mode == "deep_refine":
            energy_error = reference_energy_error(problem, u_h, mode=error_mode)
        elif error_mode == "auto":
            energy_error = reference_energy_error(problem, u_h,
                                                  mode="deep_refine")

        if estimator == "explicit_zeta":
            indicators = explicit.zeta_T ** 2
        elif estimator == "bubble_eta":
            indicators = eta_tilde ** 2
        else:
            indicators = eta_enriched ** 2

        marked = np.array([], dtype=np.int64)
        done = not np.any(indicators > 0)
        if not done:
            if estimator == "explicit_zeta":
                marked = dorfler_mark(indicators, theta)
            else:
                marked, _ = vertex_marks_to_elements(mesh, indicators, theta,
                                                     patches)
        trace.records.append(LevelRecord(
            level=level, ndof=space.n_free, energy_error=energy_error,
            eta_tilde_total=float(np.sqrt(np.sum(eta_tilde ** 2))),
            zeta_total=explicit.total, smoother_estimate=smoother_total,
            osc=osc_total, pcg_iters=pcg_iters, lambda_min=lam_min,
            lambda_max=lam_max, marked_count=len(marked)))
        if done:
            break
        mesh = refine_bisection(mesh, marked)
        prev_space = space
        level += 1
    return trace


def fit_rate(trace, column):
    """Least-squares slope of log(column) against log(ndof).

    Returns (slope, per_step_slopes); needs at least 3 levels with positive
    values.
    """
    if isinstance(trace, AdaptTrace):
        ndof = trace.column("ndof")
        vals = trace.column(column)
    else:
        ndof, vals = np.asarray(trace, dtype=float), np.asarray(column, dtype=float)
    keep = (vals > 0) & (ndof > 0) & np.isfinite(vals)
    ndof, vals = ndof[keep], vals[keep]
    if len(vals) < 3:
        raise ValueError(f"need at least 3 positive levels, got {len(vals)}")
    lx, ly = np.log(ndof), np.log(vals)
    slope = float(np.polyfit(lx, ly, 1)[0])
    steps = np.diff(ly) / np.diff(lx)
    return slope, steps
