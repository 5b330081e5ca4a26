import warnings

import numpy as np
import pytest

from asfem.fem import (Coefficient, FeSpace, SolverError, assemble_load,
                       assemble_stiffness, energy_norm, galerkin_solve)
from asfem.mesh import all_patches, builtin_mesh, mesh_stats, uniform_refine
from asfem.schwarz import (DecompositionError, build_decomposition,
                           patch_free_dofs, pcg_solve, spectral_bounds,
                           verify_decomposition_identity,
                           write_verification_csv)

ONE = lambda x: np.ones(len(x))
K1 = Coefficient.identity()


def two_level(n0=2, coarse_rounds=2, p=1):
    mesh = builtin_mesh("unit_square", n0)
    coarse, _ = uniform_refine(mesh, coarse_rounds)
    fine, _ = uniform_refine(coarse, 1)
    sp_c, sp_f = FeSpace(coarse, p), FeSpace(fine, p)
    A = assemble_stiffness(sp_f, K1)
    b = assemble_load(sp_f, ONE)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        D = build_decomposition(sp_f, A, all_patches(fine),
                                coarse=(sp_c, fine.parent))
    return sp_f, A, b, D


def whole_space(A):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_decomposition(None, A, [], patch_blocks=[np.arange(A.dim)],
                                   overlap=1)


class TestBuildDecomposition:
    def test_single_subspace_gives_exact_inverse(self):
        _, A, b, _ = two_level()
        D = whole_space(A)
        rng = np.random.default_rng(0)
        r = rng.standard_normal(A.dim)
        assert np.abs(A @ D.apply_preconditioner(r) - r).max() < 1e-12

    def test_cross_mesh_single_block(self):
        mesh, _ = uniform_refine(builtin_mesh("unit_square", 1), 1)
        sp = FeSpace(mesh, 1)
        A = assemble_stiffness(sp, K1)
        with pytest.warns(UserWarning, match="dropped"):
            D = build_decomposition(sp, A, all_patches(mesh))
        assert D.num_blocks == 1
        assert D._groups[0].indices.shape == (1, 1)

    def test_patch_count_matches_interior_vertices(self):
        mesh, _ = uniform_refine(builtin_mesh("unit_square", 2), 2)
        sp = FeSpace(mesh, 1)
        A = assemble_stiffness(sp, K1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            D = build_decomposition(sp, A, all_patches(mesh))
        assert D.num_blocks == int((~mesh.boundary_vertex).sum())

    def test_zero_dof_patches_dropped_with_warning(self):
        mesh = builtin_mesh("unit_square", 2)
        sp = FeSpace(mesh, 1)
        A = assemble_stiffness(sp, K1)
        with pytest.warns(UserWarning, match="dropped"):
            D = build_decomposition(sp, A, all_patches(mesh))
        assert len(D.dropped) == 8  # the boundary vertices

    def test_patch_dofs_p2(self):
        mesh, _ = uniform_refine(builtin_mesh("unit_square", 1), 2)
        sp = FeSpace(mesh, 2)
        patches = all_patches(mesh)
        center = next(p for p in patches
                      if not mesh.boundary_vertex[p.vertex])
        idx = patch_free_dofs(sp, center)
        # the vertex dof plus one midpoint per interior spoke
        assert len(idx) == 1 + len(center.interior_edges)

    def test_overlap_matches_mesh_stats(self):
        sp_f, A, _, D = two_level()
        assert D.overlap == mesh_stats(sp_f.mesh).max_overlap


class TestSmoother:
    def test_zero_input(self):
        _, A, _, D = two_level()
        assert np.all(D.apply_smoother(np.zeros(A.dim)) == 0)

    def test_single_subspace_returns_inverse(self):
        _, A, _, _ = two_level()
        D = whole_space(A)
        r = np.linspace(1, 2, A.dim)
        assert np.abs(A @ D.apply_smoother(r) - r).max() < 1e-12

    def test_symmetry(self):
        _, A, _, D = two_level()
        rng = np.random.default_rng(1)
        for _ in range(5):
            r, s = rng.standard_normal((2, A.dim))
            lhs = r @ D.apply_smoother(s)
            rhs = s @ D.apply_smoother(r)
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))

    def test_preconditioner_symmetry(self):
        _, A, _, D = two_level()
        rng = np.random.default_rng(2)
        for _ in range(5):
            r, s = rng.standard_normal((2, A.dim))
            lhs = r @ D.apply_preconditioner(s)
            rhs = s @ D.apply_preconditioner(r)
            scale = np.linalg.norm(r) * np.linalg.norm(s)
            assert abs(lhs - rhs) <= 1e-12 * scale

    def test_coarse_annihilated_residual_shortcut(self):
        # Q_h r = 0 implies B r = S r
        sp_f, A, b, D = two_level()
        rng = np.random.default_rng(3)
        w = rng.standard_normal(A.dim)
        P = D.coarse_P
        r = w - P @ np.linalg.solve((P.T @ P).toarray(), P.T @ w)
        assert np.abs(P.T @ r).max() < 1e-10 * np.abs(w).max()
        diff = D.apply_preconditioner(r) - D.apply_smoother(r)
        assert np.abs(diff).max() < 1e-10 * np.abs(r).max()

    def test_dimension_mismatch(self):
        _, A, _, D = two_level()
        with pytest.raises(ValueError, match="dimension mismatch"):
            D.apply_smoother(np.ones(A.dim + 1))


class TestPcg:
    def test_exact_preconditioner_one_iteration(self):
        _, A, b, _ = two_level()
        D = whole_space(A)
        res = pcg_solve(A, b, D, rel_tol=1e-10)
        assert res.iterations == 1

    def test_zero_rhs(self):
        _, A, _, D = two_level()
        res = pcg_solve(A, np.zeros(A.dim), D)
        assert res.iterations == 0
        assert np.all(res.x == 0)

    def test_two_level_iteration_bound(self):
        # level-5 fine mesh on the solver benchmark family
        mesh = builtin_mesh("unit_square", 4)
        coarse, _ = uniform_refine(mesh, 4)
        fine, _ = uniform_refine(coarse, 1)
        sp_c, sp_f = FeSpace(coarse, 1), FeSpace(fine, 1)
        A = assemble_stiffness(sp_f, K1)
        b = assemble_load(sp_f, ONE)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            D = build_decomposition(sp_f, A, all_patches(fine),
                                    coarse=(sp_c, fine.parent))
        res = pcg_solve(A, b, D, rel_tol=1e-8)
        assert res.iterations <= 40
        assert np.linalg.norm(b - A @ res.x) <= 1e-8 * np.linalg.norm(b)

    def test_monotone_energy_error(self):
        sp_f, A, b, D = two_level(n0=2, coarse_rounds=3)
        x_star = galerkin_solve(A, b).free_values()
        errors = []
        pcg_solve(A, b, D, rel_tol=1e-12,
                  callback=lambda x: errors.append(energy_norm(A, x - x_star)))
        diffs = np.diff(errors)
        assert np.all(diffs <= 1e-12 * max(errors))

    def test_max_iter_error(self):
        _, A, b, D = two_level()
        with pytest.raises(SolverError, match="PCG"):
            pcg_solve(A, b, D, rel_tol=1e-15, max_iter=1)


class TestSpectralBounds:
    def test_exact_preconditioner_unit_spectrum(self):
        _, A, _, _ = two_level()
        D = whole_space(A)
        rep = spectral_bounds(A, D)
        assert rep.lambda_min == pytest.approx(1.0, abs=1e-10)
        assert rep.lambda_max == pytest.approx(1.0, abs=1e-10)

    def test_scaling_invariance(self):
        from asfem.fem import SparseOperator
        sp_f, A, _, _ = two_level()
        rep1 = spectral_bounds(A, _rebuild(sp_f, A))
        cA = SparseOperator(3.0 * A.matrix, space=A.space)
        rep2 = spectral_bounds(cA, _rebuild(sp_f, cA))
        assert rep2.lambda_min == pytest.approx(rep1.lambda_min, rel=1e-10)
        assert rep2.lambda_max == pytest.approx(rep1.lambda_max, rel=1e-10)

    def test_lanczos_matches_dense(self):
        _, A, _, D = two_level(n0=2, coarse_rounds=3)
        dense = spectral_bounds(A, D, method="dense_eig")
        lz = spectral_bounds(A, D, method="lanczos")
        assert lz.lambda_min == pytest.approx(dense.lambda_min, rel=1e-8)
        assert lz.lambda_max == pytest.approx(dense.lambda_max, rel=1e-8)

    def test_dense_cap(self):
        _, A, _, D = two_level()
        import asfem.schwarz as schwarz
        old = schwarz.DENSE_EIG_CAP
        schwarz.DENSE_EIG_CAP = 3
        try:
            with pytest.raises(ValueError, match="dense_eig limited"):
                spectral_bounds(A, D, method="dense_eig")
        finally:
            schwarz.DENSE_EIG_CAP = old

    def test_condition_plateau_across_levels(self):
        conds = _solver_conds(levels=(2, 3, 4, 5))
        spread = max(conds) / min(conds)
        assert spread <= 1.25, conds


def _rebuild(sp_f, A):
    coarse_mesh = None
    # rebuild a two-level decomposition for the given operator
    mesh = sp_f.mesh
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return build_decomposition(sp_f, A, all_patches(mesh))


def _solver_conds(levels, n0=4):
    mesh = builtin_mesh("unit_square", n0)
    meshes = [mesh]
    for _ in range(max(levels)):
        mesh, _ = uniform_refine(mesh, 1)
        meshes.append(mesh)
    conds = []
    for L in levels:
        sp_c = FeSpace(meshes[L - 1], 1)
        sp_f = FeSpace(meshes[L], 1)
        A = assemble_stiffness(sp_f, K1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            D = build_decomposition(sp_f, A, all_patches(meshes[L]),
                                    coarse=(sp_c, meshes[L].parent))
        conds.append(spectral_bounds(A, D).cond)
    return conds


class TestDecompositionIdentity:
    def test_single_subspace(self):
        _, A, _, _ = two_level()
        D = whole_space(A)
        rng = np.random.default_rng(5)
        trials = rng.standard_normal((5, A.dim))
        assert verify_decomposition_identity(D, trials) < 1e-10

    def test_zero_vector(self):
        _, A, _, D = two_level()
        # both sides vanish; the oracle reports zero discrepancy
        assert verify_decomposition_identity(D, [np.zeros(A.dim)]) == 0.0

    def test_two_level_oracle(self):
        # cross mesh plus one uniform refinement, coarse + vertex patches
        _, A, _, D = two_level(n0=1, coarse_rounds=1)
        rng = np.random.default_rng(6)
        trials = rng.standard_normal((20, A.dim))
        assert verify_decomposition_identity(D, trials) <= 1e-8

    def test_jacobi_local_solver(self):
        mesh = builtin_mesh("unit_square", 2)
        coarse, _ = uniform_refine(mesh, 1)
        fine, _ = uniform_refine(coarse, 1)
        sp_c, sp_f = FeSpace(coarse, 2), FeSpace(fine, 2)
        A = assemble_stiffness(sp_f, K1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            D = build_decomposition(sp_f, A, all_patches(fine),
                                    coarse=(sp_c, fine.parent),
                                    local_solver="jacobi")
        assert D.gamma_lower < 1.0 < D.gamma_upper
        rng = np.random.default_rng(7)
        trials = rng.standard_normal((10, A.dim))
        assert verify_decomposition_identity(D, trials) <= 1e-8

    def test_non_covering_rejected(self):
        _, A, _, _ = two_level()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            D = build_decomposition(None, A, [],
                                    patch_blocks=[np.arange(2)], overlap=1)
        with pytest.raises(DecompositionError, match="non-covering"):
            verify_decomposition_identity(D, [np.ones(A.dim)])

    def test_dimension_cap(self):
        mesh = builtin_mesh("unit_square", 2)
        m, _ = uniform_refine(mesh, 7)
        sp = FeSpace(m, 1)
        A = assemble_stiffness(sp, K1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            D = build_decomposition(sp, A, all_patches(m))
        with pytest.raises(ValueError, match="limited to dimension 200"):
            verify_decomposition_identity(D, [np.ones(A.dim)])


class TestVerificationCsv:
    def test_schema(self, tmp_path):
        _, A, _, D = two_level()
        rep = spectral_bounds(A, D)
        rep.level, rep.ndof = 3, A.dim
        path = tmp_path / "ver.csv"
        write_verification_csv([rep], path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "level,ndof,lambda_min,lambda_max,cond,identity_err"
        assert lines[1].startswith(f"3,{A.dim},")
