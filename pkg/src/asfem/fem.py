"""Lagrange finite element spaces, assembly, solves and residual pairing.

Spaces of degree p >= 1 are nodal Lagrange spaces on a
:class:`~asfem.mesh.TriangleMesh`; dofs are enumerated vertices first, then
edge nodes (ordered from the lower-numbered endpoint), then element
interior nodes, which makes the numbering deterministic and conforming
across shared edges.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import splu

from .quadrature import triangle_rule


class SolverError(RuntimeError):
    """Linear solve failed: singular matrix, non-convergence, or loss of
    positive definiteness."""


# -- reference shape functions ------------------------------------------------

@lru_cache(maxsize=None)
def _exponents(p):
    return tuple((a, b) for a in range(p + 1) for b in range(p + 1 - a))


@lru_cache(maxsize=None)
def lattice_nodes(p):
    """Reference lattice nodes (i/p, j/p), i + j <= p, lexicographic in (i, j)."""
    nodes = [(i, j) for i in range(p + 1) for j in range(p + 1 - i)]
    return np.array(nodes, dtype=float) / p if p > 0 else np.zeros((1, 2))


@lru_cache(maxsize=None)
def _shape_coeffs(p):
    """Monomial coefficients of the nodal basis: phi_n = sum_k C[k, n] x^a_k y^b_k."""
    nodes = lattice_nodes(p)
    V = _monomials(p, tuple(map(tuple, nodes)))
    return np.linalg.inv(V)


def _monomials(p, pts):
    pts = np.asarray(pts, dtype=float)
    out = np.empty((len(pts), len(_exponents(p))))
    for n, (a, b) in enumerate(_exponents(p)):
        out[:, n] = pts[:, 0] ** a * pts[:, 1] ** b
    return out


def shape_values(p, pts):
    """Nodal basis values at reference points; shape (npts, nloc)."""
    return _monomials(p, tuple(map(tuple, np.asarray(pts)))) @ _shape_coeffs(p)


def shape_grads(p, pts):
    """Reference gradients of the nodal basis; shape (npts, nloc, 2)."""
    pts = np.asarray(pts, dtype=float)
    ex = _exponents(p)
    dx = np.zeros((len(pts), len(ex)))
    dy = np.zeros((len(pts), len(ex)))
    for n, (a, b) in enumerate(ex):
        if a > 0:
            dx[:, n] = a * pts[:, 0] ** (a - 1) * pts[:, 1] ** b
        if b > 0:
            dy[:, n] = b * pts[:, 0] ** a * pts[:, 1] ** (b - 1)
    C = _shape_coeffs(p)
    return np.stack([dx @ C, dy @ C], axis=-1)


def shape_hessians(p, pts):
    """Reference second derivatives; shape (npts, nloc, 2, 2)."""
    pts = np.asarray(pts, dtype=float)
    ex = _exponents(p)
    dxx = np.zeros((len(pts), len(ex)))
    dxy = np.zeros((len(pts), len(ex)))
    dyy = np.zeros((len(pts), len(ex)))
    for n, (a, b) in enumerate(ex):
        if a > 1:
            dxx[:, n] = a * (a - 1) * pts[:, 0] ** (a - 2) * pts[:, 1] ** b
        if a > 0 and b > 0:
            dxy[:, n] = a * b * pts[:, 0] ** (a - 1) * pts[:, 1] ** (b - 1)
        if b > 1:
            dyy[:, n] = b * (b - 1) * pts[:, 0] ** a * pts[:, 1] ** (b - 2)
    C = _shape_coeffs(p)
    H = np.empty((len(pts), C.shape[1], 2, 2))
    H[:, :, 0, 0] = dxx @ C
    H[:, :, 0, 1] = H[:, :, 1, 0] = dxy @ C
    H[:, :, 1, 1] = dyy @ C
    return H


# -- coefficient --------------------------------------------------------------

class Coefficient:
    """Piecewise constant symmetric 2x2 diffusion tensor, one block per region.

    `matrices` is either a single scalar/2x2 array used for every region, or
    a dict mapping region ids to scalars/2x2 arrays.
    """

    def __init__(self, matrices=1.0):
        if not isinstance(matrices, dict):
            matrices = {None: matrices}
        self.blocks = {}
        for region, mat in matrices.items():
            mat = np.asarray(mat, dtype=float)
            if mat.ndim == 0:
                mat = float(mat) * np.eye(2)
            if mat.shape != (2, 2) or not np.allclose(mat, mat.T, atol=1e-14):
                raise ValueError(f"region {region}: K must be a symmetric "
                                 f"2x2 matrix or a scalar")
            ev = np.linalg.eigvalsh(mat)
            if ev[0] <= 0:
                raise ValueError(f"region {region}: K is not positive definite")
            self.blocks[region] = mat
        evs = np.concatenate([np.linalg.eigvalsh(m) for m in self.blocks.values()])
        self.alpha_lower = float(evs.min())
        self.alpha_upper = float(evs.max())

    @classmethod
    def identity(cls):
        return cls(1.0)

    def on_elements(self, mesh):
        """Per-element tensors, shape (nt, 2, 2)."""
        if None in self.blocks:
            return np.broadcast_to(self.blocks[None],
                                   (mesh.num_triangles, 2, 2)).copy()
        out = np.empty((mesh.num_triangles, 2, 2))
        for k, r in enumerate(mesh.region_id):
            try:
                out[k] = self.blocks[int(r)]
            except KeyError:
                raise ValueError(f"missing region id {int(r)} in coefficient") \
                    from None
        return out


# -- finite element space -----------------------------------------------------

class FeSpace:
    """Continuous Lagrange space of degree p on a triangle mesh.

    When ``constrain_boundary`` is true (the default), dofs on the mesh
    boundary are constrained to zero and the free dofs realize the
    zero-trace subspace.
    """

    def __init__(self, mesh, degree=1, constrain_boundary=True):
        if degree < 1:
            raise ValueError("degree must be >= 1")
        self.mesh = mesh
        self.degree = int(degree)
        self.constrain_boundary = bool(constrain_boundary)
        self._enumerate_dofs()

    def _enumerate_dofs(self):
        p = self.degree
        mesh = self.mesh
        nv, ne, nt = mesh.num_vertices, len(mesh.edges), mesh.num_triangles
        n_edge = p - 1
        n_int = (p - 1) * (p - 2) // 2
        self.ndof = nv + ne * n_edge + nt * n_int

        nodes = lattice_nodes(p)
        lat = np.rint(nodes * p).astype(int)
        cell_dofs = np.empty((nt, len(nodes)), dtype=np.int64)
        tris = mesh.triangles
        # local edges opposite vertex 0/1/2 are (v1,v2)/(v0,v2)/(v0,v1)
        int_count = 0
        for n, (i, j) in enumerate(lat):
            if (i, j) == (0, 0):
                cell_dofs[:, n] = tris[:, 0]
            elif (i, j) == (p, 0):
                cell_dofs[:, n] = tris[:, 1]
            elif (i, j) == (0, p):
                cell_dofs[:, n] = tris[:, 2]
            elif j == 0:  # edge v0 -> v1, parameter i
                cell_dofs[:, n] = self._edge_dof(tris[:, 0], tris[:, 1], i, 2)
            elif i == 0:  # edge v0 -> v2, parameter j
                cell_dofs[:, n] = self._edge_dof(tris[:, 0], tris[:, 2], j, 1)
            elif i + j == p:  # edge v1 -> v2, parameter j
                cell_dofs[:, n] = self._edge_dof(tris[:, 1], tris[:, 2], j, 0)
            else:
                cell_dofs[:, n] = (nv + ne * n_edge + n_int * np.arange(nt)
                                   + int_count)
                int_count += 1
        self.cell_dofs = cell_dofs

        coords = np.empty((self.ndof, 2))
        dof_tri = np.empty(self.ndof, dtype=np.int64)
        v0 = mesh.vertices[tris[:, 0]]
        jac = np.stack([mesh.vertices[tris[:, 1]] - v0,
                        mesh.vertices[tris[:, 2]] - v0], axis=-1)
        phys = v0[:, None, :] + np.einsum('tab,nb->tna', jac, nodes)
        coords[cell_dofs.ravel()] = phys.reshape(-1, 2)
        dof_tri[cell_dofs.ravel()] = np.repeat(np.arange(nt), len(nodes))
        self.dof_coords = coords
        self.dof_tri = dof_tri

        constrained = np.zeros(self.ndof, dtype=bool)
        if self.constrain_boundary:
            constrained[:nv] = mesh.boundary_vertex
            if n_edge > 0:
                bedge = np.flatnonzero(mesh.boundary_edge)
                ids = (nv + bedge[:, None] * n_edge
                       + np.arange(n_edge)[None, :]).ravel()
                constrained[ids] = True
        self.free_dofs = np.flatnonzero(~constrained)
        self.free_index = -np.ones(self.ndof, dtype=np.int64)
        self.free_index[self.free_dofs] = np.arange(len(self.free_dofs))
        self.n_free = len(self.free_dofs)

    def _edge_dof(self, ga, gb, t, opp):
        """Global dof of the t-th node (t = 1..p-1) from ga to gb."""
        p = self.degree
        mesh = self.mesh
        eid = mesh.tri_edges[:, opp]
        fwd = ga < gb
        pos = np.where(fwd, t - 1, p - t - 1)
        return mesh.num_vertices + eid * (p - 1) + pos

    # geometry cache shared by assembly and evaluation
    def geometry(self):
        if not hasattr(self, "_geom"):
            tris = self.mesh.triangles
            v = self.mesh.vertices
            v0 = v[tris[:, 0]]
            jac = np.stack([v[tris[:, 1]] - v0, v[tris[:, 2]] - v0], axis=-1)
            det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
            inv = np.empty_like(jac)
            inv[:, 0, 0] = jac[:, 1, 1]
            inv[:, 0, 1] = -jac[:, 0, 1]
            inv[:, 1, 0] = -jac[:, 1, 0]
            inv[:, 1, 1] = jac[:, 0, 0]
            inv /= det[:, None, None]
            self._geom = (v0, jac, det, inv.transpose(0, 2, 1).copy())
        return self._geom  # (v0, jac, det, invJT)

    def physical_points(self, ref_pts, tris=None):
        v0, jac, _, _ = self.geometry()
        if tris is not None:
            v0, jac = v0[tris], jac[tris]
        return v0[:, None, :] + np.einsum('tab,qb->tqa', jac, ref_pts)


# -- sparse operator ----------------------------------------------------------

class SparseOperator:
    """Symmetric positive definite matrix over the free dofs of a space."""

    def __init__(self, matrix, space=None):
        self.matrix = sparse.csr_matrix(matrix)
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("operator must be square")
        self.space = space
        self._lu = None
        self._dense = None

    @property
    def dim(self):
        return self.matrix.shape[0]

    def matvec(self, x):
        return self.matrix @ x

    __matmul__ = matvec

    def dense(self):
        if self._dense is None:
            self._dense = self.matrix.toarray()
        return self._dense

    def solve(self, rhs):
        """Direct solve through a cached sparse LU factorization."""
        if self._lu is None:
            try:
                self._lu = splu(self.matrix.tocsc())
            except RuntimeError as exc:
                raise SolverError(f"singular matrix: {exc}") from exc
        return self._lu.solve(rhs)

    def diagonal(self):
        return self.matrix.diagonal()


def assemble_stiffness(space, K, quad_order=None):
    """Stiffness matrix (i, j) -> a(phi_j, phi_i) over the free dofs.

    Exact for the piecewise constant coefficient K: the default quadrature
    order 2(p-1) integrates the gradient products exactly.
    """
    p = space.degree
    order = max(0, 2 * (p - 1)) if quad_order is None else quad_order
    pts, w = triangle_rule(order)
    grads = shape_grads(p, pts)
    _, _, det, invJT = space.geometry()
    adet = np.abs(det)
    Kel = K.on_elements(space.mesh)
    G = np.einsum('tab,qlb->tqla', invJT, grads)
    KG = np.einsum('tab,tqlb->tqla', Kel, G)
    loc = np.einsum('q,t,tqla,tqma->tlm', w, adet, KG, G, optimize=True)
    loc = 0.5 * (loc + loc.transpose(0, 2, 1))

    fidx = space.free_index[space.cell_dofs]  # (nt, nloc)
    nloc = fidx.shape[1]
    rows = np.repeat(fidx[:, :, None], nloc, axis=2).ravel()
    cols = np.repeat(fidx[:, None, :], nloc, axis=1).ravel()
    vals = loc.ravel()
    keep = (rows >= 0) & (cols >= 0)
    mat = sparse.coo_matrix((vals[keep], (rows[keep], cols[keep])),
                            shape=(space.n_free, space.n_free)).tocsr()
    mat.sum_duplicates()
    return SparseOperator(mat, space=space)


def assemble_load(space, f, quad_order=None):
    """Load vector i -> integral of f * phi_i over the free dofs.

    f maps an (m, 2) array of points to (m,) values.
    """
    p = space.degree
    order = 2 * p if quad_order is None else quad_order
    pts, w = triangle_rule(order)
    vals = shape_values(p, pts)
    _, _, det, _ = space.geometry()
    adet = np.abs(det)
    phys = space.physical_points(pts)
    fv = np.asarray(f(phys.reshape(-1, 2)), dtype=float).reshape(phys.shape[:2])
    loc = np.einsum('q,t,tq,ql->tl', w, adet, fv, vals)
    b = np.zeros(space.n_free)
    fidx = space.free_index[space.cell_dofs]
    keep = fidx >= 0
    np.add.at(b, fidx[keep], loc[keep])
    return b


def energy_norm(A, v):
    """The norm induced by the SPD operator: sqrt(v' A v)."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != A.dim:
        raise ValueError(f"dimension mismatch: operator {A.dim}, vector {v.shape[0]}")
    return float(np.sqrt(max(0.0, v @ (A @ v))))


# -- finite element functions -------------------------------------------------

class FeFunction:
    """A coefficient vector over all dofs of a space (boundary included)."""

    def __init__(self, space, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.ndof,):
            raise ValueError(f"coefficient length {coeffs.shape} does not "
                             f"match the space dof count {space.ndof}")
        self.space = space
        self.coeffs = coeffs

    @classmethod
    def from_free(cls, space, x):
        coeffs = np.zeros(space.ndof)
        coeffs[space.free_dofs] = x
        return cls(space, coeffs)

    @classmethod
    def interpolate(cls, space, func):
        """Nodal interpolation of a pointwise callback func((m,2)) -> (m,)."""
        return cls(space, np.asarray(func(space.dof_coords), dtype=float))

    def free_values(self):
        return self.coeffs[self.space.free_dofs]

    def element_values(self, tris, ref_pts):
        vals = shape_values(self.space.degree, ref_pts)
        c = self.coeffs[self.space.cell_dofs[tris]]
        return np.einsum('ql,tl->tq', vals, c)

    def element_grads(self, tris, ref_pts):
        """Physical gradients on the listed triangles; shape (m, nq, 2)."""
        grads = shape_grads(self.space.degree, ref_pts)
        _, _, _, invJT = self.space.geometry()
        G = np.einsum('tab,qlb->tqla', invJT[tris], grads)
        c = self.coeffs[self.space.cell_dofs[tris]]
        return np.einsum('tqla,tl->tqa', G, c)

    def element_grads_at(self, tris, ref_pts_per_tri):
        """Physical gradients with per-element reference points (m, nq, 2)."""
        m, nq, _ = ref_pts_per_tri.shape
        grads = shape_grads(self.space.degree,
                            ref_pts_per_tri.reshape(-1, 2)).reshape(m, nq, -1, 2)
        _, _, _, invJT = self.space.geometry()
        G = np.einsum('tab,tqlb->tqla', invJT[tris], grads)
        c = self.coeffs[self.space.cell_dofs[tris]]
        return np.einsum('tqla,tl->tqa', G, c)

    def element_div_Kgrad(self, K, tris, ref_pts):
        """div(K grad u) per element with elementwise constant K; (m, nq)."""
        H = shape_hessians(self.space.degree, ref_pts)
        _, _, _, invJT = self.space.geometry()
        J = invJT[tris]
        # physical Hessian: Hp_ab = invJT_ac invJT_bd Href_cd
        Hp = np.einsum('tac,tbd,qlcd->tqlab', J, J, H)
        c = self.coeffs[self.space.cell_dofs[tris]]
        Hu = np.einsum('tqlab,tl->tqab', Hp, c)
        Kel = K.on_elements(self.space.mesh)[tris]
        return np.einsum('tab,tqab->tq', Kel, Hu)


def galerkin_solve(A, b, solver="direct_dense", rel_tol=1e-12, max_iter=None):
    """Solve A x = b on the free dofs and return the FeFunction (boundary
    dofs zero).  The residual must satisfy ||b - Ax|| <= 1e-10 ||b||."""
    if A.space is None:
        raise ValueError("operator carries no space; assemble it first")
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.dim:
        raise ValueError(f"dimension mismatch: operator {A.dim}, rhs {b.shape[0]}")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return FeFunction.from_free(A.space, np.zeros(A.dim))
    if solver == "direct_dense":
        try:
            x = cho_solve(cho_factor(A.dense()), b)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular or indefinite matrix: {exc}") from exc
    elif solver == "pcg":
        x, _ = _jacobi_pcg(A, b, rel_tol=min(rel_tol, 1e-12),
                           max_iter=max_iter or 20 * A.dim)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    res = np.linalg.norm(b - A @ x)
    if res > 1e-10 * bnorm:
        raise SolverError(f"solver {solver} left residual {res:.3e} "
                          f"> 1e-10 * ||b||")
    return FeFunction.from_free(A.space, x)


def _jacobi_pcg(A, b, rel_tol, max_iter):
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("non-positive diagonal entry; matrix is not SPD")
    x = np.zeros_like(b)
    r = b.copy()
    z = r / d
    p = z.copy()
    rz = r @ z
    bnorm = np.linalg.norm(b)
    for it in range(1, max_iter + 1):
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0:
            raise SolverError("non-positive curvature in CG; matrix is not SPD")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= rel_tol * bnorm:
            return x, it
        z = r / d
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not converge in {max_iter} iterations")


# -- residual functional ------------------------------------------------------

class ResidualFunctional:
    """The residual of a discrete solution, r = f - A u_h, as a functional
    that can be paired with any piecewise polynomial test function on the
    same mesh or on a submesh of it:

        <r, v> = integral(f v) - integral(K grad u_h . grad v).
    """

    def __init__(self, space, K, f, u_h, quad_order=12):
        if u_h.space is not space:
            raise ValueError("u_h does not belong to the given space")
        self.space = space
        self.K = K
        self.f = f
        self.u_h = u_h
        self.quad_order = int(quad_order)
        self._Kel = K.on_elements(space.mesh)

    def dual_vector(self, target_space, parent_tris=None, quad_order=None):
        """<r, psi_i> for every free basis function of target_space.

        target_space lives on the same mesh (parent_tris None) or on a
        submesh whose triangles keep their parent vertex order; parent_tris
        maps submesh triangles to parent triangles.
        """
        order = self.quad_order if quad_order is None else quad_order
        pts, w = triangle_rule(order)
        mesh2 = target_space.mesh
        m = mesh2.num_triangles
        parent = (np.arange(m, dtype=np.int64) if parent_tris is None
                  else np.asarray(parent_tris, dtype=np.int64))
        _, _, det2, invJT2 = target_space.geometry()
        adet = np.abs(det2)
        wts = w[None, :] * adet[:, None]
        phys = target_space.physical_points(pts)
        fv = np.asarray(self.f(phys.reshape(-1, 2)), dtype=float).reshape(m, -1)
        gu = self.u_h.element_grads(parent, pts)
        Kgu = np.einsum('tab,tqb->tqa', self._Kel[parent], gu)

        vals = shape_values(target_space.degree, pts)
        grads = shape_grads(target_space.degree, pts)
        G = np.einsum('tab,qlb->tqla', invJT2, grads)
        loc = (np.einsum('tq,tq,ql->tl', wts, fv, vals)
               - np.einsum('tq,tqa,tqla->tl', wts, Kgu, G))
        out = np.zeros(target_space.n_free)
        fidx = target_space.free_index[target_space.cell_dofs]
        keep = fidx >= 0
        np.add.at(out, fidx[keep], loc[keep])
        return out

    def pair_values(self, parent_tris, ref_pts, wts_phys, vals, grads):
        """Pair r with explicitly tabulated local functions.

        parent_tris: (m,) parent triangles; ref_pts: (nq, 2) reference
        points in those triangles; wts_phys: (m, nq) physical weights;
        vals/grads: (m, nq, nb) and (m, nq, nb, 2).  Returns (m, nb).
        """
        parent = np.asarray(parent_tris, dtype=np.int64)
        phys = self.space.physical_points(ref_pts, tris=parent)
        fv = np.asarray(self.f(phys.reshape(-1, 2)),
                        dtype=float).reshape(phys.shape[:2])
        gu = self.u_h.element_grads(parent, ref_pts)
        Kgu = np.einsum('tab,tqb->tqa', self._Kel[parent], gu)
        return (np.einsum('tq,tq,tqb->tb', wts_phys, fv, vals)
                - np.einsum('tq,tqa,tqba->tb', wts_phys, Kgu, grads))

    def pair_function(self, v, parent_tris=None):
        """<r, v> for an FeFunction v."""
        return float(self.dual_vector(v.space, parent_tris) @ v.free_values())


def residual_functional(space, K, f, u_h, quad_order=12):
    """Residual functional handle for the solved problem; see
    :class:`ResidualFunctional`."""
    return ResidualFunctional(space, K, f, u_h, quad_order=quad_order)


# -- prolongation between nested spaces ----------------------------------------

def prolongation(coarse_space, fine_space, tri_map=None):
    """Matrix of the embedding of a coarse space into a nested fine space.

    Entries are coarse basis values at fine dof nodes, so the result is
    exact whenever the coarse space is contained in the fine one (same mesh
    with lower degree, or an ancestor mesh under bisection).  tri_map sends
    fine triangles to coarse triangles and defaults to the identity.

    Returns a CSR matrix of shape (fine free dofs, coarse free dofs).
    """
    if tri_map is None:
        tri_map = np.arange(fine_space.mesh.num_triangles, dtype=np.int64)
    else:
        tri_map = np.asarray(tri_map, dtype=np.int64)

    fdofs = fine_space.free_dofs
    x = fine_space.dof_coords[fdofs]
    ctri = tri_map[fine_space.dof_tri[fdofs]]

    cmesh = coarse_space.mesh
    tris = cmesh.triangles[ctri]
    v0 = cmesh.vertices[tris[:, 0]]
    jac = np.stack([cmesh.vertices[tris[:, 1]] - v0,
                    cmesh.vertices[tris[:, 2]] - v0], axis=-1)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    rhs = x - v0
    ref = np.empty_like(rhs)
    ref[:, 0] = (jac[:, 1, 1] * rhs[:, 0] - jac[:, 0, 1] * rhs[:, 1]) / det
    ref[:, 1] = (-jac[:, 1, 0] * rhs[:, 0] + jac[:, 0, 0] * rhs[:, 1]) / det

    vals = _monomials(coarse_space.degree, tuple(map(tuple, ref))) \
        @ _shape_coeffs(coarse_space.degree)
    cols_g = coarse_space.cell_dofs[ctri]
    cols = coarse_space.free_index[cols_g]
    rows = np.repeat(np.arange(len(fdofs)), cols.shape[1])
    keep = (cols.ravel() >= 0) & (np.abs(vals.ravel()) > 1e-14)
    P = sparse.coo_matrix((vals.ravel()[keep],
                           (rows[keep], cols.ravel()[keep])),
                          shape=(fine_space.n_free, coarse_space.n_free))
    return P.tocsr()
