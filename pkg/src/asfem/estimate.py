"""A posteriori error estimators.

Four views of the same residual: the raw residual data (element residuals
and interior face jumps), the standard explicit residual estimator, the
computable patch estimator on volume/edge bubble spaces, and the enriched
patch estimator on higher-degree zero-trace patch spaces.  A
:class:`SmootherEstimator` feeds the patch spaces into the additive
Schwarz machinery so that <r, S r> doubles as the error estimate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse.linalg import splu

from .fem import FeSpace, assemble_stiffness, lattice_nodes, prolongation
from .mesh import all_patches, submesh
from .quadrature import interval_rule, triangle_rule
from .schwarz import build_decomposition, patch_free_dofs, spectral_bounds


# -- residual data -------------------------------------------------------------

@dataclass
class ResidualData:
    """Element residuals and interior face jumps of a discrete solution.

    r_T holds (f + div K grad u_h)|_T sampled at the volume quadrature nodes
    of each element; r_e holds the jump of the conormal flux K grad u_h . n
    at the edge quadrature nodes of each interior edge.  Norms are the
    squared L2 norms over the element / the edge.
    """
    mesh: object
    r_T: np.ndarray            # (nt, nq)
    r_T_norm2: np.ndarray      # (nt,)
    h_T: np.ndarray            # (nt,)
    interior_edges: np.ndarray  # (nie,) edge ids
    r_e: np.ndarray            # (nie, nqe)
    r_e_norm2: np.ndarray      # (nie,)
    h_e: np.ndarray            # (nie,)


def residual_data(space, K, f, u_h, quad_order=None):
    """Sample r_T = (f + div K grad u_h)|_T and the interior jumps r_e."""
    mesh = space.mesh
    p = space.degree
    order = 2 * p + 2 if quad_order is None else quad_order
    pts, w = triangle_rule(order)
    _, _, det, _ = space.geometry()
    adet = np.abs(det)
    tris = np.arange(mesh.num_triangles)
    phys = space.physical_points(pts)
    fv = np.asarray(f(phys.reshape(-1, 2)), dtype=float).reshape(phys.shape[:2])
    if p == 1:
        div_term = np.zeros_like(fv)  # elementwise constant gradients
    else:
        div_term = u_h.element_div_Kgrad(K, tris, pts)
    r_T = fv + div_term
    r_T_norm2 = np.einsum('q,t,tq->t', w, adet, r_T ** 2)

    eids = np.flatnonzero(~mesh.boundary_edge)
    s, we = interval_rule(max(2 * p, 2))
    va = mesh.vertices[mesh.edges[eids, 0]]
    vb = mesh.vertices[mesh.edges[eids, 1]]
    h_e = np.hypot(*(vb - va).T)
    epts = va[:, None, :] + s[None, :, None] * (vb - va)[:, None, :]

    tang = vb - va
    normals = np.column_stack([tang[:, 1], -tang[:, 0]]) / h_e[:, None]
    t1 = mesh.edge_tris[eids, 0]
    t2 = mesh.edge_tris[eids, 1]
    cent = mesh.vertices[mesh.triangles[t1]].mean(axis=1)
    mid = 0.5 * (va + vb)
    flip = np.einsum('ea,ea->e', normals, cent - mid) > 0
    normals[flip] *= -1.0  # outward from the first incident triangle

    Kel = K.on_elements(mesh)
    r_e = np.zeros((len(eids), len(s)))
    for tside, sign in ((t1, 1.0), (t2, -1.0)):
        ref = _ref_coords(mesh, tside, epts)
        g = u_h.element_grads_at(tside, ref)
        flux = np.einsum('eab,eqb->eqa', Kel[tside], g)
        r_e += sign * np.einsum('eqa,ea->eq', flux, normals)
    r_e_norm2 = h_e * np.einsum('q,eq->e', we, r_e ** 2)
    return ResidualData(mesh=mesh, r_T=r_T, r_T_norm2=r_T_norm2,
                        h_T=mesh.diameters(), interior_edges=eids, r_e=r_e,
                        r_e_norm2=r_e_norm2, h_e=h_e)


def _ref_coords(mesh, tris, phys_pts):
    """Reference coordinates of physical points lying in the given triangles."""
    t = mesh.triangles[tris]
    v0 = mesh.vertices[t[:, 0]]
    jac = np.stack([mesh.vertices[t[:, 1]] - v0,
                    mesh.vertices[t[:, 2]] - v0], axis=-1)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    rhs = phys_pts - v0[:, None, :]
    ref = np.empty_like(rhs)
    ref[..., 0] = (jac[:, None, 1, 1] * rhs[..., 0]
                   - jac[:, None, 0, 1] * rhs[..., 1]) / det[:, None]
    ref[..., 1] = (-jac[:, None, 1, 0] * rhs[..., 0]
                   + jac[:, None, 0, 0] * rhs[..., 1]) / det[:, None]
    return ref


# -- explicit residual estimator -------------------------------------------------

@dataclass
class ExplicitIndicators:
    zeta_k: np.ndarray   # per vertex
    zeta_T: np.ndarray   # per element
    total: float         # sqrt(sum_T zeta_T^2): every entity counted once


def explicit_estimator(data, patches):
    """Standard explicit residual indicators.

    zeta_k^2 = sum of h_T^2 ||r_T||^2 over the patch triangles plus
    h_e ||r_e||^2 over the patch interior edges.  zeta_T^2 takes the element
    term plus half of each incident interior edge term, so sum_T zeta_T^2
    counts every entity exactly once.
    """
    mesh = data.mesh
    vol = data.h_T ** 2 * data.r_T_norm2
    edge_term = data.h_e * data.r_e_norm2

    zeta_T2 = vol.copy()
    inc = mesh.edge_tris[data.interior_edges]
    np.add.at(zeta_T2, inc[:, 0], 0.5 * edge_term)
    np.add.at(zeta_T2, inc[:, 1], 0.5 * edge_term)

    edge_pos = -np.ones(len(mesh.edges), dtype=np.int64)
    edge_pos[data.interior_edges] = np.arange(len(data.interior_edges))
    zeta_k2 = np.zeros(len(patches))
    for i, patch in enumerate(patches):
        val = vol[patch.triangles].sum()
        pos = edge_pos[patch.interior_edges]
        val += edge_term[pos[pos >= 0]].sum()
        zeta_k2[i] = val
    return ExplicitIndicators(zeta_k=np.sqrt(zeta_k2), zeta_T=np.sqrt(zeta_T2),
                              total=float(np.sqrt(zeta_T2.sum())))


# -- data oscillation ------------------------------------------------------------

def data_oscillation(space, f, quad_order=12):
    """osc(f) = sqrt(sum_T h_T^2 ||f - Q_T f||_T^2), Q_T being the
    elementwise L2 projection onto polynomials of degree p - 1.

    Returns (total, per_element_squared).
    """
    mesh = space.mesh
    deg = space.degree - 1
    pts, w = triangle_rule(max(quad_order, 2 * deg))
    _, _, det, _ = space.geometry()
    adet = np.abs(det)
    phys = space.physical_points(pts)
    fv = np.asarray(f(phys.reshape(-1, 2)), dtype=float).reshape(phys.shape[:2])

    ex = [(a, b) for a in range(deg + 1) for b in range(deg + 1 - a)]
    m = np.stack([pts[:, 0] ** a * pts[:, 1] ** b for a, b in ex], axis=1)
    M_ref = np.einsum('q,qi,qj->ij', w, m, m)
    mom = np.einsum('q,qi,tq->ti', w, m, fv)
    coef = np.linalg.solve(M_ref, mom.T).T
    proj = np.einsum('ti,qi->tq', coef, m)
    resid2 = np.einsum('q,t,tq->t', w, adet, (fv - proj) ** 2)
    osc_T2 = mesh.diameters() ** 2 * resid2
    return float(np.sqrt(osc_T2.sum())), osc_T2


# -- bubble spaces ----------------------------------------------------------------

class BubbleSpace:
    """Span of the volume and edge bubbles of one vertex patch.

    Generators are phi_T * q and phi_e * q with q running over a scaled
    monomial basis of polynomials of degree p - 1 on the patch; phi_T is
    the product of the three hat functions of T, phi_e the product of the
    two hats of the endpoints of e.  Linear dependencies among the
    generators are removed by an eigenvalue filter on the energy Gram
    matrix at relative threshold 1e-10.
    """

    def __init__(self, patch, space, K, quad_order=None):
        self.patch = patch
        self.space = space
        mesh = space.mesh
        p = space.degree
        self.quad_order = 2 * p + 4 if quad_order is None else quad_order

        vk = mesh.vertices[patch.vertex]
        hk = patch.diameter
        self.q_exponents = [(a, b) for a in range(p) for b in range(p - a)]
        self.center, self.scale = vk, hk

        gens = []
        for t in patch.triangles:
            for m in range(len(self.q_exponents)):
                gens.append(("volume", int(t), m))
        for e in patch.interior_edges:
            for m in range(len(self.q_exponents)):
                gens.append(("edge", int(e), m))
        self.generators = gens
        self.num_generators = len(gens)
        if not gens:
            raise ValueError(f"patch of vertex {patch.vertex} yields no bubbles")

        # support triangles of each generator, as positions in patch.triangles
        tri_list = [int(t) for t in patch.triangles]
        tri_pos = {t: i for i, t in enumerate(tri_list)}
        self._support = []
        for kind, ent, m in gens:
            if kind == "volume":
                self._support.append((tri_pos[ent],))
            else:
                inc = [tri_pos[int(t)] for t in mesh.edge_tris[ent] if t >= 0
                       and int(t) in tri_pos]
                self._support.append(tuple(inc))

        self._assemble(K)

    # evaluation --------------------------------------------------------------

    def eval_on_patch_triangle(self, local_t, ref_pts):
        """Values (nq, ngen) and physical gradients (nq, ngen, 2) of every
        generator on patch triangle `local_t` at the reference points."""
        mesh = self.space.mesh
        t = int(self.patch.triangles[local_t])
        tri = mesh.triangles[t]
        v0 = mesh.vertices[tri[0]]
        jac = np.column_stack([mesh.vertices[tri[1]] - v0,
                               mesh.vertices[tri[2]] - v0])
        phys = v0 + ref_pts @ jac.T
        lam = np.column_stack([1.0 - ref_pts[:, 0] - ref_pts[:, 1],
                               ref_pts[:, 0], ref_pts[:, 1]])
        invJT = np.linalg.inv(jac).T
        dlam = (invJT @ np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])).T  # (3,2)

        xs = (phys - self.center) / self.scale
        nq = len(ref_pts)
        vals = np.zeros((nq, self.num_generators))
        grads = np.zeros((nq, self.num_generators, 2))
        vert_of = {int(v): i for i, v in enumerate(tri)}
        for g, (kind, ent, m) in enumerate(self.generators):
            if local_t not in self._support[g]:
                continue
            a, b = self.q_exponents[m]
            qv = xs[:, 0] ** a * xs[:, 1] ** b
            dq = np.zeros((nq, 2))
            if a > 0:
                dq[:, 0] = a * xs[:, 0] ** (a - 1) * xs[:, 1] ** b / self.scale
            if b > 0:
                dq[:, 1] = b * xs[:, 0] ** a * xs[:, 1] ** (b - 1) / self.scale
            if kind == "volume":
                bub = lam[:, 0] * lam[:, 1] * lam[:, 2]
                dbub = (np.outer(lam[:, 1] * lam[:, 2], dlam[0])
                        + np.outer(lam[:, 0] * lam[:, 2], dlam[1])
                        + np.outer(lam[:, 0] * lam[:, 1], dlam[2]))
            else:
                ea, eb = self.space.mesh.edges[ent]
                ia, ib = vert_of[int(ea)], vert_of[int(eb)]
                bub = lam[:, ia] * lam[:, ib]
                dbub = (np.outer(lam[:, ib], dlam[ia])
                        + np.outer(lam[:, ia], dlam[ib]))
            vals[:, g] = bub * qv
            grads[:, g] = dbub * qv[:, None] + bub[:, None] * dq
        return vals, grads

    # assembly ----------------------------------------------------------------

    def _assemble(self, K):
        space = self.space
        mesh = space.mesh
        pts, w = triangle_rule(self.quad_order)
        _, _, det, _ = space.geometry()
        Kel = K.on_elements(mesh)
        G = np.zeros((self.num_generators, self.num_generators))
        self._tab = []
        for i, t in enumerate(self.patch.triangles):
            vals, grads = self.eval_on_patch_triangle(i, pts)
            wts = w * abs(det[t])
            KG = np.einsum('ab,qgb->qga', Kel[t], grads)
            G += np.einsum('q,qga,qha->gh', wts, KG, grads)
            self._tab.append((int(t), pts, wts, vals, grads))
        G = 0.5 * (G + G.T)
        ev, V = np.linalg.eigh(G)
        keep = ev > 1e-10 * ev[-1]
        self.gram = G
        self.basis_coeffs = V[:, keep]      # combinations forming the basis
        self.energies = ev[keep]            # the local stiffness is diag(energies)
        self.dim = int(keep.sum())
        if self.dim == 0:
            raise ValueError("bubble basis is empty after dependency removal")

    def residual_vector(self, r):
        """<r, g_j> for every generator, by direct quadrature."""
        out = np.zeros(self.num_generators)
        for t, pts, wts, vals, grads in self._tab:
            out += r.pair_values(np.array([t]), pts, wts[None, :],
                                 vals[None], grads[None])[0]
        return out

    def embedding_columns(self, ambient_space):
        """Coefficients of the filtered basis in a nodal ambient space that
        contains bubbles of degree p + 2 (columns of a sparse matrix over the
        free dofs)."""
        cols = _interp_columns(self, ambient_space)
        return cols @ self.basis_coeffs


def _interp_columns(bubble, ambient_space):
    """Nodal interpolation of every generator into the ambient space; exact
    because the generators are continuous piecewise polynomials of degree
    <= ambient degree.  Returns a dense (n_free, ngen) array."""
    nodes = lattice_nodes(ambient_space.degree)
    out = np.zeros((ambient_space.n_free, bubble.num_generators))
    for i, t in enumerate(bubble.patch.triangles):
        vals, _ = bubble.eval_on_patch_triangle(i, nodes)
        fidx = ambient_space.free_index[ambient_space.cell_dofs[int(t)]]
        keep = fidx >= 0
        out[fidx[keep]] = vals[keep]  # repeated writes agree by continuity
    return out


def build_bubble_space(patch, space, K=None, quad_order=None):
    """Bubble space of one patch; K defaults to the identity coefficient."""
    from .fem import Coefficient
    return BubbleSpace(patch, space, K if K is not None else Coefficient.identity(),
                       quad_order=quad_order)


def patch_estimate(patch, bubble, r):
    """Energy norm of the bubble-space solution of the local residual
    problem, computed entirely from the direct local assembly."""
    g = bubble.residual_vector(r)
    rhs = bubble.basis_coeffs.T @ g
    return float(np.sqrt(max(0.0, np.sum(rhs ** 2 / bubble.energies))))


def enriched_patch_estimate(patch, r, q):
    """Energy norm of the local solution on the degree-(p+q) Lagrange space
    of the patch with zero trace on the patch boundary."""
    if q < 1:
        raise ValueError("enrichment order q must be >= 1")
    space = r.space
    sub, _, parent_tris = submesh(space.mesh, patch.triangles)
    sub_space = FeSpace(sub, space.degree + q, constrain_boundary=True)
    if sub_space.n_free == 0:
        return 0.0
    A_loc = assemble_stiffness(sub_space, r.K)
    b_loc = r.dual_vector(sub_space, parent_tris=parent_tris)
    x = cho_solve(cho_factor(A_loc.dense()), b_loc)
    return float(np.sqrt(max(0.0, b_loc @ x)))


def smoother_estimate(D, r_vec):
    """<r, S r> of a decomposition whose blocks are patch spaces; equals the
    sum of the squared local estimates when the local solves are exact."""
    return D.smoother_quadratic(r_vec)


# -- the smoother deployed as estimator --------------------------------------------

class AmbientBundle:
    """The enrichment space shared by estimator deployments on one level:
    the ambient Lagrange space, its stiffness, the embedding of the
    solution space, and the residual dual vector."""

    def __init__(self, r, enrich):
        self.enrich = int(enrich)
        self.space = FeSpace(r.space.mesh, r.space.degree + self.enrich)
        self.A = assemble_stiffness(self.space, r.K)
        self.P = prolongation(r.space, self.space)
        self.r_vec = r.dual_vector(self.space)
        self._lu = None

    def solve_fine(self, rhs):
        if self._lu is None:
            self._lu = splu(self.A.matrix.tocsc())
        return self._lu.solve(rhs)


class SmootherEstimator:
    """Additive Schwarz smoother over patch spaces with V_h as coarse block.

    The ambient space is the Lagrange space of degree p + 2 (bubble mode) or
    p + q (enriched mode) on the same mesh.  In enriched mode the patch
    blocks are the zero-trace patch subspaces of the ambient space and the
    decomposition covers it, so spectral bounds and the decomposition
    identity are meaningful.  In bubble mode the blocks are the bubble
    spans; for degree p = 1 an equivalent decomposition in the coordinates
    of V_h + bubbles is available via `bubble_tilde_decomposition`.
    """

    def __init__(self, r, patches=None, mode="enriched", q=2, ambient=None):
        if mode not in ("enriched", "bubble"):
            raise ValueError(f"unknown estimator mode {mode!r}")
        self.r = r
        self.mode = mode
        self.q = int(q)
        space = r.space
        mesh = space.mesh
        self.patches = all_patches(mesh) if patches is None else patches
        enrich = 2 if mode == "bubble" else self.q
        if ambient is None:
            ambient = AmbientBundle(r, enrich)
        elif ambient.enrich != enrich:
            raise ValueError(f"ambient bundle has enrichment {ambient.enrich}, "
                             f"mode {mode!r} needs {enrich}")
        self.bundle = ambient
        self.ambient = ambient.space
        self.A = ambient.A
        self.P = ambient.P
        self.r_vec = ambient.r_vec

        if mode == "enriched":
            blocks = [patch_free_dofs(self.ambient, pt) for pt in self.patches]
        else:
            self.bubbles = []
            blocks = []
            for pt in self.patches:
                try:
                    bub = BubbleSpace(pt, space, r.K)
                except ValueError:
                    bub = None
                self.bubbles.append(bub)
                blocks.append(sparse.csr_matrix(
                    np.zeros((self.ambient.n_free, 0)) if bub is None
                    else bub.embedding_columns(self.ambient)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            self.decomposition = build_decomposition(
                self.ambient, self.A, self.patches, coarse=self.P,
                patch_blocks=blocks)
        self._block_vertices = [pt.vertex for k, pt in enumerate(self.patches)
                                if k not in set(self.decomposition.dropped)]

    def patch_values(self):
        """Per-vertex local energy norms (zero for dropped patches)."""
        energies = self.decomposition.block_energies(self.r_vec)
        out = np.zeros(self.r.space.mesh.num_vertices)
        for v, e in zip(self._block_vertices, energies):
            out[v] = np.sqrt(max(0.0, e))
        return out

    def total(self):
        """<r, S r>."""
        return self.decomposition.smoother_quadratic(self.r_vec)

    def reference_error_squared(self):
        """||e||_A^2 of the ambient Galerkin solution relative to u_h,
        i.e. <r, A^{-1} r> on the ambient space."""
        return float(self.r_vec @ self.bundle.solve_fine(self.r_vec))

    def spectral_report(self, method=None, lanczos_iters=200):
        n = self.A.dim
        if method is None:
            method = "dense_eig" if n <= 2000 else "lanczos"
        rep = spectral_bounds(self.A, self.decomposition, method=method,
                              lanczos_iters=lanczos_iters)
        return rep


def bubble_tilde_decomposition(r, patches=None):
    """Bubble deployment in the coordinates of V_h + span(all bubbles), for
    degree p = 1 where that union of generators is linearly independent.

    Returns (D, r_tilde): the decomposition has the coarse block V_h and one
    selection block per patch, and covers its fine space by construction.
    """
    space = r.space
    if space.degree != 1:
        raise ValueError("the tilde-coordinate construction requires p = 1")
    mesh = space.mesh
    patches = all_patches(mesh) if patches is None else patches
    ambient = FeSpace(mesh, 3)
    A_F = assemble_stiffness(ambient, r.K)
    P = prolongation(space, ambient)
    r_F = r.dual_vector(ambient)

    # one volume bubble per triangle, one edge bubble per interior edge
    nt = mesh.num_triangles
    interior = np.flatnonzero(~mesh.boundary_edge)
    edge_pos = -np.ones(len(mesh.edges), dtype=np.int64)
    edge_pos[interior] = np.arange(len(interior))
    nodes = lattice_nodes(3)
    cols = np.zeros((ambient.n_free, nt + len(interior)))
    lam = np.column_stack([1.0 - nodes[:, 0] - nodes[:, 1],
                           nodes[:, 0], nodes[:, 1]])
    for t in range(nt):
        fidx = ambient.free_index[ambient.cell_dofs[t]]
        keep = fidx >= 0
        cols[fidx[keep], t] = (lam[:, 0] * lam[:, 1] * lam[:, 2])[keep]
        for i in range(3):
            e = mesh.tri_edges[t, i]
            pos = edge_pos[e]
            if pos < 0:
                continue
            ia, ib = (i + 1) % 3, (i + 2) % 3
            cols[fidx[keep], nt + pos] = (lam[:, ia] * lam[:, ib])[keep]

    T = sparse.hstack([P, sparse.csr_matrix(cols)]).tocsr()
    from .fem import SparseOperator
    A_t = SparseOperator((T.T @ A_F.matrix @ T).tocsr())
    r_t = T.T @ r_F
    n_h = P.shape[1]
    blocks = []
    kept_patches = []
    for pt in patches:
        idx = [n_h + int(t) for t in pt.triangles]
        idx += [n_h + nt + int(edge_pos[e]) for e in pt.interior_edges
                if edge_pos[e] >= 0]
        if idx:
            blocks.append(np.sort(np.asarray(idx, dtype=np.int64)))
            kept_patches.append(pt.vertex)
    coarse = sparse.vstack([sparse.eye(n_h, format="csr"),
                            sparse.csr_matrix((nt + len(interior), n_h))])
    from .mesh import mesh_stats
    D = build_decomposition(None, A_t, patches, coarse=coarse.tocsr(),
                            patch_blocks=blocks,
                            overlap=mesh_stats(mesh).max_overlap)
    return D, r_t


# -- estimator report ---------------------------------------------------------------

@dataclass
class EstimatorReport:
    """All indicators of one level, plus totals.

    Totals are energy-norm scale: eta_tilde_total^2 = sum_k eta_tilde_k^2
    and likewise for the others; smoother_total is the quadratic <r, S r>
    of the enriched deployment.
    """
    eta_tilde: np.ndarray
    eta_enriched: np.ndarray
    q: int
    zeta_k: np.ndarray
    zeta_T: np.ndarray
    osc_T2: np.ndarray
    smoother_total: float

    @property
    def eta_tilde_total(self):
        return float(np.sqrt(np.sum(self.eta_tilde ** 2)))

    @property
    def eta_enriched_total(self):
        return float(np.sqrt(np.sum(self.eta_enriched ** 2)))

    @property
    def zeta_total(self):
        return float(np.sqrt(np.sum(self.zeta_T ** 2)))

    @property
    def osc_total(self):
        return float(np.sqrt(np.sum(self.osc_T2)))

    def effectivity(self, error):
        """Estimator/error ratios against a supplied energy error."""
        if error <= 0:
            return {}
        return {"zeta": self.zeta_total / error,
                "eta_tilde": self.eta_tilde_total / error,
                "eta_enriched": self.eta_enriched_total / error}

    def to_csv(self, path):
        lines = ["kind,id,value"]
        for k, v in enumerate(self.eta_tilde):
            lines.append(f"eta_tilde,{k},{v!r}")
        for k, v in enumerate(self.eta_enriched):
            lines.append(f"eta_enriched,{k},{v!r}")
        for k, v in enumerate(self.zeta_k):
            lines.append(f"zeta_k,{k},{v!r}")
        for t, v in enumerate(self.zeta_T):
            lines.append(f"zeta_T,{t},{v!r}")
        lines.append(f"total_eta_tilde,-1,{self.eta_tilde_total!r}")
        lines.append(f"total_eta_enriched,-1,{self.eta_enriched_total!r}")
        lines.append(f"total_zeta,-1,{self.zeta_total!r}")
        lines.append(f"total_smoother,-1,{self.smoother_total!r}")
        lines.append(f"total_osc,-1,{self.osc_total!r}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
