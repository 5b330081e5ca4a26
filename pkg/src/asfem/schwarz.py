"""Additive Schwarz subspace decompositions.

One apparatus serves two deployments: as a preconditioner for the discrete
operator (coarse space = the previous mesh's space, local spaces = the
zero-trace patch subspaces) and as an a posteriori error estimator (coarse
space = the solution space itself, local spaces = patchwise bubble or
enriched spaces).  The smoother is S = sum_k I_k S_k Q_k and the
preconditioner adds one coarse solve, B = S + I_h A_h^{-1} Q_h.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import cholesky, eigh, eigh_tridiagonal
from scipy.sparse.linalg import splu

from .fem import SolverError, prolongation


class DecompositionError(ValueError):
    """The subspaces do not form a valid decomposition of the fine space."""


def patch_free_dofs(space, patch):
    """Free dofs of `space` whose nodes lie strictly inside the patch.

    These span the zero-trace subspace of the patch: the patch vertex, the
    nodes on the patch's interior edges, and the interior nodes of the
    patch triangles.
    """
    p = space.degree
    nv = space.mesh.num_vertices
    ne = len(space.mesh.edges)
    ids = [patch.vertex]
    if p >= 2:
        for e in patch.interior_edges:
            ids.extend(range(nv + e * (p - 1), nv + (e + 1) * (p - 1)))
    if p >= 3:
        n_int = (p - 1) * (p - 2) // 2
        base = nv + ne * (p - 1)
        for t in patch.triangles:
            ids.extend(range(base + t * n_int, base + (t + 1) * n_int))
    f = space.free_index[np.asarray(ids, dtype=np.int64)]
    return np.sort(f[f >= 0])


@dataclass
class _SelectionGroup:
    """Same-size selection blocks solved in one batched operation."""
    indices: np.ndarray          # (nb, s) free-dof indices
    inverses: np.ndarray         # (nb, s, s) inverses of the local operators
    positions: np.ndarray        # (nb,) block ids in the decomposition order


class SubspaceDecomposition:
    """Fine operator plus coarse and local blocks of an additive Schwarz
    method, with exact (or scaled Jacobi) local solvers."""

    def __init__(self, A, coarse, block_indices, block_matrices, overlap,
                 local_solver="exact", jacobi_omega=1.0, dropped=()):
        self.A = A
        self.local_solver = local_solver
        self.jacobi_omega = float(jacobi_omega)
        self.dropped = tuple(dropped)
        self.overlap = overlap
        self.coarse_P = None
        self._coarse_lu = None
        self.coarse_dim = 0
        if coarse is not None:
            P = sparse.csr_matrix(coarse)
            if P.shape[0] != A.dim:
                raise DecompositionError(
                    f"coarse embedding rows {P.shape[0]} != fine dim {A.dim}")
            A_H = sparse.csc_matrix(P.T @ A.matrix @ P)
            try:
                self._coarse_lu = splu(A_H)
            except RuntimeError as exc:
                raise DecompositionError(f"singular coarse operator: {exc}") \
                    from exc
            self.coarse_P = P
            self.coarse_A = A_H
            self.coarse_dim = P.shape[1]

        Ad_csr = A.matrix
        self.num_blocks = len(block_indices) + len(block_matrices)
        gamma_lo, gamma_hi = np.inf, -np.inf

        by_size = {}
        for pos, idx in enumerate(block_indices):
            idx = np.asarray(idx, dtype=np.int64)
            by_size.setdefault(idx.size, []).append((idx, pos))
        self._groups = []
        for s in sorted(by_size):
            items = by_size[s]
            idx = np.array([it[0] for it in items], dtype=np.int64)  # (nb, s)
            vals = np.asarray(Ad_csr[idx[:, :, None].repeat(s, axis=2).ravel(),
                                     idx[:, None, :].repeat(s, axis=1).ravel()])
            A_blocks = vals.reshape(len(items), s, s)
            A_blocks = 0.5 * (A_blocks + A_blocks.transpose(0, 2, 1))
            inv, lo, hi = self._local_inverse_batch(A_blocks)
            gamma_lo, gamma_hi = min(gamma_lo, lo), max(gamma_hi, hi)
            self._groups.append(_SelectionGroup(
                indices=idx, inverses=inv,
                positions=np.array([it[1] for it in items], dtype=np.int64)))

        self._matrix_blocks = []
        pos0 = len(block_indices)
        for j, I_k in enumerate(block_matrices):
            I_k = sparse.csr_matrix(I_k)
            if I_k.shape[0] != A.dim:
                raise DecompositionError("block embedding has wrong row count")
            A_k = (I_k.T @ Ad_csr @ I_k).toarray()
            inv, lo, hi = self._local_inverse_batch(A_k[None])
            gamma_lo, gamma_hi = min(gamma_lo, lo), max(gamma_hi, hi)
            self._matrix_blocks.append((I_k, inv[0], pos0 + j))

        if self.num_blocks == 0 and self.coarse_P is None:
            raise DecompositionError("decomposition has no blocks")
        self.gamma_lower = 1.0 if not np.isfinite(gamma_lo) else float(gamma_lo)
        self.gamma_upper = 1.0 if not np.isfinite(gamma_hi) else float(gamma_hi)

    def _local_inverse_batch(self, A_blocks):
        """Inverses of a stack (nb, s, s) of local operators, plus the
        extreme generalized eigenvalues of (A_k, S_k^{-1}) over the stack."""
        ev = np.linalg.eigvalsh(A_blocks)
        if ev[:, 0].min() <= 0:
            k = int(np.argmin(ev[:, 0]))
            raise DecompositionError(
                f"singular local operator (lambda_min = {ev[k, 0]:.3e})")
        if self.local_solver == "exact":
            return np.linalg.inv(A_blocks), 1.0, 1.0
        if self.local_solver == "jacobi":
            d = self.jacobi_omega * np.einsum('kii->ki', A_blocks)
            scale = np.sqrt(d[:, :, None] * d[:, None, :])
            evg = np.linalg.eigvalsh(A_blocks / scale)
            inv = np.zeros_like(A_blocks)
            np.einsum('kii->ki', inv)[:] = 1.0 / d
            return inv, float(evg[:, 0].min()), float(evg[:, -1].max())
        raise ValueError(f"unknown local solver {self.local_solver!r}")

    # -- actions ---------------------------------------------------------------

    def apply_smoother(self, r):
        """S r = sum_k I_k S_k Q_k r; accepts a vector or an (n, m) matrix.

        Blocks are processed in deterministic group order and accumulated
        with sequential semantics, so repeated runs are bit identical.
        """
        r = np.asarray(r, dtype=float)
        if r.shape[0] != self.A.dim:
            raise ValueError(f"dimension mismatch: expected {self.A.dim}, "
                             f"got {r.shape[0]}")
        out = np.zeros_like(r)
        for g in self._groups:
            local = r[g.indices]                      # (nb, s) or (nb, s, m)
            corr = np.einsum('kij,kj...->ki...', g.inverses, local)
            np.add.at(out, g.indices.ravel(),
                      corr.reshape(-1, *r.shape[1:]))
        for I_k, inv, _ in self._matrix_blocks:
            out += I_k @ (inv @ (I_k.T @ r))
        return out

    def apply_coarse(self, r):
        if self.coarse_P is None:
            return np.zeros_like(r)
        return self.coarse_P @ self._coarse_lu.solve(self.coarse_P.T @ r)

    def apply_preconditioner(self, r):
        """B r = S r + I_h A_h^{-1} Q_h r (coarse term absent if no coarse block)."""
        out = self.apply_smoother(r)
        if self.coarse_P is not None:
            out = out + self.apply_coarse(np.asarray(r, dtype=float))
        return out

    def block_energies(self, r):
        """Per-block local energies <Q_k r, S_k Q_k r>, in block order."""
        r = np.asarray(r, dtype=float)
        out = np.zeros(self.num_blocks)
        for g in self._groups:
            local = r[g.indices]
            corr = np.einsum('kij,kj->ki', g.inverses, local)
            out[g.positions] = np.einsum('ki,ki->k', local, corr)
        for I_k, inv, pos in self._matrix_blocks:
            local = I_k.T @ r
            out[pos] = local @ (inv @ local)
        return out

    def smoother_quadratic(self, r):
        """<r, S r>."""
        return float(np.sum(self.block_energies(r)))

    def dense_preconditioner(self):
        return self.apply_preconditioner(np.eye(self.A.dim))


def build_decomposition(space, A, patches, coarse=None, patch_blocks=None,
                        local_solver="exact", jacobi_omega=1.0, overlap=None):
    """Assemble a :class:`SubspaceDecomposition`.

    Parameters
    ----------
    space : FeSpace or None
        The fine space; may be None when explicit patch_blocks are given.
    A : SparseOperator
        Fine operator over the free dofs of `space`.
    patches : list of VertexPatch
        Used for the default patch blocks and the overlap count.
    coarse : None, sparse matrix, or (coarse_space, tri_map)
        Coarse embedding I_h.  A tuple is turned into the nested-space
        prolongation matrix.
    patch_blocks : optional list
        Explicit blocks, each an index array (dof selection) or a sparse
        embedding matrix with A.dim rows.  Defaults to the zero-trace patch
        dofs of `space`.
    local_solver : 'exact' or 'jacobi'

    A patch whose block is empty is dropped with a warning; a singular
    local operator raises DecompositionError.
    """
    if isinstance(coarse, tuple):
        coarse_space, tri_map = coarse
        coarse = prolongation(coarse_space, space, tri_map)

    dropped = []
    index_blocks, matrix_blocks = [], []
    if patch_blocks is None:
        if space is None:
            raise ValueError("need a space to derive default patch blocks")
        for patch in patches:
            idx = patch_free_dofs(space, patch)
            if idx.size == 0:
                dropped.append(patch.vertex)
            else:
                index_blocks.append(idx)
        if dropped:
            warnings.warn(f"dropped {len(dropped)} patches with no interior "
                          f"dofs (vertices {dropped[:8]}...)", stacklevel=2)
    else:
        for k, blk in enumerate(patch_blocks):
            if sparse.issparse(blk):
                if blk.shape[1] == 0:
                    dropped.append(k)
                else:
                    matrix_blocks.append(blk)
            else:
                blk = np.asarray(blk, dtype=np.int64)
                if blk.size == 0:
                    dropped.append(k)
                else:
                    index_blocks.append(blk)
        if dropped:
            warnings.warn(f"dropped {len(dropped)} empty patch blocks",
                          stacklevel=2)

    if overlap is None and space is not None:
        from .mesh import mesh_stats
        overlap = mesh_stats(space.mesh).max_overlap
    return SubspaceDecomposition(A, coarse, index_blocks, matrix_blocks,
                                 overlap=overlap, local_solver=local_solver,
                                 jacobi_omega=jacobi_omega, dropped=dropped)


# -- preconditioned conjugate gradients ----------------------------------------

@dataclass
class PcgResult:
    x: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)


def pcg_solve(A, b, D, rel_tol=1e-8, max_iter=1000, callback=None):
    """Preconditioned CG for A x = b with the decomposition's B.

    Stops when ||b - A x|| <= rel_tol ||b||; raises SolverError on stall,
    iteration cap, or loss of positivity (non-SPD input).
    """
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return PcgResult(x=x, iterations=0, residuals=[])
    r = b.copy()
    z = D.apply_preconditioner(r)
    p = z.copy()
    rz = r @ z
    if rz <= 0:
        raise SolverError("preconditioner is not positive definite")
    residuals = [bnorm]
    for it in range(1, max_iter + 1):
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0:
            raise SolverError("non-positive curvature: operator is not SPD")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r)
        residuals.append(res)
        if callback is not None:
            callback(x)
        if res <= rel_tol * bnorm:
            return PcgResult(x=x, iterations=it, residuals=residuals)
        z = D.apply_preconditioner(r)
        rz_new = r @ z
        if rz_new <= 0:
            raise SolverError("preconditioner is not positive definite")
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"PCG did not reach rel_tol={rel_tol:g} within "
                      f"{max_iter} iterations")


# -- verification -------------------------------------------------------------

@dataclass
class VerificationReport:
    """Empirical spectral-equivalence data of one decomposition."""
    lambda_min: float
    lambda_max: float
    cond: float
    identity_err: float = float("nan")
    level: int = -1
    ndof: int = 0


CSV_HEADER = "level,ndof,lambda_min,lambda_max,cond,identity_err"


def write_verification_csv(reports, path):
    lines = [CSV_HEADER]
    for r in reports:
        lines.append(f"{r.level},{r.ndof},{r.lambda_min!r},{r.lambda_max!r},"
                     f"{r.cond!r},{r.identity_err!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


DENSE_EIG_CAP = 2000


def spectral_bounds(A, D, method="dense_eig", lanczos_iters=200):
    """Extreme eigenvalues of the preconditioned operator B A.

    dense_eig transforms to the symmetric matrix L' B L (A = L L') and is
    exact up to roundoff; it requires dim <= 2000.  lanczos runs the
    A-inner-product Lanczos iteration with full reorthogonalization from
    the normalized all-ones start vector.
    """
    n = A.dim
    if method == "dense_eig":
        if n > DENSE_EIG_CAP:
            raise ValueError(f"dense_eig limited to dimension {DENSE_EIG_CAP}, "
                             f"got {n}")
        B = D.dense_preconditioner()
        B = 0.5 * (B + B.T)
        L = cholesky(A.dense(), lower=True)
        M = L.T @ B @ L
        ev = np.linalg.eigvalsh(0.5 * (M + M.T))
        lam_min, lam_max = float(ev[0]), float(ev[-1])
    elif method == "lanczos":
        lam_min, lam_max = _lanczos_extremes(A, D, iters=lanczos_iters)
    else:
        raise ValueError(f"unknown method {method!r}")
    if lam_min <= 0:
        raise DecompositionError(
            f"preconditioned operator is not positive (lambda_min = {lam_min:.3e})")
    return VerificationReport(lambda_min=lam_min, lambda_max=lam_max,
                              cond=lam_max / lam_min, ndof=n)


def _lanczos_extremes(A, D, iters=200):
    n = A.dim
    iters = min(iters, n)
    q = np.ones(n)
    aq = A @ q
    nrm = np.sqrt(q @ aq)
    q /= nrm
    aq /= nrm
    Q = np.empty((n, iters))
    AQ = np.empty((n, iters))
    alphas, betas = [], []
    beta = 0.0
    q_prev = np.zeros(n)
    for j in range(iters):
        Q[:, j] = q
        AQ[:, j] = aq
        w = D.apply_preconditioner(aq)
        alpha = aq @ w
        alphas.append(alpha)
        w = w - alpha * q - beta * q_prev
        # full reorthogonalization in the A-inner product, twice
        for _ in range(2):
            w -= Q[:, :j + 1] @ (AQ[:, :j + 1].T @ w)
        aw = A @ w
        beta_sq = w @ aw
        if beta_sq <= 1e-28:
            break
        beta = np.sqrt(beta_sq)
        betas.append(beta)
        q_prev = q
        q = w / beta
        aq = aw / beta
    if len(alphas) == 1:
        return float(alphas[0]), float(alphas[0])
    ev = eigh_tridiagonal(np.asarray(alphas), np.asarray(betas[:len(alphas) - 1]),
                          eigvals_only=True)
    return float(ev[0]), float(ev[-1])


def verify_decomposition_identity(D, trial_vectors):
    """Check <B^{-1} v, v> against the decomposition infimum of Lemma-type
    identities by an independent dense KKT oracle.

    For each trial v the infimum of <A_h v_h, v_h> + sum_k <S_k^{-1} v_k, v_k>
    over all splittings v = I_h v_h + sum_k I_k v_k is computed from the
    equality-constrained quadratic program.  Returns the maximum relative
    discrepancy.  Requires fine dimension <= 200.
    """
    n = D.A.dim
    if n > 200:
        raise ValueError(f"identity oracle limited to dimension 200, got {n}")

    cols = []
    diag_blocks = []
    if D.coarse_P is not None:
        cols.append(D.coarse_P.toarray())
        diag_blocks.append(D.coarse_A.toarray())
    for g in D._groups:
        for row in range(len(g.indices)):
            idx = g.indices[row]
            E_k = np.zeros((n, idx.size))
            E_k[idx, np.arange(idx.size)] = 1.0
            cols.append(E_k)
            diag_blocks.append(_local_inverse_inverse(D, g.inverses[row], idx))
    for I_k, inv, _ in D._matrix_blocks:
        cols.append(I_k.toarray())
        diag_blocks.append(np.linalg.inv(inv))

    E = np.hstack(cols)
    if np.linalg.matrix_rank(E) < n:
        raise DecompositionError(
            "non-covering decomposition: the subspaces do not span the fine space")
    N = E.shape[1]
    Dblk = np.zeros((N, N))
    pos = 0
    for blk in diag_blocks:
        s = blk.shape[0]
        Dblk[pos:pos + s, pos:pos + s] = blk
        pos += s
    kkt = np.zeros((N + n, N + n))
    kkt[:N, :N] = Dblk
    kkt[:N, N:] = E.T
    kkt[N:, :N] = E

    Bd = D.dense_preconditioner()
    Bd = 0.5 * (Bd + Bd.T)
    max_err = 0.0
    for v in trial_vectors:
        v = np.asarray(v, dtype=float)
        lhs = float(v @ np.linalg.solve(Bd, v))
        rhs_vec = np.concatenate([np.zeros(N), v])
        sol = np.linalg.solve(kkt, rhs_vec)
        x = sol[:N]
        inf_val = float(x @ (Dblk @ x))
        denom = max(abs(lhs), abs(inf_val), 1e-300)
        max_err = max(max_err, abs(lhs - inf_val) / denom)
    return max_err


def _local_inverse_inverse(D, inv, idx):
    """S_k^{-1} for the oracle: A_k when exact, the scaled diagonal for Jacobi."""
    if D.local_solver == "exact":
        return np.linalg.inv(inv)
    return np.diag(1.0 / np.diag(inv))
