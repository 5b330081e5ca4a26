"""Conforming triangular meshes with newest-vertex bisection refinement.

A :class:`TriangleMesh` stores vertices, triangles with a designated
refinement edge, per-triangle region ids for piecewise constant
coefficients, and boundary markers.  Refinement is newest-vertex bisection
with recursive conforming closure, so meshes stay conforming and shape
regular for any marking sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MeshError(ValueError):
    """Invalid mesh input or a violated mesh invariant."""


def _signed_areas(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


class TriangleMesh:
    """Conforming triangulation of a polygonal domain.

    Parameters
    ----------
    vertices : (nv, 2) array
    triangles : (nt, 3) array of vertex indices, positively oriented
    region_id : (nt,) int array, optional
        Coefficient region of each triangle (default 0).
    ref_edge : (nt,) int array, optional
        Local index of the vertex opposite the refinement edge.  Defaults
        to the longest edge, ties broken by the smallest opposite-vertex
        global index.
    boundary_markers : dict, optional
        Maps sorted boundary vertex pairs (u, v) to an integer marker.
        Missing boundary edges get marker 0.
    parent : (nt,) int array, optional
        For refined meshes, the index of each triangle's ancestor in the
        mesh it was refined from.
    """

    def __init__(self, vertices, triangles, region_id=None, ref_edge=None,
                 boundary_markers=None, parent=None, vertex_parents=None,
                 validate=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (nv, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be an (nt, 3) array")
        nt = len(self.triangles)
        if region_id is None:
            region_id = np.zeros(nt, dtype=np.int64)
        self.region_id = np.ascontiguousarray(region_id, dtype=np.int64)
        self.parent = None if parent is None else np.asarray(parent, dtype=np.int64)
        self.vertex_parents = (None if vertex_parents is None
                               else np.asarray(vertex_parents, dtype=np.int64))
        if ref_edge is None:
            ref_edge = self._longest_edge_rule()
        self.ref_edge = np.ascontiguousarray(ref_edge, dtype=np.int64)
        self._build_topology()
        markers = {}
        if boundary_markers:
            for (u, v), m in boundary_markers.items():
                markers[(min(u, v), max(u, v))] = int(m)
        self.boundary_markers = markers
        if validate:
            self.validate()

    # -- construction helpers -------------------------------------------------

    def _longest_edge_rule(self):
        """Refinement edge = longest edge; ties -> smallest opposite vertex index."""
        t = self.triangles
        v = self.vertices
        ref = np.zeros(len(t), dtype=np.int64)
        # squared length of the edge opposite local vertex i
        lsq = np.empty((len(t), 3))
        for i in range(3):
            a = v[t[:, (i + 1) % 3]]
            b = v[t[:, (i + 2) % 3]]
            lsq[:, i] = np.sum((a - b) ** 2, axis=1)
        for k in range(len(t)):
            best = 0
            for i in (1, 2):
                if lsq[k, i] > lsq[k, best] or (lsq[k, i] == lsq[k, best]
                                                and t[k, i] < t[k, best]):
                    best = i
            ref[k] = best
        return ref

    def _build_topology(self):
        t = self.triangles
        nt = len(t)
        # edge opposite local vertex i of each triangle, as a sorted pair
        pairs = np.empty((3 * nt, 2), dtype=np.int64)
        for i in range(3):
            a = t[:, (i + 1) % 3]
            b = t[:, (i + 2) % 3]
            pairs[i * nt:(i + 1) * nt, 0] = np.minimum(a, b)
            pairs[i * nt:(i + 1) * nt, 1] = np.maximum(a, b)
        edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True,
                                           return_counts=True)
        if counts.max(initial=0) > 2:
            raise MeshError("conformity violated: an edge is shared by more "
                            "than two triangles")
        self.edges = edges
        self.tri_edges = inverse.reshape(3, nt).T.copy()  # (nt, 3), [k, i] opp vertex i
        ne = len(edges)
        edge_tris = -np.ones((ne, 2), dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        for flat in order:
            e = inverse[flat]
            k = flat % nt
            if edge_tris[e, 0] < 0:
                edge_tris[e, 0] = k
            else:
                edge_tris[e, 1] = k
        self.edge_tris = edge_tris
        self.boundary_edge = edge_tris[:, 1] < 0
        bmask = np.zeros(len(self.vertices), dtype=bool)
        bmask[edges[self.boundary_edge].ravel()] = True
        self.boundary_vertex = bmask

    # -- basic metrics ---------------------------------------------------------

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        return _signed_areas(self.vertices, self.triangles)

    def areas(self):
        return np.abs(self.signed_areas())

    def edge_lengths(self):
        d = self.vertices[self.edges[:, 0]] - self.vertices[self.edges[:, 1]]
        return np.hypot(d[:, 0], d[:, 1])

    def diameters(self):
        """Per-triangle diameter h_T (the longest edge)."""
        return self.edge_lengths()[self.tri_edges].max(axis=1)

    def min_angles(self):
        """Per-triangle minimum interior angle, in degrees."""
        t = self.triangles
        v = self.vertices
        ang = np.empty((len(t), 3))
        for i in range(3):
            p = v[t[:, i]]
            a = v[t[:, (i + 1) % 3]] - p
            b = v[t[:, (i + 2) % 3]] - p
            cosang = np.sum(a * b, axis=1) / (np.hypot(a[:, 0], a[:, 1])
                                              * np.hypot(b[:, 0], b[:, 1]))
            ang[:, i] = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return ang.min(axis=1)

    def refinement_edge_vertices(self, k):
        """The two global vertex indices of triangle k's refinement edge."""
        i = self.ref_edge[k]
        t = self.triangles[k]
        return t[(i + 1) % 3], t[(i + 2) % 3]

    # -- validation ------------------------------------------------------------

    def validate(self, deep=False):
        """Check conformity, orientation and closure; raise MeshError on failure.

        The structural checks (index ranges, orientation, at most two
        triangles per edge) run always.  deep=True adds the O(ne * nv)
        hanging-node scan, needed only for meshes from external files;
        bisection-produced meshes cannot have hanging nodes because edges
        are split globally.
        """
        if self.triangles.min(initial=0) < 0 or \
                self.triangles.max(initial=-1) >= len(self.vertices):
            raise MeshError("triangle vertex index out of range")
        areas = self.signed_areas()
        if np.any(areas <= 0):
            k = int(np.argmin(areas))
            raise MeshError(f"orientation violated: triangle {k} has "
                            f"non-positive signed area {areas[k]:.3e}")
        if deep:
            self._check_hanging_nodes()
        return self

    def _check_hanging_nodes(self):
        used = np.zeros(len(self.vertices), dtype=bool)
        used[self.triangles.ravel()] = True
        cand = np.flatnonzero(used)
        v = self.vertices
        lengths = self.edge_lengths()
        for e, (a, b) in enumerate(self.edges):
            d = lengths[e]
            da = np.hypot(*(v[cand] - v[a]).T)
            db = np.hypot(*(v[cand] - v[b]).T)
            on_edge = np.abs(da + db - d) <= 1e-12 * d
            for j in cand[on_edge]:
                if j != a and j != b:
                    raise MeshError(
                        f"conformity violated: vertex {j} is a hanging node "
                        f"on edge ({a}, {b})")

    # -- refinement ------------------------------------------------------------

    def refine(self, marked):
        """Newest-vertex bisection of the marked triangles with conforming
        closure; returns a new mesh. Alias for :func:`refine_bisection`."""
        return refine_bisection(self, marked)


def refine_bisection(mesh, marked):
    """Bisect every marked triangle at least once and apply conforming closure.

    Parameters
    ----------
    mesh : TriangleMesh
    marked : iterable of triangle indices

    Returns
    -------
    TriangleMesh
        The refined mesh; ``parent[j]`` gives the ancestor of triangle j in
        ``mesh``, and ``vertex_parents[i]`` the endpoints of the edge whose
        midpoint created vertex i (old vertices map to themselves).
    """
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.num_triangles:
        raise IndexError(f"marked triangle index out of range "
                         f"[0, {mesh.num_triangles})")

    nt = mesh.num_triangles
    split = np.zeros(len(mesh.edges), dtype=bool)
    ref_eid = mesh.tri_edges[np.arange(nt), mesh.ref_edge]
    split[ref_eid[marked]] = True
    # closure: a triangle can only be entered through its refinement edge
    while True:
        needs = split[mesh.tri_edges].any(axis=1) & ~split[ref_eid]
        if not needs.any():
            break
        split[ref_eid[needs]] = True

    nv_old = mesh.num_vertices
    split_ids = np.flatnonzero(split)
    midpoint_of = -np.ones(len(mesh.edges), dtype=np.int64)
    midpoint_of[split_ids] = nv_old + np.arange(len(split_ids))
    new_coords = 0.5 * (mesh.vertices[mesh.edges[split_ids, 0]]
                        + mesh.vertices[mesh.edges[split_ids, 1]])
    vertices = np.vstack([mesh.vertices, new_coords])
    vertex_parents = np.vstack([
        np.column_stack([np.arange(nv_old), np.arange(nv_old)]),
        mesh.edges[split_ids],
    ])

    tris, refs, regions, parents = [], [], [], []

    def emit(v0, v1, v2, region, parent):
        # refinement edge is (v1, v2), opposite the first (newest) vertex
        tris.append((v0, v1, v2))
        refs.append(0)
        regions.append(region)
        parents.append(parent)

    def bisect(v0, v1, v2, region, parent, depth):
        """Triangle with refinement edge (v1, v2); split if that edge is marked."""
        a, b = (v1, v2) if v1 < v2 else (v2, v1)
        m = edge_mid.get((a, b), -1)
        if m < 0:
            emit(v0, v1, v2, region, parent)
            return
        if depth == 0:
            raise MeshError("bisection recursion exceeded closure depth")
        bisect(m, v0, v1, region, parent, depth - 1)
        bisect(m, v2, v0, region, parent, depth - 1)

    edge_mid = {}
    for e in split_ids:
        a, b = mesh.edges[e]
        edge_mid[(int(a), int(b))] = int(midpoint_of[e])

    for k in range(nt):
        i = mesh.ref_edge[k]
        t = mesh.triangles[k]
        v0, v1, v2 = int(t[i]), int(t[(i + 1) % 3]), int(t[(i + 2) % 3])
        bisect(v0, v1, v2, int(mesh.region_id[k]), k, depth=2)

    markers = {}
    for (a, b), m in mesh.boundary_markers.items():
        key = (min(a, b), max(a, b))
        mid = edge_mid.get(key, -1)
        if mid < 0:
            markers[key] = m
        else:
            markers[(min(a, mid), max(a, mid))] = m
            markers[(min(b, mid), max(b, mid))] = m

    return TriangleMesh(vertices, np.array(tris, dtype=np.int64),
                        region_id=np.array(regions, dtype=np.int64),
                        ref_edge=np.array(refs, dtype=np.int64),
                        boundary_markers=markers,
                        parent=np.array(parents, dtype=np.int64),
                        vertex_parents=vertex_parents)


def uniform_refine(mesh, rounds=1):
    """Apply `rounds` sweeps of refine-everything; returns (mesh, ancestor)
    where ancestor maps final triangles to triangles of the input mesh."""
    ancestor = np.arange(mesh.num_triangles, dtype=np.int64)
    for _ in range(rounds):
        mesh = refine_bisection(mesh, np.arange(mesh.num_triangles))
        ancestor = ancestor[mesh.parent]
    return mesh, ancestor


# -- vertex patches -----------------------------------------------------------

@dataclass(frozen=True)
class VertexPatch:
    """Star of a vertex: the triangles meeting it and the mesh edges strictly
    inside the star (the edges through the vertex that are interior edges)."""
    vertex: int
    triangles: np.ndarray
    interior_edges: np.ndarray
    diameter: float


def vertex_patch(mesh, k):
    """Patch of vertex k: its triangles, interior edges and diameter h_k."""
    if not 0 <= k < mesh.num_vertices:
        raise IndexError(f"vertex index {k} out of range [0, {mesh.num_vertices})")
    tri_ids = np.flatnonzero((mesh.triangles == k).any(axis=1))
    if tri_ids.size == 0:
        raise MeshError(f"vertex {k} belongs to no triangle")
    spokes = np.flatnonzero((mesh.edges == k).any(axis=1) & ~mesh.boundary_edge)
    pts = mesh.vertices[np.unique(mesh.triangles[tri_ids])]
    diff = pts[:, None, :] - pts[None, :, :]
    h = float(np.sqrt((diff ** 2).sum(axis=2).max()))
    return VertexPatch(vertex=int(k), triangles=tri_ids,
                       interior_edges=spokes, diameter=h)


def all_patches(mesh):
    """Vertex patches for every vertex, by vertex index (vectorized)."""
    nv = mesh.num_vertices
    t = mesh.triangles
    flat = t.ravel()
    order = np.argsort(flat, kind="stable")
    tri_of = order // 3
    tri_starts = np.searchsorted(flat[order], np.arange(nv + 1))

    e = mesh.edges
    interior = ~mesh.boundary_edge
    eflat = e.ravel()
    eorder = np.argsort(eflat, kind="stable")
    edge_of = eorder // 2
    edge_starts = np.searchsorted(eflat[eorder], np.arange(nv + 1))

    v = mesh.vertices
    patches = []
    for k in range(nv):
        tris = np.sort(tri_of[tri_starts[k]:tri_starts[k + 1]])
        if tris.size == 0:
            raise MeshError(f"vertex {k} belongs to no triangle")
        spokes = edge_of[edge_starts[k]:edge_starts[k + 1]]
        spokes = np.sort(spokes[interior[spokes]])
        pts = v[np.unique(t[tris])]
        diff = pts[:, None, :] - pts[None, :, :]
        h = float(np.sqrt((diff ** 2).sum(axis=2).max()))
        patches.append(VertexPatch(vertex=k, triangles=tris,
                                   interior_edges=spokes, diameter=h))
    return patches


@dataclass(frozen=True)
class MeshStats:
    min_angle: float
    max_overlap: int
    h_max: float
    h_min: float


def mesh_stats(mesh):
    """Minimum angle (degrees), maximum patch-overlap count M, and the
    extreme triangle diameters.

    M counts, for the worst vertex k, the vertices j whose patches intersect
    the patch of k (including j = k); two patches intersect exactly when the
    vertices are within graph distance 2 in the edge graph.
    """
    from scipy import sparse

    nv = mesh.num_vertices
    e = mesh.edges
    ones = np.ones(len(e), dtype=np.int8)
    adj = sparse.coo_matrix((ones, (e[:, 0], e[:, 1])), shape=(nv, nv))
    adj = adj + adj.T + sparse.eye(nv, dtype=np.int8)
    reach2 = (adj @ adj).tocsr()
    max_overlap = int(np.diff(reach2.indptr).max())
    h = mesh.diameters()
    return MeshStats(min_angle=float(mesh.min_angles().min()),
                     max_overlap=max_overlap,
                     h_max=float(h.max()), h_min=float(h.min()))


# -- built-in domains ---------------------------------------------------------

def _grid_squares(x, y, flip=False):
    """Triangulate the tensor grid of x- and y-lines; each cell is split by
    its lower-left to upper-right diagonal."""
    nx, ny = len(x) - 1, len(y) - 1
    X, Y = np.meshgrid(x, y, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    return vertices, np.array(tris, dtype=np.int64)


def builtin_mesh(domain, n0):
    """Initial mesh of a named domain.

    domain: 'unit_square' ([0,1]^2), 'l_shape' ([-1,1]^2 minus the fourth
    quadrant) or 'checkerboard_square' ([0,1]^2 with one region id per
    quadrant, mesh aligned with the quadrant boundaries).
    n0: number of subdivisions per unit edge (per quadrant edge for the
    checkerboard).
    """
    if n0 < 1:
        raise ValueError(f"n0 must be >= 1, got {n0}")
    if domain == "unit_square":
        x = np.linspace(0.0, 1.0, n0 + 1)
        vertices, tris = _grid_squares(x, x)
        return TriangleMesh(vertices, tris)
    if domain == "checkerboard_square":
        x = np.linspace(0.0, 1.0, 2 * n0 + 1)
        vertices, tris = _grid_squares(x, x)
        cent = vertices[tris].mean(axis=1)
        region = ((cent[:, 0] > 0.5).astype(np.int64)
                  + 2 * (cent[:, 1] > 0.5).astype(np.int64))
        return TriangleMesh(vertices, tris, region_id=region)
    if domain == "l_shape":
        x = np.linspace(-1.0, 1.0, 2 * n0 + 1)
        vertices, tris = _grid_squares(x, x)
        cent = vertices[tris].mean(axis=1)
        keep = ~((cent[:, 0] > 0.0) & (cent[:, 1] < 0.0))
        tris = tris[keep]
        used = np.unique(tris)
        remap = -np.ones(len(vertices), dtype=np.int64)
        remap[used] = np.arange(len(used))
        return TriangleMesh(vertices[used], remap[tris])
    raise ValueError(f"unknown domain name: {domain!r}")


def submesh(mesh, tri_ids):
    """Extract the triangles `tri_ids` as a standalone mesh.

    Returns (sub, vertex_map, parent_tris): vertex_map sends sub vertex ids
    to parent ids, parent_tris sends sub triangle ids to parent ids.
    """
    tri_ids = np.asarray(tri_ids, dtype=np.int64)
    tris = mesh.triangles[tri_ids]
    used = np.unique(tris)
    remap = -np.ones(mesh.num_vertices, dtype=np.int64)
    remap[used] = np.arange(len(used))
    sub = TriangleMesh(mesh.vertices[used], remap[tris],
                       region_id=mesh.region_id[tri_ids], validate=False)
    return sub, used, tri_ids.copy()


# -- ASCII mesh files ---------------------------------------------------------

def write_mesh(mesh, path):
    """Write the ASCII mesh format: 'nv nt nb' header, vertex lines 'x y',
    triangle lines 'v0 v1 v2 region', boundary lines 'v0 v1 marker'."""
    bedges = mesh.edges[mesh.boundary_edge]
    lines = [f"{mesh.num_vertices} {mesh.num_triangles} {len(bedges)}"]
    for x, y in mesh.vertices:
        lines.append(f"{x!r} {y!r}")
    for (a, b, c), r in zip(mesh.triangles, mesh.region_id):
        lines.append(f"{a} {b} {c} {r}")
    for a, b in bedges:
        m = mesh.boundary_markers.get((min(a, b), max(a, b)), 0)
        lines.append(f"{a} {b} {m}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path):
    """Read the ASCII mesh format written by :func:`write_mesh`.

    Vertex coordinates round-trip bit exactly for decimal inputs with at
    most 17 significant digits.  Refinement edges are re-initialized by the
    longest-edge rule; the file does not carry them.
    """
    with open(path) as fh:
        tokens = fh.read().split()
    it = iter(tokens)
    try:
        nv, nt, nb = int(next(it)), int(next(it)), int(next(it))
        vertices = np.array([[float(next(it)), float(next(it))]
                             for _ in range(nv)])
        rows = [[int(next(it)) for _ in range(4)] for _ in range(nt)]
        brows = [[int(next(it)) for _ in range(3)] for _ in range(nb)]
    except StopIteration:
        raise MeshError(f"truncated mesh file: {path}") from None
    tris = np.array([r[:3] for r in rows], dtype=np.int64)
    region = np.array([r[3] for r in rows], dtype=np.int64)
    markers = {(min(a, b), max(a, b)): m for a, b, m in brows}
    mesh = TriangleMesh(vertices, tris, region_id=region,
                        boundary_markers=markers)
    return mesh.validate(deep=True)
