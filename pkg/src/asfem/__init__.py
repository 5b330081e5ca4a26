"""2D adaptive finite elements where one additive Schwarz decomposition is
both the solver preconditioner and the a posteriori error estimator."""

from .mesh import (TriangleMesh, VertexPatch, MeshError, builtin_mesh,
                   refine_bisection, uniform_refine, vertex_patch,
                   all_patches, mesh_stats, read_mesh, write_mesh)

__all__ = [
    "TriangleMesh", "VertexPatch", "MeshError", "builtin_mesh",
    "refine_bisection", "uniform_refine", "vertex_patch", "all_patches",
    "mesh_stats", "read_mesh", "write_mesh",
]

__version__ = "0.1.0"
