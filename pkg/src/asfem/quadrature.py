"""Quadrature rules on the reference triangle and on edges.

Triangle rules are collapsed Gauss-Jacobi x Gauss-Legendre products on the
unit triangle {(x, y): x >= 0, y >= 0, x + y <= 1}.  A rule of order m
integrates every polynomial of total degree <= m exactly; its weights sum
to the reference area 1/2.
"""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@lru_cache(maxsize=None)
def triangle_rule(order):
    """Points (n, 2) and weights (n,) on the reference triangle, exact for
    total degree <= order."""
    n = max(1, (int(order) + 2) // 2)
    tj, wj = roots_jacobi(n, 1.0, 0.0)
    tl, wl = roots_legendre(n)
    xi = 0.5 * (tj + 1.0)  # Jacobi(1,0) nodes on [0,1]; weight (1-xi) is the Duffy jacobian
    eta = 0.5 * (tl + 1.0)
    wxi = 0.25 * wj
    weta = 0.5 * wl
    X = np.repeat(xi, n)
    Y = np.tile(eta, n) * (1.0 - X)
    W = np.outer(wxi, weta).ravel()
    pts = np.column_stack([X, Y])
    pts.setflags(write=False)
    W.setflags(write=False)
    return pts, W


@lru_cache(maxsize=None)
def interval_rule(order):
    """Gauss-Legendre points and weights on [0, 1], exact for degree <= order."""
    n = max(1, (int(order) + 2) // 2)
    t, w = roots_legendre(n)
    pts = 0.5 * (t + 1.0)
    wts = 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def map_to_physical(tri_coords, ref_pts):
    """Map reference points to physical coordinates of one triangle.

    tri_coords: (3, 2) vertex coordinates; ref_pts: (n, 2).
    Returns (phys_pts (n, 2), jac (2, 2), det).
    """
    v0 = tri_coords[0]
    jac = np.column_stack([tri_coords[1] - v0, tri_coords[2] - v0])
    det = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    phys = v0 + ref_pts @ jac.T
    return phys, jac, det
