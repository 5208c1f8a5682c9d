"""Quadrature on unit spheres and great subspheres, plus subspace frames.

Two product rules are available.

``"gauss"``
    Gauss-Gegenbauer nodes in the cosine of each polar angle and an offset
    trapezoid rule in the azimuth.  Exact for polynomials of degree up to the
    resolution.
``"orthant"``
    Gauss-Legendre nodes in the angles themselves, with every angle range
    split at multiples of pi/2.  Cell boundaries then fall on the coordinate
    hyperplanes, so integrands that are only piecewise smooth across those
    hyperplanes (l_p balls, l_1 weights) converge spectrally.

Hyperplane sections additionally have a ``"cells"`` rule
(:func:`hyperplane_cell_grid`) that follows the coordinate orthants inside
the hyperplane, so the same piecewise-smooth integrands stay spectrally
accurate on great subspheres.

Both full-sphere grids list the upper half first and its negation second, so node ``i``
and node ``i + K/2`` are antipodes.
"""
from dataclasses import dataclass, field
from math import gamma, pi, sqrt

import numpy as np
from itertools import combinations, product
from functools import lru_cache

from scipy.special import roots_gegenbauer, roots_jacobi

from ._parallel import evaluate_rows, tree_sum

GRID_KINDS = ("gauss", "orthant")
# coordinate magnitudes below this are treated as exact zeros when splitting hyperplanes
ZERO_COORD = 1e-13


def sphere_area(n):
    """Surface area of the unit sphere in R^n."""
    return 2.0 * pi ** (n / 2) / gamma(n / 2)


def as_direction(x, atol=1e-6):
    """Validate and renormalize a unit vector.

    Vectors whose norm is off by more than ``atol`` are rejected instead of
    being silently rescaled.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("a direction needs at least 2 coordinates")
    r = np.linalg.norm(x)
    if not np.isfinite(r) or abs(r - 1.0) > atol:
        raise ValueError(f"direction norm {r!r} differs from 1 by more than {atol}")
    return x / r


def random_directions(n, count, rng):
    X = rng.standard_normal((count, n))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


@dataclass(frozen=True)
class SphereGrid:
    """Nodes and positive weights on a unit sphere (possibly embedded).

    ``dimension`` is the ambient dimension of the node coordinates;
    ``sphere_dim`` is the dimension of the space whose unit sphere is
    discretized (equal to ``dimension`` unless the grid lives on a great
    subsphere).
    """

    dimension: int
    nodes: np.ndarray
    weights: np.ndarray
    kind: str = "gauss"
    resolution: int = 0
    sphere_dim: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        weights = np.ascontiguousarray(self.weights, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != self.dimension:
            raise ValueError("nodes must have shape (count, dimension)")
        if weights.shape != (len(nodes),):
            raise ValueError("one weight per node is required")
        if not np.all(weights > 0):
            raise ValueError("quadrature weights must be positive")
        if len(nodes) % 2:
            raise ValueError("grids are built from antipodal pairs")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if not self.sphere_dim:
            object.__setattr__(self, "sphere_dim", self.dimension)

    def __len__(self):
        return len(self.weights)

    @property
    def antipode(self):
        """Index map i -> index of -node_i."""
        half = len(self) // 2
        return np.concatenate([np.arange(half, 2 * half), np.arange(half)])

    def rotated(self, R):
        """Same rule with every node mapped by the orthogonal matrix R."""
        R = np.asarray(R, dtype=float)
        return SphereGrid(self.dimension, self.nodes @ R.T, self.weights,
                          self.kind, self.resolution, self.sphere_dim)


def _half_circle(kind, resolution):
    """Azimuth nodes covering [0, pi); the negation covers the rest."""
    if kind == "gauss":
        nphi = 2 * (resolution // 2 + 1)
        phi = 2 * pi * (np.arange(nphi // 2) + 0.5) / nphi
        w = np.full(nphi // 2, 2 * pi / nphi)
    else:
        N = max(2, resolution // 2)
        x, wx = np.polynomial.legendre.leggauss(N)
        quarter = (x + 1) * pi / 4
        phi = np.concatenate([quarter, quarter + pi / 2])
        w = np.concatenate([wx, wx]) * pi / 4
    return np.stack([np.cos(phi), np.sin(phi)], axis=1), w


def _polar_rule(kind, resolution, d):
    """Nodes t = cos(psi) in [-1, 1] and weights for the factor (1-t^2)^((d-3)/2)."""
    if kind == "gauss":
        N = resolution // 2 + 1
        t, wt = roots_gegenbauer(N, (d - 2) / 2)
        # symmetrize so that the rule is exactly even
        t = (t - t[::-1]) / 2
        wt = (wt + wt[::-1]) / 2
        return t, wt
    N = max(2, resolution // 2)
    x, wx = np.polynomial.legendre.leggauss(N)
    psi = (x + 1) * pi / 4
    t_half = np.cos(psi)
    w_half = wx * pi / 4 * np.sin(psi) ** (d - 2)
    # rescale so the factor's own weight integrates exactly; weight sums then match |S^{n-1}|
    w_half *= sqrt(pi) * gamma((d - 1) / 2) / (2 * gamma(d / 2)) / w_half.sum()
    # mirror the [0, pi/2] half onto [pi/2, pi]
    return np.concatenate([t_half, -t_half[::-1]]), np.concatenate([w_half, w_half[::-1]])


def build_sphere_grid(n, resolution, kind="gauss"):
    """Antipodally paired product quadrature on S^{n-1}.

    Parameters
    ----------
    n : int
        Ambient dimension, at least 2.
    resolution : int
        For ``"gauss"`` the polynomial degree integrated exactly.  For
        ``"orthant"`` twice the number of Gauss-Legendre nodes per quarter
        angle range.
    kind : {"gauss", "orthant"}

    Returns
    -------
    SphereGrid
    """
    n = int(n)
    resolution = int(resolution)
    if n < 2:
        raise ValueError("sphere grids need n >= 2")
    if resolution < 4:
        raise ValueError("resolution must be at least 4")
    if kind not in GRID_KINDS:
        raise ValueError(f"unknown grid kind {kind!r}")
    pts, w = _half_circle(kind, resolution)
    for d in range(3, n + 1):
        t, wt = _polar_rule(kind, resolution, d)
        s = np.sqrt(np.clip(1 - t * t, 0, None))
        m = len(pts)
        P = np.concatenate([np.repeat(t[:, None, None], m, axis=1),
                            s[:, None, None] * pts[None]], axis=2)
        pts = P.reshape(-1, d)
        w = (wt[:, None] * w[None]).reshape(-1)
    nodes = np.vstack([pts, -pts])
    weights = np.concatenate([w, w])
    return SphereGrid(n, nodes, weights, kind, resolution)


@dataclass(frozen=True)
class SubspaceFrame:
    """Orthonormal basis of a subspace H and of its orthogonal complement."""

    dimension: int
    basis: np.ndarray
    complement: np.ndarray

    @property
    def subspace_dim(self):
        return len(self.basis)

    def gram_error(self):
        Q = np.vstack([self.basis, self.complement])
        return float(np.abs(Q @ Q.T - np.eye(len(Q))).max())


def _householder_completion(xi):
    """Rows 2..n of a reflection sending e1 to +-xi (sign chosen for stability)."""
    n = len(xi)
    sign = 1.0 if xi[0] >= 0 else -1.0
    v = xi.copy()
    v[0] += sign
    H = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    # H e1 = -sign * xi, so the remaining columns span xi-perp
    return H[:, 1:].T.copy()


def orthonormal_complement(xi):
    """Frame of the hyperplane orthogonal to ``xi`` (deterministic in xi)."""
    xi = as_direction(xi)
    basis = _householder_completion(xi)
    # one re-orthogonalization pass tightens the residual to rounding level
    basis -= np.outer(basis @ xi, xi)
    basis, _ = np.linalg.qr(basis.T)
    return SubspaceFrame(len(xi), basis.T.copy(), xi[None, :].copy())


def subspace_frame(normals):
    """Frame of the subspace orthogonal to the given normal vectors."""
    A = np.atleast_2d(np.asarray(normals, dtype=float))
    n = A.shape[1]
    Q, _ = np.linalg.qr(A.T, mode="complete")
    k = np.linalg.matrix_rank(A)
    return SubspaceFrame(n, Q[:, k:].T.copy(), Q[:, :k].T.copy())


def random_subspace_frame(n, codim, rng):
    """Uniformly distributed H in G(n, n - codim)."""
    return subspace_frame(rng.standard_normal((codim, n)))


def great_subsphere_grid(frame, resolution, kind="gauss"):
    """Quadrature on the unit sphere of span(frame.basis), embedded in R^n."""
    d = frame.subspace_dim
    if d < 2:
        raise ValueError("the subspace must have dimension at least 2")
    local = build_sphere_grid(d, resolution, kind)
    return SphereGrid(frame.dimension, local.nodes @ frame.basis, local.weights,
                      kind, resolution, sphere_dim=d)


def integrate_on_grid(grid, f):
    """Sum of w_i f(theta_i).

    ``f`` is either a vectorized callable on an (m, n) array of nodes or an
    array of values already sampled at the nodes.
    """
    if callable(f):
        values = evaluate_rows(f, grid.nodes)
    else:
        values = np.asarray(f, dtype=float)
        if values.shape != (len(grid),):
            raise ValueError("sample array does not match the grid")
    return float(tree_sum(grid.weights * values))


def grid_from_nodes(nodes, kinds=GRID_KINDS, max_resolution=400, atol=1e-9):
    """Recover the product grid whose node list equals ``nodes``."""
    nodes = np.asarray(nodes, dtype=float)
    count, n = nodes.shape
    for kind in kinds:
        for res in range(4, max_resolution + 1, 2):
            m = 2 * (res // 2 + 1) ** (n - 1) if kind == "gauss" else 2 * (2 * max(2, res // 2)) ** (n - 1)
            if m == count:
                g = build_sphere_grid(n, res, kind)
                if np.abs(g.nodes - nodes).max() <= atol:
                    return g
            elif m > count:
                break
    raise ValueError("node list does not match any product grid")


@lru_cache(maxsize=None)
def simplex_rule(k, q):
    """Collapsed Gauss-Jacobi rule on the standard k-simplex.

    Returns barycentric coordinates of shape (m, k + 1) and weights summing
    to 1/k!.
    """
    if k == 0:
        return np.ones((1, 1)), np.ones(1)
    axes = []
    for j in range(1, k + 1):
        a = k - j
        x, w = roots_jacobi(q, a, 0)
        axes.append(((x + 1) / 2, w / 2 ** (a + 1)))
    T = np.stack(np.meshgrid(*[t for t, _ in axes], indexing="ij"), -1).reshape(-1, k)
    W = np.ones(len(T))
    for j, (_, w) in enumerate(axes):
        W = W * np.repeat(np.tile(w, q ** j), q ** (k - 1 - j))
    bary = np.empty((len(T), k + 1))
    rem = np.ones(len(T))
    for j in range(k):
        bary[:, j] = rem * T[:, j]
        rem = rem * (1 - T[:, j])
    bary[:, k] = rem
    bary.setflags(write=False)
    W.setflags(write=False)
    return bary, W


def _staircases(p, q):
    """Maximal simplices of the staircase triangulation of a product of simplices."""
    steps = p - 1 + q - 1
    for right in combinations(range(steps), p - 1):
        a = b = 0
        path = [(0, 0)]
        for s in range(steps):
            if s in right:
                a += 1
            else:
                b += 1
            path.append((a, b))
        yield path


def hyperplane_cones(xi):
    """Simplicial cones tiling half of the hyperplane orthogonal to ``xi``.

    Each cone is a matrix of n - 1 unit rays; the cones cover one member of
    every antipodal pair of orthant pieces of the hyperplane.
    """
    xi = as_direction(xi)
    n = len(xi)
    eye = np.eye(n)
    zero = [i for i in range(n) if abs(xi[i]) <= ZERO_COORD]
    live = [i for i in range(n) if abs(xi[i]) > ZERO_COORD]
    cones = []
    if len(live) == 1:
        for rest in product((1.0, -1.0), repeat=len(zero) - 1):
            signs = (1.0,) + rest
            cones.append(np.array([s * eye[z] for s, z in zip(signs, zero)]))
        return cones
    for rest in product((1.0, -1.0), repeat=n - 1):
        s = np.array((1.0,) + rest)
        P = [i for i in live if s[i] * xi[i] > 0]
        Q = [j for j in live if s[j] * xi[j] < 0]
        if not P or not Q:
            continue
        ztail = [s[z] * eye[z] for z in zero]
        for path in _staircases(len(P), len(Q)):
            rays = []
            for a, b in path:
                i, j = P[a], Q[b]
                r = abs(xi[j]) * s[i] * eye[i] + abs(xi[i]) * s[j] * eye[j]
                rays.append(r / np.linalg.norm(r))
            cones.append(np.array(rays + ztail))
    return cones


def hyperplane_cell_grid(xi, resolution):
    """Quadrature on S^{n-1} intersected with xi-perp, split along coordinate orthants.

    Every orthant piece is triangulated into simplicial cones and each cone
    is integrated through the central projection of its simplex, with a
    collapsed Gauss-Jacobi rule of ``resolution // 2`` nodes per direction.
    Integrands that are smooth inside each orthant converge spectrally.
    """
    xi = as_direction(xi)
    n = len(xi)
    if n < 3:
        raise ValueError("cell grids need n >= 3")
    q = max(2, int(resolution) // 2)
    bary, w = simplex_rule(n - 2, q)
    nodes, weights = [], []
    for R in hyperplane_cones(xi):
        V = bary @ R
        r = np.linalg.norm(V, axis=1)
        vol = sqrt(max(np.linalg.det(R @ R.T), 0.0))
        nodes.append(V / r[:, None])
        weights.append(w * vol / r ** (n - 1))
    X = np.vstack(nodes)
    W = np.concatenate(weights)
    keep = W > 0
    X, W = X[keep], W[keep]
    return SphereGrid(n, np.vstack([X, -X]), np.concatenate([W, W]), "cells", int(resolution),
                      sphere_dim=n - 1)
