"""Origin-symmetric star bodies given by radial functions, and convexity sampling."""
from dataclasses import dataclass, field

import numpy as np

from ._parallel import map_chunks
from .harmonics import expand
from .sphere import random_directions


def _unit_rows(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


class StarBody:
    """Star body with an even positive radial function on S^{n-1}.

    Parameters
    ----------
    dimension : int
    radial : callable
        Maps an (m, n) array of unit vectors to m positive radii.
    label : str
    spec : dict, optional
        JSON-ready description used by the command line.
    norm : callable, optional
        Closed-form Minkowski functional on arbitrary points.
    """

    def __init__(self, dimension, radial, label, spec=None, norm=None, flat_directions=None,
                 symmetric=False):
        self.dimension = int(dimension)
        self._radial = radial
        self.label = label
        self.spec = spec or {"kind": "custom", "label": label}
        self._norm = norm
        self._flat = flat_directions
        # invariant under signed coordinate permutations
        self.symmetric = symmetric

    def radial(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim == 1:
            return float(self._radial(theta[None, :])[0])
        return np.asarray(self._radial(theta), dtype=float)

    def __call__(self, theta):
        return self.radial(theta)

    def norm(self, x):
        """Minkowski functional |x| / rho(x/|x|); rows of x must be nonzero."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if self._norm is not None:
            out = np.asarray(self._norm(x), dtype=float)
        else:
            r = np.linalg.norm(x, axis=1)
            if np.any(r == 0):
                raise ValueError("the Minkowski functional is evaluated at nonzero points")
            out = r / self._radial(x / r[:, None])
        return float(out[0]) if single else out

    def flat_directions(self, count, rng):
        """Boundary directions with a vanishing principal curvature, if known.

        Returns (theta, u): unit points and unit tangent directions along which
        the boundary is flat to second order, or None.
        """
        if self._flat is None:
            return None
        return self._flat(count, rng)

    def scaled(self, r):
        r = float(r)
        if r <= 0:
            raise ValueError("scale factor must be positive")
        base = self
        norm = None if self._norm is None else (lambda x: self._norm(x) / r)
        spec = dict(self.spec)
        spec["scale"] = spec.get("scale", 1.0) * r
        flat = self._flat
        return StarBody(self.dimension, lambda T: r * base._radial(T), f"{r:g}*{self.label}",
                        spec, norm, flat, self.symmetric)

    def linear_image(self, T):
        """Body T(K) for an invertible matrix T."""
        T = np.asarray(T, dtype=float)
        Tinv = np.linalg.inv(T)
        base = self

        def norm(x):
            return base.norm(x @ Tinv.T)

        def radial(theta):
            return 1.0 / norm(theta)

        spec = dict(self.spec)
        spec["matrix"] = (T @ np.asarray(spec.get("matrix", np.eye(self.dimension)))).tolist()
        return StarBody(self.dimension, radial, f"T({self.label})", spec, norm)


def _lp_norm(p):
    def norm(X):
        A = np.abs(X)
        top = A.max(axis=1)
        if np.isinf(p):
            return top
        safe = np.where(top > 0, top, 1.0)
        return top * np.sum((A / safe[:, None]) ** p, axis=1) ** (1.0 / p)
    return norm


def _coordinate_flats(n):
    def flats(count, rng):
        per = max(1, count // n)
        thetas, us = [], []
        for i in range(n):
            T = rng.standard_normal((per, n))
            T[:, i] = 0.0
            thetas.append(T / np.linalg.norm(T, axis=1, keepdims=True))
            U = np.zeros((per, n))
            U[:, i] = 1.0
            us.append(U)
        return np.vstack(thetas), np.vstack(us)
    return flats


def lp_ball(n, p):
    """Unit ball of the l_p (quasi-)norm; p may be ``inf``."""
    p = float(p)
    if not p > 0:
        raise ValueError("p must be positive")
    norm = _lp_norm(p)
    flat = _coordinate_flats(n) if 2 < p < np.inf else None
    spec = {"kind": "lp", "n": int(n), "p": "inf" if np.isinf(p) else p}
    return StarBody(n, lambda T: 1.0 / norm(T), f"B_{'inf' if np.isinf(p) else f'{p:g}'}^{n}",
                    spec, norm, flat, symmetric=True)


def ellipsoid(semi_axes):
    a = np.asarray(semi_axes, dtype=float)
    if a.ndim != 1 or a.size < 2 or not np.all(a > 0):
        raise ValueError("semi-axes must be positive")

    def norm(X):
        return np.sqrt(np.sum((X / a) ** 2, axis=1))

    return StarBody(len(a), lambda T: 1.0 / norm(T), "ellipsoid(" + ",".join(f"{v:g}" for v in a) + ")",
                    {"kind": "ellipsoid", "semi_axes": a.tolist()}, norm)


def from_radial_samples(values, grid, M):
    """Body whose radial function is the even expansion of grid samples."""
    v = np.asarray(values, dtype=float)
    if v.shape != (len(grid),):
        raise ValueError("one sample per grid node is required")
    if not np.all(v > 0):
        raise ValueError("radial samples must be positive")
    expansion = expand(v, grid, M)
    roundtrip = float(np.max(np.abs(expansion.evaluate(grid.nodes) / v - 1)))
    floor = 1e-3 * float(v.min())

    def radial(T):
        return np.maximum(expansion.evaluate(T), floor)

    body = StarBody(grid.dimension, radial, "samples",
                    {"kind": "samples", "n": grid.dimension, "grid_kind": grid.kind,
                     "resolution": grid.resolution, "max_degree": M, "values": v.tolist()})
    body.expansion = expansion
    body.roundtrip_error = roundtrip
    return body


def minkowski_functional(body, x):
    x = np.asarray(x, dtype=float)
    if np.any(np.linalg.norm(np.atleast_2d(x), axis=1) == 0):
        raise ValueError("x must be nonzero")
    return body.norm(x)


@dataclass(frozen=True)
class ConvexityReport:
    is_convex: bool
    worst_violation: float
    witness: tuple
    num_pairs: int
    tol: float
    meta: dict = field(default_factory=dict, compare=False)


def _pair_chunk(body, seed, index, size, local_share):
    rng = np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(index)]))
    n = body.dimension
    theta = random_directions(n, size, rng)
    phi = random_directions(n, size, rng)
    k = int(round(local_share * size))
    if k:
        # nearby partners at geometric scales catch small-scale dents
        u = rng.standard_normal((k, n))
        u -= np.sum(u * theta[:k], axis=1, keepdims=True) * theta[:k]
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        s = 10.0 ** rng.uniform(-3.5, -0.3, size=(k, 1))
        phi[:k] = np.cos(s) * theta[:k] + np.sin(s) * u
        flats = body.flat_directions(k // 2 + n, rng)
        if flats is not None:
            # symmetric pairs straddling points where the boundary is nearly flat
            pick = rng.permutation(len(flats[0]))[: k // 2]
            T0, U0 = flats[0][pick], flats[1][pick]
            m = len(T0)
            T0 = T0 + 10.0 ** rng.uniform(-4, -1, (m, 1)) * random_directions(n, m, rng)
            T0 /= np.linalg.norm(T0, axis=1, keepdims=True)
            U0 = U0 + 0.5 * random_directions(n, m, rng) * rng.integers(0, 2, (m, 1))
            U0 -= np.sum(U0 * T0, axis=1, keepdims=True) * T0
            U0 /= np.linalg.norm(U0, axis=1, keepdims=True)
            s = s[:m]
            theta[:m] = np.cos(s) * T0 + np.sin(s) * U0
            phi[:m] = np.cos(s) * T0 - np.sin(s) * U0
    x = body.radial(theta)[:, None] * theta
    y = body.radial(phi)[:, None] * phi
    viol = body.norm(0.5 * (x + y)) - 1.0
    i = int(np.argmax(viol))
    return float(viol[i]), x[i], y[i]


def convexity_check(body, num_pairs=100000, tol=1e-9, seed=0, local_share=0.5, chunk=8192):
    """Sampled midpoint test on boundary pairs.

    Half of the pairs (by default) are independent uniform directions, the
    rest pair each direction with a partner at a random geometric distance.
    For bodies that know where their boundary is flat, half of the local
    pairs are centred there instead.
    Randomness is keyed by (seed, chunk index), never by worker.
    """
    if num_pairs < 1:
        raise ValueError("num_pairs must be positive")
    sizes = [min(chunk, num_pairs - s) for s in range(0, num_pairs, chunk)]
    results = map_chunks(lambda sl: [_pair_chunk(body, seed, j, sizes[j], local_share)
                                     for j in range(sl.start, sl.stop)], len(sizes), 1)
    results = [r for part in results for r in part]
    j = int(np.argmax([r[0] for r in results]))
    worst, x, y = results[j]
    return ConvexityReport(bool(worst <= tol), worst, (x, y), int(num_pairs), float(tol))


def body_from_spec(spec, n=None):
    """Build a body from its JSON description."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("body spec must be an object with a 'kind' field")
    kind = spec["kind"]
    if kind == "lp":
        dim = int(spec.get("n", n or 0))
        if dim < 2:
            raise ValueError("lp body needs 'n' >= 2")
        p = spec.get("p")
        if p is None:
            raise ValueError("lp body needs 'p'")
        body = lp_ball(dim, np.inf if p in ("inf", "Infinity") else float(p))
    elif kind == "ellipsoid":
        body = ellipsoid(spec.get("semi_axes") or [])
    elif kind == "samples":
        from .sphere import build_sphere_grid
        dim = int(spec.get("n", n or 0))
        grid = build_sphere_grid(dim, int(spec["resolution"]), spec.get("grid_kind", "gauss"))
        body = from_radial_samples(spec["values"], grid, int(spec.get("max_degree", 6)))
    else:
        raise ValueError(f"unknown body kind {kind!r}")
    if n is not None and body.dimension != n:
        raise ValueError(f"body dimension {body.dimension} does not match n={n}")
    if "matrix" in spec:
        body = body.linear_image(np.asarray(spec["matrix"], dtype=float))
    if "scale" in spec:
        body = body.scaled(float(spec["scale"]))
    return body


def random_rotation(n, rng):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def random_convex_body(n, rng, kinds=("ellipsoid", "lp")):
    """Randomly rotated ellipsoid or l_p ball (1 <= p <= 8) with axes in [0.5, 2]."""
    kind = kinds[int(rng.integers(len(kinds)))]
    if kind == "ellipsoid":
        body = ellipsoid(rng.uniform(0.5, 2.0, n))
    else:
        body = lp_ball(n, float(rng.uniform(1.0, 8.0))).linear_image(np.diag(rng.uniform(0.7, 1.4, n)))
    return body.linear_image(random_rotation(n, rng))
