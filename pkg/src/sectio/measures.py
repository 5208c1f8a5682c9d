"""Weighted measures of star bodies and of their central sections.

Every built-in density factors along rays as

    f(t theta) = c(theta) * t^s * exp(-g t^2 / 2),

so radial integrals have closed forms through the regularized incomplete
gamma function.  An adaptive Gauss-Legendre rule that only calls
``Density.eval`` is kept as an independent second route.
"""
import csv
import io
from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
from scipy.special import gammainc

from ._parallel import evaluate_rows, tree_sum
from .bodies import StarBody
from .errors import NumericalFailure
from .harmonics import fourier_at, radon_inverse
from .sphere import (SphereGrid, as_direction, build_sphere_grid, great_subsphere_grid,
                     hyperplane_cell_grid, orthonormal_complement)

# orthant-grid resolution (twice the nodes per quarter angle) used for volumes
MEASURE_RESOLUTION = {2: 128, 3: 64, 4: 40, 5: 20, 6: 12}
# Gauss subsphere resolution for section integrals, keyed by ambient dimension
SECTION_RESOLUTION = {3: 400, 4: 200, 5: 100, 6: 40}
# orthant-cell resolution for hyperplane sections
CELL_RESOLUTION = {3: 64, 4: 40, 5: 32, 6: 20}
# Fourier route: orthant-grid resolution and harmonic degree
FOURIER_RESOLUTION = {3: 160, 4: 64, 5: 36, 6: 16}
FOURIER_DEGREE = {3: 128, 4: 56, 5: 28, 6: 12}


def default_measure_grid(n):
    return build_sphere_grid(n, MEASURE_RESOLUTION.get(n, 10), "orthant")


# ---------------------------------------------------------------- densities

@dataclass(frozen=True)
class Density:
    """Even nonnegative weight on R^n.

    ``kind`` is one of ``lebesgue``, ``gaussian``, ``lp_power``,
    ``body_power`` or ``product`` (with ``factors``).
    """

    dimension: int
    kind: str
    p: float = 2.0
    s: float = 0.0
    factors: tuple = ()
    body: StarBody = field(default=None, compare=False, repr=False)

    @property
    def label(self):
        if self.kind == "lp_power":
            return f"lp_power(p={self.p:g},s={self.s:g})"
        if self.kind == "body_power":
            return f"norm[{self.body.label}]^{self.s:g}"
        if self.kind == "product":
            return "*".join(f.label for f in self.factors)
        return self.kind

    @property
    def smooth(self):
        if self.kind == "product":
            return all(f.smooth for f in self.factors)
        return self.kind in ("lebesgue", "gaussian") or (self.kind == "lp_power" and self.p == 2
                                                         and float(self.s / 2).is_integer() and self.s >= 0)

    @property
    def strictly_positive(self):
        """Positive away from the origin."""
        return True

    def spec(self):
        if self.kind == "product":
            return [f.spec() for f in self.factors]
        if self.kind == "lp_power":
            return {"kind": "lp_power", "p": "inf" if np.isinf(self.p) else self.p, "s": self.s}
        if self.kind == "body_power":
            return {"kind": "body_power", "body": self.body.spec, "s": self.s}
        return {"kind": self.kind}

    def ray_factors(self, theta):
        """(c(theta), s, g) with f(t theta) = c t^s exp(-g t^2/2)."""
        theta = np.atleast_2d(theta)
        if self.kind == "lebesgue":
            return np.ones(len(theta)), 0.0, 0.0
        if self.kind == "gaussian":
            return np.ones(len(theta)), 0.0, 1.0
        if self.kind == "lp_power":
            return lp_norm(theta, self.p) ** self.s, self.s, 0.0
        if self.kind == "body_power":
            return self.body.norm(theta) ** self.s, self.s, 0.0
        c, s, g = np.ones(len(theta)), 0.0, 0.0
        for f in self.factors:
            cf, sf, gf = f.ray_factors(theta)
            c, s, g = c * cf, s + sf, g + gf
        return c, s, g

    def eval(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "lebesgue":
            return np.ones(len(X))
        if self.kind == "gaussian":
            return np.exp(-0.5 * np.sum(X * X, axis=1))
        if self.kind == "lp_power":
            return lp_norm(X, self.p) ** self.s
        if self.kind == "body_power":
            return self.body.norm(X) ** self.s
        out = np.ones(len(X))
        for f in self.factors:
            out = out * f.eval(X)
        return out

    def __call__(self, X):
        return self.eval(X)


def lp_norm(X, p):
    A = np.abs(np.atleast_2d(X))
    top = A.max(axis=1)
    if np.isinf(p):
        return top
    safe = np.where(top > 0, top, 1.0)
    return top * np.sum((A / safe[:, None]) ** p, axis=1) ** (1.0 / p)


def lebesgue(n):
    return Density(n, "lebesgue")


def gaussian(n):
    return Density(n, "gaussian")


def lp_power(n, p, s):
    if not s > -1:
        raise ValueError("lp_power needs s > -1")
    if not p > 0:
        raise ValueError("lp_power needs p > 0")
    return Density(n, "lp_power", p=float(p), s=float(s))


def body_power(body, s):
    """Weight ||x||_M^s for a star body M."""
    if not s > -1:
        raise ValueError("body_power needs s > -1")
    return Density(body.dimension, "body_power", s=float(s), body=body)


def product(*densities):
    dims = {d.dimension for d in densities}
    if len(dims) != 1:
        raise ValueError("factors must share a dimension")
    flat = []
    for d in densities:
        flat.extend(d.factors if d.kind == "product" else [d])
    return Density(dims.pop(), "product", factors=tuple(flat))


def density_from_spec(spec, n):
    if isinstance(spec, list):
        if not spec:
            raise ValueError("empty density product")
        parts = [density_from_spec(s, n) for s in spec]
        return parts[0] if len(parts) == 1 else product(*parts)
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("density spec must be an object with a 'kind' field")
    kind = spec["kind"]
    if kind == "lebesgue":
        return lebesgue(n)
    if kind == "gaussian":
        return gaussian(n)
    if kind == "lp_power":
        if "p" not in spec or "s" not in spec:
            raise ValueError("lp_power density needs 'p' and 's'")
        p = spec["p"]
        return lp_power(n, np.inf if p in ("inf", "Infinity") else float(p), float(spec["s"]))
    if kind == "body_power":
        from .bodies import body_from_spec
        return body_power(body_from_spec(spec["body"], n), float(spec.get("s", 1.0)))
    raise ValueError(f"unknown density kind {kind!r}")


# ---------------------------------------------------------- radial integrals

def _power_gauss_integral(e, g, rho):
    """Integral of t^e exp(-g t^2/2) over [0, rho]."""
    rho = np.asarray(rho, dtype=float)
    if g == 0:
        return rho ** (e + 1) / (e + 1)
    a = (e + 1) / 2
    return 2 ** ((e - 1) / 2) * g ** (-a) * gamma(a) * gammainc(a, 0.5 * g * rho * rho)


def radial_integral(density, theta, rho, k, rule="closed"):
    """Integral of t^k f(t theta) over [0, rho] for each row of theta.

    Parameters
    ----------
    rule : {"closed", "gauss-legendre"}
        Closed form through the ray factorization, or the adaptive rule that
        only evaluates the density pointwise.
    """
    theta = np.atleast_2d(theta)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (len(theta),))
    if rule == "closed":
        c, s, g = density.ray_factors(theta)
        return c * _power_gauss_integral(k + s, g, rho)
    if rule == "gauss-legendre":
        _, s, _ = density.ray_factors(theta[:1])

        def feval(t, rows):
            pts = (t[:, :, None] * theta[rows, None, :]).reshape(-1, theta.shape[1])
            return density.eval(pts).reshape(t.shape)

        return adaptive_radial(feval, rho, k + s, k)
    raise ValueError(f"unknown radial rule {rule!r}")


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def adaptive_radial(feval, rho, exponent, k, tol=1e-10, max_level=10):
    """Integral over [0, rho_i] of t^k f_i(t) with panel doubling.

    ``feval(t, rows)`` returns f at radii ``t`` (shape (len(rows), m)) for the
    given rows.  When the total power ``exponent`` is not an integer the
    substitution t = rho u^(1/(exponent+1)) removes the endpoint singularity;
    the rule then integrates f(t) t^(k - exponent) in u.
    """
    rho = np.asarray(rho, dtype=float)
    rows_all = np.arange(len(rho))
    smooth_power = float(exponent).is_integer()
    q = 1.0 / (exponent + 1)

    def panel_rule(level, rows):
        m = 2 ** level
        edges = np.linspace(0.0, 1.0, m + 1)
        u = (edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * (_GL_NODES + 1) / 2).ravel()
        wu = np.tile(_GL_WEIGHTS / (2 * m), m)
        r = rho[rows][:, None]
        if smooth_power:
            t = r * u[None, :]
            vals = feval(t, rows) * t ** k
            return (vals @ wu) * rho[rows]
        t = r * u[None, :] ** q
        vals = feval(t, rows) * np.where(t > 0, t, 1.0) ** (k - exponent)
        return (vals @ wu) * rho[rows] ** (exponent + 1) * q

    out = np.empty(len(rho))
    pending = rows_all
    coarse = panel_rule(0, pending)
    for level in range(1, max_level + 1):
        fine = panel_rule(level, pending)
        done = np.abs(fine - coarse) <= tol * np.maximum(np.abs(fine), 1e-300)
        out[pending[done]] = fine[done]
        pending, coarse = pending[~done], fine[~done]
        if not len(pending):
            return out
    raise NumericalFailure(f"radial rule did not converge on {len(pending)} rays")


def radial_solve(density, theta, target, k, rtol=1e-15):
    """Radius rho with radial_integral(rho) = target, by bracketing and bisection.

    The radial integral is strictly increasing in rho when the density is
    positive away from the origin, so the bracket is unique.
    """
    theta = np.atleast_2d(theta)
    target = np.broadcast_to(np.asarray(target, dtype=float), (len(theta),)).copy()
    if np.any(target < 0):
        raise NumericalFailure("negative radial target")
    c, s, g = density.ray_factors(theta)
    e = k + s
    if np.any(c <= 0):
        raise NumericalFailure("density vanishes along a ray")
    # the pure-power radius is a lower bound (the Gaussian factor only shrinks)
    hi = (target * (e + 1) / c) ** (1.0 / (e + 1))
    hi = np.where(hi > 0, hi, 1e-300)
    F = lambda r: c * _power_gauss_integral(e, g, r)
    for _ in range(200):
        short = F(hi) < target
        if not np.any(short):
            break
        hi = np.where(short, 2 * hi, hi)
    else:
        raise NumericalFailure("could not bracket the radial equation; target exceeds the ray's total mass")
    lo = np.where(target > 0, 0.5 * hi, 0.0)
    lo = np.where(F(lo) <= target, lo, 0.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = F(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= rtol * hi):
            break
    return 0.5 * (lo + hi)


# ------------------------------------------------------------- body measures

def ratio_monotone_check(f_n, f_prev, grid, t_samples):
    """Worst consecutive increment of t f_n(t theta) / f_{n-1}(t theta).

    Returns (worst, theta, t) where ``worst < 0`` means the ratio decreases
    somewhere on the samples.  Raises when f_{n-1} vanishes at a test point.
    """
    t = np.asarray(t_samples, dtype=float)
    X = grid.nodes if isinstance(grid, SphereGrid) else np.atleast_2d(grid)
    pts = (X[:, None, :] * t[None, :, None]).reshape(-1, X.shape[1])
    num = f_n.eval(pts).reshape(len(X), len(t))
    den = f_prev.eval(pts).reshape(len(X), len(t))
    zero = np.argwhere(den == 0)
    if len(zero):
        i, j = zero[0]
        raise NumericalFailure(f"f_(n-1) vanishes at theta={X[i].tolist()}, t={t[j]}")
    ratio = t[None, :] * num / den
    d = np.diff(ratio, axis=1)
    i, j = np.unravel_index(np.argmin(d), d.shape)
    return float(d[i, j]), X[i].copy(), float(t[j])


def body_measure(body, density, grid=None, radial_rule="closed"):
    """Integral of the density over the body, in polar coordinates."""
    grid = default_measure_grid(body.dimension) if grid is None else grid
    n = body.dimension

    def integrand(T):
        return radial_integral(density, T, body.radial(T), n - 1, radial_rule)

    vals = evaluate_rows(integrand, grid.nodes)
    if not np.all(np.isfinite(vals)):
        raise NumericalFailure("nonfinite radial integrand")
    return float(tree_sum(grid.weights * vals))


@dataclass(frozen=True)
class RadialSectionTransform:
    """Values of A_K(theta), the inner radial integral of the section formula."""

    grid: SphereGrid
    values: np.ndarray


def section_transform(body, density, grid=None, radial_rule="closed"):
    grid = default_measure_grid(body.dimension) if grid is None else grid
    n = body.dimension
    vals = evaluate_rows(lambda T: radial_integral(density, T, body.radial(T), n - 2, radial_rule),
                         grid.nodes)
    if not np.all(np.isfinite(vals)):
        raise NumericalFailure("nonfinite radial integrand")
    return RadialSectionTransform(grid, vals)


def subspace_section_integral(body, density, frame, resolution=None, kind=None):
    """Integral of the density over K intersected with span(frame.basis).

    Hyperplanes use the orthant-cell rule by default; lower-dimensional
    subspaces use a Gauss product rule on their great subsphere.
    """
    d = frame.subspace_dim
    if d < 2:
        raise ValueError("subspace dimension must be at least 2")
    hyperplane = len(frame.complement) == 1 and frame.dimension >= 3
    kind = ("cells" if hyperplane else "gauss") if kind is None else kind
    if kind == "cells":
        if not hyperplane:
            raise ValueError("the cell rule applies to hyperplanes only")
        resolution = CELL_RESOLUTION.get(frame.dimension, 16) if resolution is None else resolution
        sub = hyperplane_cell_grid(frame.complement[0], resolution)
    else:
        resolution = SECTION_RESOLUTION.get(d + 1, 40) if resolution is None else resolution
        sub = great_subsphere_grid(frame, resolution, kind)
    vals = evaluate_rows(lambda T: radial_integral(density, T, body.radial(T), d - 1), sub.nodes)
    if not np.all(np.isfinite(vals)):
        raise NumericalFailure("nonfinite radial integrand")
    return float(tree_sum(sub.weights * vals))


def section_measure_direct(body, density, xi, resolution=None, kind=None):
    """Weighted (n-1)-volume of the central section orthogonal to xi."""
    return subspace_section_integral(body, density, orthonormal_complement(xi), resolution, kind)


def section_measures_direct(body, density, xis, resolution=None, kind=None):
    """Direct route for many directions, each computed independently."""
    xis = np.atleast_2d(xis)
    return np.array([section_measure_direct(body, density, x, resolution, kind) for x in xis])


def section_measure_fourier(body, density, xi, grid=None, M=None, details=False):
    """Section measure through the transform of A_K |x|^{1-n}, divided by pi.

    ``xi`` may be a single direction or an array of directions.  With
    ``details=True`` a dict with the per-degree terms and any truncation
    warning is returned alongside the values.
    """
    n = body.dimension
    if grid is None:
        grid = build_sphere_grid(n, FOURIER_RESOLUTION.get(n, 12), "orthant")
    M = FOURIER_DEGREE.get(n, 12) if M is None else M
    xis = np.atleast_2d(np.asarray(xi, dtype=float))
    xis = np.array([as_direction(x) for x in xis])
    A = section_transform(body, density, grid).values
    total, terms = fourier_at(A, grid, -(n - 1), xis, M)
    values = total / pi
    out = values[0] if np.ndim(xi) == 1 else values
    if not details:
        return out
    top = np.abs(terms[-1]) / np.maximum(np.abs(total), 1e-300)
    info = {"terms": terms / pi, "top_degree_share": top}
    if np.any(top > 0.01):
        info["warning"] = "truncation"
    return out, info


# ----------------------------------------------------------- section profiles

@dataclass
class SectionProfile:
    """Section measures at unit directions; degree -1 homogeneous off the sphere."""

    body_label: str
    density_label: str
    directions: np.ndarray
    values: np.ndarray
    grid: SphereGrid = None

    def value_at(self, x, atol=1e-9):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x)
        u = x / r
        d = np.minimum(np.abs(self.directions - u).max(axis=1), np.abs(self.directions + u).max(axis=1))
        i = int(np.argmin(d))
        if d[i] > atol:
            raise KeyError("direction is not a profile node")
        return float(self.values[i]) / r

    def to_csv(self, fh=None):
        n = self.directions.shape[1]
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"xi_{i + 1}" for i in range(n)] + ["value"])
        for x, v in zip(self.directions, self.values):
            w.writerow([f"{c:.9g}" for c in x] + [f"{v:.9g}"])
        return buf.getvalue() if fh is None else None

    @classmethod
    def from_csv(cls, text, body_label="", density_label=""):
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        n = sum(1 for h in header if h.startswith("xi_"))
        if n < 2 or "value" not in header:
            raise ValueError("profile CSV needs xi_1..xi_n and value columns")
        data = np.array([[float(c) for c in r] for r in body])
        vi = header.index("value")
        return cls(body_label, density_label, data[:, :n], data[:, vi])


def section_profile(body, density, grid, route="direct", resolution=None, M=None, fourier_grid=None,
                    kind=None):
    """Profile over the nodes of ``grid`` by the chosen route."""
    # profiles are even and grid nodes come in antipodal halves: compute one half
    h = len(grid) // 2
    paired = len(grid) % 2 == 0 and np.array_equal(grid.nodes[:h], -grid.nodes[h:])
    half = grid.nodes[:h] if paired else grid.nodes
    if route == "direct":
        vals = section_measures_direct(body, density, half, resolution, kind)
    elif route == "fourier":
        vals = section_measure_fourier(body, density, half, fourier_grid, M)
    else:
        raise ValueError(f"unknown route {route!r}")
    if paired:
        vals = np.concatenate([vals, vals])
    return SectionProfile(body.label, density.label, grid.nodes.copy(), np.asarray(vals), grid)


def reconstruct_from_sections(profile, density, grid=None, M=None, negative_tol=1e-6):
    """Star body whose weighted section profile matches ``profile``.

    Inverts the Radon transform degreewise to recover A_K, then solves the
    radial equation for rho along every requested direction.
    """
    grid = profile.grid if grid is None else grid
    if grid is None:
        from .sphere import grid_from_nodes
        grid = grid_from_nodes(profile.directions)
    if len(grid) != len(profile.values) or np.abs(grid.nodes - profile.directions).max() > 1e-8:
        raise ValueError("profile directions must be the nodes of the quadrature grid")
    n = grid.dimension
    M = (grid.resolution // 2) - (grid.resolution // 2) % 2 if M is None else M
    A = radon_inverse(profile.values, grid, M)
    a_nodes = A.evaluate(grid.nodes)
    scale = float(np.abs(a_nodes).max())
    if a_nodes.min() < -negative_tol * scale:
        raise NumericalFailure("recovered A_K is negative: not a section profile of any body")
    floor = 1e-12 * scale

    def radial(T):
        return radial_solve(density, T, np.maximum(A.evaluate(T), floor), n - 2, rtol=1e-12)

    body = StarBody(n, radial, f"reconstructed[{profile.body_label}]",
                    {"kind": "reconstructed", "n": n, "max_degree": M})
    body.section_expansion = A
    body.residual = A.meta.get("residual")
    return body
