"""Even spherical-harmonic expansions, Radon and Fourier multipliers.

The real orthonormal basis of degree-m harmonics is built from zonal
functions ``P_m(x . y_j)`` at a fixed pseudo-random set of poles ``y_j``.
Their exact Gram matrix follows from the addition theorem,

    <P_m(. y_i), P_m(. y_k)> = |S^{n-1}| / N(n, m) * P_m(y_i . y_k),

so orthonormalization needs no quadrature at all.  ``P_m`` is the
Gegenbauer polynomial of index (n-2)/2 normalized to ``P_m(1) = 1``.
"""
import threading
from dataclasses import dataclass, field
from math import comb, exp, lgamma, pi, sqrt

import numpy as np
from scipy.optimize import minimize
from scipy.special import roots_gegenbauer

from ._parallel import map_chunks, tree_sum
from .errors import EvennessError, NumericalFailure
from .sphere import integrate_on_grid, orthonormal_complement, \
    great_subsphere_grid, sphere_area

PD_RELATIVE_TOL = 1e-6
TRUNCATION_SHARE = 0.01


def default_degree(n):
    """Harmonic degree used for positive-definiteness tests."""
    return 8 if n <= 4 else 12


def harmonic_dimension(n, m):
    """Number of linearly independent degree-m harmonics on S^{n-1}."""
    if m < 0:
        return 0
    return comb(m + n - 1, n - 1) - (comb(m + n - 3, n - 1) if m >= 2 else 0)


def gegenbauer_table(n, M, t):
    """Rows P_0(t), ..., P_M(t) of normalized Gegenbauer polynomials.

    Uses ``(m + 2 lam) P_{m+1} = 2 (m + lam) t P_m - m P_{m-1}`` with
    ``lam = (n - 2) / 2``, which keeps ``P_m(1) = 1`` for every m.
    """
    t = np.asarray(t, dtype=float)
    lam = (n - 2) / 2
    out = np.empty((M + 1,) + t.shape)
    out[0] = 1.0
    if M >= 1:
        out[1] = t
    for m in range(1, M):
        out[m + 1] = ((2 * m + 2 * lam) * t * out[m] - m * out[m - 1]) / (m + 2 * lam)
    return out


def gegenbauer(n, m, t):
    return gegenbauer_table(n, m, t)[m]


def _check_even_degree(m):
    if m < 0 or m % 2:
        raise ValueError(f"odd-degree harmonics are annihilated here; got m={m}")


def radon_multiplier(n, m):
    """Eigenvalue of the spherical Radon transform on degree-m harmonics.

    Funk-Hecke gives ``|S^{n-2}| * P_m(0)``; for even m,
    ``P_m(0) = (-1)^{m/2} Gamma((m+1)/2) Gamma((n-1)/2) / (sqrt(pi) Gamma((m+n-1)/2))``.
    """
    if n < 3:
        raise ValueError("the Radon multiplier needs n >= 3")
    _check_even_degree(m)
    p0 = exp(lgamma((m + 1) / 2) + lgamma((n - 1) / 2) - lgamma((m + n - 1) / 2)) / sqrt(pi)
    return (-1) ** (m // 2) * sphere_area(n - 1) * p0


def fourier_multiplier(n, p, m):
    """Scalar with ``(r^-p Y_m)^ = lambda * r^(p-n) Y_m`` (transform e^{-i x.xi}).

    Only the two homogeneities used here are supported: ``p = 1`` and
    ``p = n - 1``.
    """
    _check_even_degree(m)
    if not (abs(p - 1) < 1e-12 or abs(p - (n - 1)) < 1e-12):
        raise ValueError(f"unsupported homogeneity p={p} for n={n}")
    logmag = (n - p) * np.log(2) + (n / 2) * np.log(pi) + lgamma((m + n - p) / 2) - lgamma((m + p) / 2)
    return (-1) ** (m // 2) * exp(logmag)


def _order_of(source_degree, n):
    p = -source_degree
    if abs(p - 1) < 1e-12:
        return 1
    if abs(p - (n - 1)) < 1e-12:
        return n - 1
    raise ValueError("source degree must be -1 or -(n-1)")


_pole_cache = {}


def pole_sequence(n, k):
    """First k poles of the fixed pseudo-random pole sequence on S^{n-1}.

    Every degree uses a prefix of the same sequence, so one Gegenbauer
    table of ``X @ poles.T`` serves all degrees of an expansion.
    """
    P = _pole_cache.get(n)
    if P is None or len(P) < k:
        size = max(k, 2 * len(P) if P is not None else 64)
        Y = np.random.default_rng([n, 20240611]).standard_normal((size, n))
        P = Y / np.linalg.norm(Y, axis=1, keepdims=True)
        _pole_cache[n] = P
    return P[:k]


def pole_count(n, m):
    d = harmonic_dimension(n, m)
    return d + d // 4 + 8


class HarmonicBasis:
    """Orthonormal real basis of degree-m harmonics on S^{n-1}."""

    def __init__(self, n, m):
        self.n, self.m = n, m
        self.dim = harmonic_dimension(n, m)
        self.poles = pole_sequence(n, pole_count(n, m)).copy()
        G = sphere_area(n) / self.dim * gegenbauer(n, m, np.clip(self.poles @ self.poles.T, -1, 1))
        ev, V = np.linalg.eigh(G)
        ev, V = ev[::-1][:self.dim], V[:, ::-1][:, :self.dim]
        if ev[-1] <= 1e-8 * ev[0]:
            raise NumericalFailure(f"degenerate pole set for harmonics n={n}, m={m}")
        self.mix = V / np.sqrt(ev)

    def __call__(self, X):
        X = np.atleast_2d(X)
        return gegenbauer(self.n, self.m, np.clip(X @ self.poles.T, -1, 1)) @ self.mix


def _zonal_rows(X, n, M):
    """Yield ``(m, P_m(X @ poles.T))`` for even m <= M against the shared poles.

    The recurrence keeps only two rows alive, so memory stays at a few
    times ``len(X) * pole_count(n, M)``.
    """
    t = np.clip(X @ pole_sequence(n, pole_count(n, M)).T, -1, 1)
    lam = (n - 2) / 2
    prev, cur = np.ones_like(t), t
    yield 0, prev
    for m in range(1, M):
        prev, cur = cur, ((2 * m + 2 * lam) * t * cur - m * prev) / (m + 2 * lam)
        if (m + 1) % 2 == 0:
            yield m + 1, cur


_basis_cache = {}
_basis_lock = threading.Lock()


def harmonic_basis(n, m):
    key = (int(n), int(m))
    basis = _basis_cache.get(key)
    if basis is None:
        with _basis_lock:
            basis = _basis_cache.get(key)
            if basis is None:
                basis = HarmonicBasis(*key)
                _basis_cache[key] = basis
    return basis


@dataclass(frozen=True)
class HarmonicExpansion:
    """Coefficients of an even function in the basis of each even degree."""

    dimension: int
    max_degree: int
    coeffs: tuple
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def degrees(self):
        return list(range(0, self.max_degree + 1, 2))

    def coefficient(self, m):
        return self.coeffs[m // 2]

    def evaluate(self, X):
        """Values at unit vectors X, shape (k, n) or (n,)."""
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        n = self.dimension

        live = [(m, c) for m, c in zip(self.degrees, self.coeffs) if np.any(c)]
        if not live:
            return 0.0 if single else np.zeros(len(X))
        top = live[-1][0]
        w = [(m, harmonic_basis(n, m).mix @ c) for m, c in live]

        weights = dict(w)

        def part(s):
            out = np.zeros(s.stop - s.start)
            for m, P in _zonal_rows(X[s], n, top):
                if m in weights:
                    out += P[:, :len(weights[m])] @ weights[m]
            return out

        vals = np.concatenate(map_chunks(part, len(X), 1024)) if len(X) else np.zeros(0)
        return vals[0] if single else vals

    def degree_energy(self):
        return np.array([float(c @ c) for c in self.coeffs])

    def energy(self):
        return float(self.degree_energy().sum())

    def scaled(self, factors, meta=None):
        """Multiply degree m by ``factors[m // 2]``."""
        coeffs = tuple(c * f for c, f in zip(self.coeffs, factors))
        return HarmonicExpansion(self.dimension, self.max_degree, coeffs, meta or {})

    def __add__(self, other):
        if self.dimension != other.dimension:
            raise ValueError("dimension mismatch")
        M = max(self.max_degree, other.max_degree)
        coeffs = []
        for m in range(0, M + 1, 2):
            a = self.coeffs[m // 2] if m <= self.max_degree else 0
            b = other.coeffs[m // 2] if m <= other.max_degree else 0
            coeffs.append(np.zeros(harmonic_dimension(self.dimension, m)) + a + b)
        return HarmonicExpansion(self.dimension, M, tuple(coeffs))


def _sample(values, grid):
    if callable(values):
        from ._parallel import evaluate_rows
        return evaluate_rows(values, grid.nodes)
    v = np.asarray(values, dtype=float)
    if v.shape != (len(grid),):
        raise ValueError("sample array does not match the grid")
    return v


def expand(values, grid, M):
    """Even harmonic expansion of a sphere function by grid quadrature.

    The odd part ``(f(x) - f(-x)) / 2`` is measured at antipodal node pairs.
    Its quadrature norm bounds every odd-degree projection, so it serves as
    the evenness test before odd degrees are discarded.
    """
    if M < 0 or M % 2:
        raise ValueError("M must be a nonnegative even integer")
    if grid.sphere_dim != grid.dimension:
        raise ValueError("expansions need a full-sphere grid")
    if grid.kind == "gauss" and 2 * M > grid.resolution:
        raise ValueError(f"grid resolution {grid.resolution} cannot resolve degree {M} projections")
    n = grid.dimension
    f = _sample(values, grid)
    odd = 0.5 * (f - f[grid.antipode])
    odd_norm = sqrt(float(tree_sum(grid.weights * odd * odd)))
    total = sqrt(float(tree_sum(grid.weights * f * f)))
    if odd_norm > 1e-6 * max(1.0, total):
        raise EvennessError(f"input is not even: odd part has norm {odd_norm:.3e}")
    even = f - odd
    wf = grid.weights * even
    degrees = range(0, M + 1, 2)

    def part(s):
        return [P[:, :pole_count(n, m)].T @ wf[s] for m, P in _zonal_rows(grid.nodes[s], n, M)]

    parts = map_chunks(part, len(grid), 1024)
    coeffs = [harmonic_basis(n, m).mix.T @ tree_sum(np.array([p[i] for p in parts]))
              for i, m in enumerate(degrees)]
    meta = {"odd_norm": odd_norm, "l2_norm": total}
    if odd_norm > 1e-8 * max(1.0, total):
        meta["evenness_warning"] = f"odd part {odd_norm:.3e} exceeds 1e-8"
    return HarmonicExpansion(n, M, tuple(coeffs), meta)


def radon_transform(f, xi, resolution=32, kind="gauss"):
    """Integral of ``f`` over the great subsphere orthogonal to ``xi``."""
    grid = great_subsphere_grid(orthonormal_complement(xi), resolution, kind)
    return integrate_on_grid(grid, f)


def positive_filter(n, M):
    """Degree weights of a nonnegative zonal smoothing kernel of degree M.

    The kernel is ``G(t)^2`` with ``G = sum_{j <= M/2} N(n, j) P_j``, so its
    spherical convolution maps nonnegative functions to nonnegative functions.
    Returned weights are normalized to 1 at degree 0 and listed for even
    degrees only.
    """
    t, wt = roots_gegenbauer(M + 2, (n - 2) / 2)
    P = gegenbauer_table(n, M, t)
    G = sum(harmonic_dimension(n, j) * P[j] for j in range(M // 2 + 1))
    K = G * G
    mu = P @ (wt * K)
    return mu[0::2] / mu[0]


@dataclass(frozen=True)
class FourierOnSphere:
    """Sphere restriction of the transform of a homogeneous extension."""

    expansion: HarmonicExpansion
    source_degree: float
    min_value: float
    argmin: np.ndarray
    raw_min_value: float
    tol_pd: float
    summation: str
    warnings: tuple = ()

    @property
    def is_positive_definite(self):
        return self.min_value >= -self.tol_pd

    def evaluate(self, X, smoothed=False):
        if smoothed:
            sigma = positive_filter(self.expansion.dimension, self.expansion.max_degree)
            return self.expansion.scaled(sigma).evaluate(X)
        return self.expansion.evaluate(X)


def _refine_min(expansion, x0):
    """Local minimization over the sphere from a starting node."""
    frame = orthonormal_complement(x0)

    def obj(v):
        y = x0 + v @ frame.basis
        return float(expansion.evaluate(y / np.linalg.norm(y)))

    res = minimize(obj, np.zeros(len(frame.basis)), method="Nelder-Mead",
                   options={"xatol": 1e-7, "fatol": 1e-12, "maxiter": 400})
    y = x0 + res.x @ frame.basis
    return y / np.linalg.norm(y), float(res.fun)


def fourier_on_sphere(f, n, source_degree, grid, M=None, eval_grid=None, summation="fejer",
                      refine=True):
    """Transform of the homogeneous extension of an even sphere function.

    The extension ``f(x/|x|) |x|^source_degree`` is transformed degreewise by
    :func:`fourier_multiplier`.  The sign test runs on a positivity-preserving
    summation of the truncated series (``summation="fejer"``), which keeps
    transforms of positive definite kernels nonnegative at every degree;
    ``summation="none"`` tests the raw truncation instead.  Both minima are
    recorded.
    """
    if grid.dimension != n:
        raise ValueError("grid dimension does not match n")
    M = default_degree(n) if M is None else M
    p = _order_of(source_degree, n)
    base = expand(f, grid, M)
    lam = [fourier_multiplier(n, p, m) for m in base.degrees]
    hat = base.scaled(lam, meta=dict(base.meta))
    notes = []
    energy = hat.degree_energy()
    if energy.sum() > 0 and energy[-1] > TRUNCATION_SHARE * energy.sum():
        notes.append({"warning": "truncation", "degree": M,
                      "top_degree_share": float(energy[-1] / energy.sum())})
    ev = grid if eval_grid is None else eval_grid
    raw = hat.evaluate(ev.nodes)
    if summation == "fejer":
        test = hat.scaled(positive_filter(n, M))
    elif summation == "none":
        test = hat
    else:
        raise ValueError(f"unknown summation {summation!r}")
    vals = raw if test is hat else test.evaluate(ev.nodes)
    i = int(np.argmin(vals))
    argmin, vmin = ev.nodes[i].copy(), float(vals[i])
    if refine:
        y, v = _refine_min(test, argmin)
        if v < vmin:
            argmin, vmin = y, v
    tol = PD_RELATIVE_TOL * abs(float(hat.coeffs[0][0]))
    return FourierOnSphere(hat, source_degree, vmin, argmin, float(raw.min()), tol,
                           summation, tuple(notes))


def radon_inverse(values, grid, M):
    """Expansion g whose Radon transform reproduces ``values`` up to degree M."""
    n = grid.dimension
    base = expand(values, grid, M)
    c = [radon_multiplier(n, m) for m in base.degrees]
    c0 = abs(c[0])
    for m, cm in zip(base.degrees, c):
        if abs(cm) < 1e-10 * c0:
            raise NumericalFailure(f"Radon multiplier at degree {m} is too small to invert")
    g = base.scaled([1.0 / cm for cm in c])
    f = _sample(values, grid)
    resid = float(np.abs(base.evaluate(grid.nodes) - f).max())
    meta = dict(base.meta)
    meta["residual"] = resid
    return HarmonicExpansion(g.dimension, g.max_degree, g.coeffs, meta)


def zonal_projections(values, grid, points, M):
    """Degree-m components of a sampled function evaluated at ``points``.

    Returns an array of shape (M//2 + 1, len(points)) via the reproducing
    kernel ``N(n,m)/|S^{n-1}| P_m(x . y)``; no basis is formed.
    """
    n = grid.dimension
    f = _sample(values, grid)
    wf = grid.weights * f
    points = np.atleast_2d(np.asarray(points, dtype=float))
    area = sphere_area(n)
    scale = np.array([harmonic_dimension(n, m) / area for m in range(0, M + 1, 2)])

    def part(s):
        P = gegenbauer_table(n, M, np.clip(grid.nodes[s] @ points.T, -1, 1))[0::2]
        return np.einsum("k,mkp->mp", wf[s], P)

    parts = map_chunks(part, len(grid), 16384)
    return scale[:, None] * tree_sum(np.array(parts))


def fourier_at(values, grid, source_degree, points, M):
    """Truncated transform evaluated directly at ``points`` (zonal route)."""
    n = grid.dimension
    p = _order_of(source_degree, n)
    comps = zonal_projections(values, grid, points, M)
    lam = np.array([fourier_multiplier(n, p, m) for m in range(0, M + 1, 2)])
    return lam @ comps, lam[:, None] * comps
