"""Busemann-Petty comparisons for general measures.

Affirmative checks (kernel positivity, section and volume comparisons), the
perturbative counterexample builder, and section-integral bounds.
"""
import itertools
from dataclasses import dataclass, field
from math import lgamma, exp, sqrt

import numpy as np
from scipy.optimize import linprog, minimize

from ._parallel import evaluate_rows, map_chunks, tree_sum
from .bodies import ConvexityReport, StarBody, convexity_check
from .errors import NumericalFailure, PreconditionRefusal
from .harmonics import (default_degree, fourier_multiplier, fourier_on_sphere, gegenbauer_table,
                        radon_multiplier)
from .measures import (body_measure, body_power, default_measure_grid, lebesgue,
                       radial_integral, radial_solve, ratio_monotone_check,
                       section_measure_direct, subspace_section_integral)
from .sphere import (build_sphere_grid, great_subsphere_grid, orthonormal_complement,
                     random_directions, random_subspace_frame)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


# ------------------------------------------------------- elementary inequality

@dataclass(frozen=True)
class InequalityResidual:
    residual: float
    lhs: float
    rhs: float
    monotone_violation: float
    precondition_ok: bool


def _panel_integral(func, lo, hi, panels=64):
    """Composite Gauss-Legendre integral of a vectorized function on [lo, hi].

    The first panel is split geometrically toward ``lo`` so that algebraic
    endpoint singularities such as t^(1/2) at t = 0 are resolved.
    """
    if hi == lo:
        return 0.0
    h = (hi - lo) / panels
    edges = np.concatenate([[lo], lo + h * 2.0 ** np.arange(-40, 0),
                            np.linspace(lo, hi, panels + 1)[1:]])
    half = np.diff(edges) / 2
    t = (edges[:-1, None] + half[:, None] * (_GL_NODES + 1)).ravel()
    w = (half[:, None] * _GL_WEIGHTS).ravel()
    return float(tree_sum(w * func(t)))


def elementary_inequality_residual(alpha, beta, a, b, n, samples=4096, panels=64):
    """Right side minus left side of the elementary radial inequality.

    With ``c = a alpha(a) / beta(a)`` the two sides are
    ``int_0^a t^(n-1) alpha - c int_0^a t^(n-2) beta`` and the same with the
    upper limit ``b``.  Their difference is evaluated in the form
    ``int_a^b t^(n-2) beta(t) (t alpha(t)/beta(t) - c) dt`` whose integrand
    has a fixed sign when ``t alpha / beta`` increases.

    Parameters
    ----------
    alpha, beta : callable
        Vectorized nonnegative functions on (0, max(a, b)].
    a, b : float
        Positive limits.
    n : int
    """
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    top = max(a, b)
    ratio = lambda t: t * alpha(t) / beta(t)
    c = float(ratio(np.array([a]))[0])
    lhs = (_panel_integral(lambda t: t ** (n - 1) * alpha(t), 0.0, a, panels)
           - c * _panel_integral(lambda t: t ** (n - 2) * beta(t), 0.0, a, panels))
    rhs = (_panel_integral(lambda t: t ** (n - 1) * alpha(t), 0.0, b, panels)
           - c * _panel_integral(lambda t: t ** (n - 2) * beta(t), 0.0, b, panels))
    lo, hi = min(a, b), max(a, b)
    sign = 1.0 if b >= a else -1.0
    core = _panel_integral(lambda t: t ** (n - 2) * beta(t) * (ratio(t) - c), lo, hi, panels)
    residual = sign * core
    ts = np.unique(np.concatenate([np.geomspace(top * 1e-6, top, samples // 2),
                                   np.linspace(top / samples, top, samples // 2), [a, b]]))
    r = ratio(ts)
    worst = float(np.min(np.diff(r)))
    ok = worst >= -1e-12 * max(1.0, float(np.max(np.abs(r))))
    return InequalityResidual(float(residual), float(lhs), float(rhs), worst, bool(ok))


# ---------------------------------------------------------------- kernels

def default_kernel_grid(n, M):
    return build_sphere_grid(n, 2 * M + 6, "gauss")


def kernel_values(K, f_n, f_prev, X):
    """rho_K f_n(rho_K theta) / f_{n-1}(rho_K theta) at unit vectors X."""
    X = np.atleast_2d(X)
    rho = K.radial(X)
    P = rho[:, None] * X
    den = f_prev.eval(P)
    bad = np.flatnonzero(~(den > 0))
    if len(bad):
        raise PreconditionRefusal(f"f_(n-1) vanishes on the boundary at theta={X[bad[0]].tolist()}")
    return rho * f_n.eval(P) / den


@dataclass(frozen=True)
class KernelFunction:
    """Degree -1 kernel on the sphere and the restriction of its transform."""

    grid: object
    values: np.ndarray
    fourier: object

    @property
    def is_positive_definite(self):
        return self.fourier.is_positive_definite

    def verdict(self):
        fo = self.fourier
        return {"positive_definite": bool(fo.is_positive_definite), "min_value": fo.min_value,
                "raw_min_value": fo.raw_min_value, "argmin": fo.argmin.tolist(), "tol_pd": fo.tol_pd,
                "max_degree": fo.expansion.max_degree, "summation": fo.summation,
                "warnings": list(fo.warnings)}


def kernel(K, f_n, f_prev, grid=None, M=None, summation="fejer"):
    """Kernel of the affirmative criterion with its positive-definiteness test."""
    n = K.dimension
    M = default_degree(n) if M is None else M
    grid = default_kernel_grid(n, M) if grid is None else grid
    vals = evaluate_rows(lambda X: kernel_values(K, f_n, f_prev, X), grid.nodes)
    fo = fourier_on_sphere(vals, n, -1, grid, M, summation=summation)
    return KernelFunction(grid, vals, fo)


def body_kernel(K, grid=None, M=None):
    """Test of whether 1/||x||_K is positive definite."""
    one = lebesgue(K.dimension)
    return kernel(K, one, one, grid, M)


# ------------------------------------------------------------ verification

@dataclass(frozen=True)
class BPInstance:
    K: StarBody
    L: StarBody
    f_n: object
    f_prev: object
    xi_grid: object = None
    measure_grid: object = None
    section_resolution: int = None
    kernel_degree: int = None
    section_kind: str = None

    def __post_init__(self):
        dims = {self.K.dimension, self.L.dimension, self.f_n.dimension, self.f_prev.dimension}
        if len(dims) != 1:
            raise ValueError("K, L, f_n and f_(n-1) must share a dimension")

    @property
    def dimension(self):
        return self.K.dimension


@dataclass(frozen=True)
class BPGMReport:
    hypothesis_margin: float
    margin_direction: np.ndarray
    conclusion_gap: float
    measure_K: float
    measure_L: float
    ratio_violation: float
    kernel_positive_definite: bool
    kernel_min_value: float
    meta: dict = field(default_factory=dict, compare=False)

    def as_dict(self):
        return {"hypothesis_margin": self.hypothesis_margin,
                "margin_direction": self.margin_direction.tolist(),
                "conclusion_gap": self.conclusion_gap, "measure_K": self.measure_K,
                "measure_L": self.measure_L, "ratio_violation": self.ratio_violation,
                "kernel_positive_definite": self.kernel_positive_definite,
                "kernel_min_value": self.kernel_min_value, **self.meta}


def section_margins(K, L, density, xis, resolution=None, kind=None):
    """mu(L cap xi-perp) - mu(K cap xi-perp) for each row of xis."""
    xis = np.atleast_2d(xis)
    out = map_chunks(lambda s: [section_measure_direct(L, density, x, resolution, kind)
                                - section_measure_direct(K, density, x, resolution, kind) for x in xis[s]],
                     len(xis), 4)
    return np.array([v for part in out for v in part])


def verify_bpgm(instance, with_kernel=True):
    """Check both sides of the comparison and the hypotheses of the affirmative case."""
    K, L = instance.K, instance.L
    n = instance.dimension
    xi_grid = instance.xi_grid or build_sphere_grid(n, 8, "gauss")
    xis = xi_grid.nodes[: len(xi_grid) // 2]
    margins = section_margins(K, L, instance.f_prev, xis, instance.section_resolution,
                              instance.section_kind)
    j = int(np.argmin(margins))
    grid = instance.measure_grid or default_measure_grid(n)
    mu_K = body_measure(K, instance.f_n, grid)
    mu_L = body_measure(L, instance.f_n, grid)
    ratio = ratio_monotone_check(instance.f_n, instance.f_prev, build_sphere_grid(n, 6, "gauss"),
                                 np.linspace(0.02, 1.0, 50) * max(np.max(K.radial(grid.nodes)),
                                                                  np.max(L.radial(grid.nodes))))[0]
    if with_kernel:
        kern = kernel(K, instance.f_n, instance.f_prev, M=instance.kernel_degree)
        pd_flag, kmin = kern.is_positive_definite, kern.fourier.min_value
    else:
        pd_flag, kmin = None, float("nan")
    return BPGMReport(float(margins[j]), xis[j].copy(), mu_L - mu_K, mu_K, mu_L, ratio, pd_flag, kmin,
                      {"num_directions": int(len(xis))})


# ------------------------------------------------------ counterexample design

def _signed_permutations(k):
    for perm in itertools.permutations(range(k)):
        for signs in itertools.product((1.0, -1.0), repeat=k):
            yield perm, np.array(signs)


def _canonical(v):
    """Representative of {v, -v} with a deterministic sign."""
    i = int(np.flatnonzero(np.abs(v) > 1e-12)[0])
    return v if v[i] > 0 else -v


def _orbit(v, frame, group):
    """Images of v under signed permutations of the frame's complement coordinates."""
    c = frame @ v
    seen = {}
    for perm, signs in group:
        w = c.copy()
        w[1:] = c[1:][list(perm)] * signs
        x = _canonical(frame.T @ w)
        key = tuple(np.round(x, 11))
        seen.setdefault(key, x)
    return np.array([seen[k] for k in sorted(seen)])


class ZonalSum:
    """Function sum_p sum_m coef[p, m] P_m(theta . y_p) over poles y_p and even m."""

    def __init__(self, n, M, poles, coef):
        self.n, self.M = n, M
        self.poles = np.asarray(poles, dtype=float)
        self.coef = np.asarray(coef, dtype=float)

    def _chunk(self, T, reducer):
        n, M = self.n, self.M
        lam = (n - 2) / 2
        t = np.clip(T @ self.poles.T, -1.0, 1.0)
        prev, cur = np.ones_like(t), t
        acc = reducer(prev, 0)
        for m in range(1, M):
            prev, cur = cur, ((2 * m + 2 * lam) * t * cur - m * prev) / (m + 2 * lam)
            if (m + 1) % 2 == 0:
                acc = acc + reducer(cur, (m + 1) // 2)
        return acc

    def __call__(self, T):
        T = np.atleast_2d(T)
        return evaluate_rows(lambda X: self._chunk(X, lambda P, j: P @ self.coef[:, j]), T, 1024)


def _group_features(n, M, T, poles, groups):
    """Columns sum_{y in orbit} P_m(theta . y) for every orbit and even degree."""
    ndeg = M // 2 + 1
    agg = np.zeros((len(poles), len(groups)))
    for g, idx in enumerate(groups):
        agg[idx, g] = 1.0
    z = ZonalSum(n, M, poles, np.zeros((len(poles), ndeg)))

    def chunk(X):
        feats = np.zeros((len(X), len(groups), ndeg))

        def reducer(P, j):
            feats[:, :, j] = P @ agg
            return 0.0

        z._chunk(X, reducer)
        return feats.reshape(len(X), -1)

    parts = map_chunks(lambda s: chunk(T[s]), len(T), 1024)
    return np.vstack(parts)


@dataclass
class PerturbationDesign:
    """Nonnegative-transform perturbation found by linear programming."""

    g: ZonalSum
    center: np.ndarray
    generators: np.ndarray
    num_poles: int
    pairing: float
    hessian_margin: float
    lp_status: str
    meta: dict = field(default_factory=dict)


def _stabilizer_frame(omega, symmetric):
    """Frame (omega first) and the signed-permutation group fixing +-omega, if any."""
    n = len(omega)
    axis = int(np.argmax(np.abs(omega)))
    if symmetric and abs(abs(omega[axis]) - 1.0) < 1e-12:
        rest = [i for i in range(n) if i != axis]
        frame = np.eye(n)[[axis] + rest]
        return frame, list(_signed_permutations(n - 1))
    frame = np.vstack([omega, orthonormal_complement(omega).basis])
    return frame, [(tuple(range(n - 1)), np.ones(n - 1))]


DESIGN_ANGLES = (10.0, 20.0, 30.0, 45.0, 70.0, 90.0)


def design_perturbation(L, f_n, f_prev, omega, M=16, hessian_margin=0.02, seed=0,
                        pairing_resolution=None, samples=12000, radon_reserve=1e-3):
    """Choose g with a nonnegative transform, |g| <= 1 and a convexity reserve.

    g is a sum of zonal harmonics of degree <= M whose poles are orbits of
    ``cos(a) omega + sin(a) d`` under the symmetries of L fixing omega.  The
    linear program minimizes the first-order volume change
    ``int rho_L f_n / f_{n-1} g`` subject to

    * nonnegativity of the degree -1 transform companion of g at samples;
    * ``|g| <= 1`` at the same samples;
    * along directions where the boundary of L is flat, the perturbation of
      the Minkowski functional ``psi`` satisfies ``psi'' + psi >= margin``.

    Afterwards a constant is added so that the Radon transform of g is at
    least ``radon_reserve`` times its maximum everywhere, not only at samples.
    """
    n = L.dimension
    rng = np.random.Generator(np.random.Philox(key=[int(seed), 7]))
    frame, group = _stabilizer_frame(omega, getattr(L, "symmetric", False))
    comp = frame[1:]
    dirs = [comp[:k].sum(axis=0) / sqrt(k) for k in range(1, min(4, n - 1) + 1)]
    gens = [frame[0]]
    for a in np.deg2rad(DESIGN_ANGLES):
        for d in dirs:
            gens.append(np.cos(a) * frame[0] + np.sin(a) * d)
    orbits = [_orbit(v, frame, group) for v in gens]
    poles = np.vstack(orbits)
    groups, start = [], 0
    for o in orbits:
        groups.append(np.arange(start, start + len(o)))
        start += len(o)
    ndeg = M // 2 + 1
    lam1 = np.array([fourier_multiplier(n, 1, m) for m in range(0, M + 1, 2)])

    # first-order volume change per variable
    pres = pairing_resolution or max(2 * M + 8, 40)
    pg = build_sphere_grid(n, pres, "gauss")
    kvals = evaluate_rows(lambda X: kernel_values(L, f_n, f_prev, X), pg.nodes)
    proj = np.zeros(len(gens) * ndeg)
    reps = np.array([o[0] for o in orbits])
    invariant = len(group) > 1 and _density_invariant(f_n) and _density_invariant(f_prev)
    if invariant:
        # the kernel is invariant under the group, so one pole per orbit suffices
        wk = pg.weights * kvals
        acc = map_chunks(lambda s: np.einsum("k,mkp->mp", wk[s], gegenbauer_table(
            n, M, np.clip(pg.nodes[s] @ reps.T, -1, 1))[0::2]), len(pg), 16384)
        acc = tree_sum(np.array(acc))
        sizes = np.array([len(o) for o in orbits])
        proj = (acc * sizes[None, :]).T.reshape(-1)
    else:
        F = _group_features(n, M, pg.nodes, poles, groups)
        proj = F.T @ (pg.weights * kvals)

    S = [random_directions(n, samples, rng)]
    near = frame[0] + 0.3 * rng.standard_normal((samples // 2, n))
    S.append(near / np.linalg.norm(near, axis=1, keepdims=True))
    S.append(frame)
    S = np.vstack(S)
    G = _group_features(n, M, S, poles, groups)
    H = G / np.tile(lam1, len(gens))

    rows = []
    flats = L.flat_directions(2000 * n, rng) if hasattr(L, "flat_directions") else None
    if flats is not None:
        T0, U0 = flats
        step = 2e-3

        def q(T):
            rho = L.radial(T)
            return 1.0 / (rho ** n * f_prev.eval(rho[:, None] * T))

        vals = []
        for sgn in (-1.0, 0.0, 1.0):
            T = np.cos(sgn * step) * T0 + np.sin(sgn * step) * U0
            vals.append(_group_features(n, M, T, poles, groups) * q(T)[:, None])
        rows.append((vals[0] - 2 * vals[1] + vals[2]) / step ** 2 + vals[1])
    C = np.vstack(rows) if rows else np.zeros((0, G.shape[1]))

    # well-conditioned variables: the sampled values of g
    _, sv, Vt = np.linalg.svd(G, full_matrices=False)
    r = int(np.sum(sv > 1e-9 * sv[0]))
    V = Vt[:r].T / sv[:r]
    Gv, Hv, Cv, pv = G @ V, H @ V, C @ V, proj @ V
    A_ub = np.vstack([-Hv, -Cv, Gv, -Gv])
    b_ub = np.concatenate([np.zeros(len(Hv)), np.full(len(Cv), -hessian_margin), np.ones(2 * len(Gv))])
    res = linprog(pv, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * r, method="highs")
    if res.status != 0:
        raise NumericalFailure(f"perturbation design failed: {res.message}")
    x = V @ res.x
    coef = np.vstack([np.tile(x[j * ndeg:(j + 1) * ndeg], (len(o), 1)) for j, o in enumerate(orbits)])
    g = ZonalSum(n, M, poles, coef)

    # nonnegativity was only imposed at samples and the optimum sits on that
    # boundary, so the transform dips between them; a constant lifts it
    floor, top = _radon_extremes(g, S, rng)
    shift = max(0.0, radon_reserve * top - floor) / radon_multiplier(n, 0)
    g.coef[:, 0] += shift / len(poles)
    x.reshape(len(gens), ndeg)[:, 0] += shift / len(poles)
    pairing = float(-res.fun) - shift * float(tree_sum(pg.weights * kvals))
    g.degree_coef = x.reshape(len(gens), ndeg)
    g.group_index = groups
    return PerturbationDesign(g, frame[0].copy(), np.array(gens), len(poles), pairing,
                              hessian_margin, res.message,
                              {"rank": r, "num_samples": int(len(S)), "num_hessian_rows": int(len(C)),
                               "max_degree": M, "angles_deg": list(DESIGN_ANGLES),
                               "radon_floor_before_shift": floor, "radon_max": top,
                               "constant_shift": shift, "radon_reserve": radon_reserve})


def _radon_extremes(g, samples, rng, probes=40000, starts=32):
    """Minimum (locally refined) and maximum of the Radon transform of g."""
    n = g.n
    X = np.vstack([samples, random_directions(n, probes, rng)])
    vals = zonal_radon(g, X)
    top = float(vals.max())

    def obj(y):
        return float(zonal_radon(g, y[None, :] / np.linalg.norm(y))[0])

    best = float(vals.min())
    for i in np.argsort(vals)[:starts]:
        r = minimize(obj, X[i], method="Nelder-Mead",
                     options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": 4000})
        best = min(best, float(r.fun))
    return best, top


def _density_invariant(f):
    """True when the density is invariant under signed coordinate permutations."""
    if f.kind == "product":
        return all(_density_invariant(x) for x in f.factors)
    if f.kind == "body_power":
        return bool(getattr(f.body, "symmetric", False))
    return True


def zonal_radon(g, xis):
    """Radon transform of a ZonalSum at directions, by the Funk-Hecke multipliers."""
    n, M = g.n, g.M
    c = np.array([radon_multiplier(n, m) for m in range(0, M + 1, 2)])
    scaled = ZonalSum(n, M, g.poles, g.coef * c[None, :])
    return scaled(xis)


# -------------------------------------------------------- perturbed bodies

class PerturbedBody(StarBody):
    """Body D with A_D = A_L - eps g along every ray."""

    def __init__(self, L, f_prev, g, eps, flat_directions=None):
        self.L, self.f_prev, self.g, self.eps = L, f_prev, g, float(eps)
        n = L.dimension
        super().__init__(n, self._radial_of, f"D[{L.label}, eps={eps:.6g}]",
                         {"kind": "perturbed", "n": n, "base": L.spec, "epsilon": float(eps)},
                         flat_directions=flat_directions)

    def radial_given(self, T, gvals):
        n = self.dimension
        target = radial_integral(self.f_prev, T, self.L.radial(T), n - 2) - self.eps * gvals
        if np.any(target <= 0):
            raise NumericalFailure("perturbation exceeds the section transform; epsilon too large")
        return radial_solve(self.f_prev, T, target, n - 2)

    def _radial_of(self, T):
        return self.radial_given(T, self.g(T))


@dataclass
class CounterexampleResult:
    D: StarBody
    epsilon: float
    hypothesis_margin: float
    conclusion_gap: float
    convexity: ConvexityReport
    bump_support: dict
    success: bool
    measure_L: float
    measure_D: float
    meta: dict = field(default_factory=dict)

    def report(self, radial_resolution=16, radial_degree=8):
        """JSON-ready summary including radial samples of D on a Gauss grid."""
        n = self.D.dimension
        grid = build_sphere_grid(n, radial_resolution, "gauss")
        vals = self.D.radial(grid.nodes)
        conv = self.convexity
        return {
            "success": bool(self.success),
            "epsilon": self.epsilon,
            "hypothesis_margin": self.hypothesis_margin,
            "conclusion_gap": self.conclusion_gap,
            "relative_gap": self.conclusion_gap / self.measure_L,
            "measure_L": self.measure_L,
            "measure_D": self.measure_D,
            "convexity": {"is_convex": conv.is_convex, "worst_violation": conv.worst_violation,
                          "num_pairs": conv.num_pairs, "tol": conv.tol},
            "bump_support": self.bump_support,
            "curvature_certified": False,
            **self.meta,
            "radial_samples": {"kind": "samples", "n": n, "grid_kind": "gauss",
                               "resolution": radial_resolution, "max_degree": radial_degree,
                               "values": vals.tolist()},
        }


def construct_counterexample(L, f_n, f_prev, grid=None, M=16, eps0=None, seed=0, kernel_degree=None,
                             num_pairs=100000, xi_resolution=8, section_resolution=None,
                             measure_grid=None, hessian_margin=0.02):
    """Perturb L into a body D with smaller sections but larger measure.

    Refuses with :class:`PreconditionRefusal` when the kernel of L is
    positive definite, since no counterexample exists then.
    """
    n = L.dimension
    kern = kernel(L, f_n, f_prev, grid, kernel_degree)
    if kern.is_positive_definite:
        raise PreconditionRefusal("kernel is positive definite: the affirmative case applies, "
                                  "no counterexample exists")
    fo = kern.fourier
    omega = fo.argmin.copy()
    snapped = False
    if getattr(L, "symmetric", False):
        axis = np.zeros(n)
        i = int(np.argmax(np.abs(omega)))
        axis[i] = 1.0
        if float(fo.evaluate(axis[None, :], smoothed=True)[0]) <= 0.5 * fo.min_value:
            omega, snapped = axis, True
    design = design_perturbation(L, f_n, f_prev, omega, M, hessian_margin, seed)
    g = design.g
    if design.pairing <= 0:
        raise NumericalFailure("no perturbation lowers the sections while raising the measure")

    # fixed quadrature data; g does not depend on epsilon
    mgrid = measure_grid or default_measure_grid(n)
    g_m = g(mgrid.nodes)
    mu_L = body_measure(L, f_n, mgrid)
    xi_grid = build_sphere_grid(n, xi_resolution, "gauss")
    xis = xi_grid.nodes[: len(xi_grid) // 2]
    # sec_L - sec_D integrates eps * g, a polynomial of degree <= M, so a
    # polynomial-exact subsphere rule of resolution M settles the sign
    res = section_resolution or M
    sub = [great_subsphere_grid(orthonormal_complement(x), res) for x in xis]
    sub_nodes = np.vstack([s.nodes for s in sub])
    bounds = np.cumsum([0] + [len(s) for s in sub])
    g_s = g(sub_nodes)
    A_L_s = radial_integral(f_prev, sub_nodes, L.radial(sub_nodes), n - 2)
    sec_L = np.array([tree_sum(s.weights * A_L_s[bounds[i]:bounds[i + 1]]) for i, s in enumerate(sub)])
    radon_g = zonal_radon(g, xis)
    A_L_m = radial_integral(f_prev, mgrid.nodes, L.radial(mgrid.nodes), n - 2)

    eps = 0.1 * float(A_L_m.min()) if eps0 is None else float(eps0)
    start = eps
    attempts = []
    result = None
    support = {"center": design.center.tolist(), "snapped_to_axis": snapped,
               "sublevel_threshold": 0.5 * fo.min_value, "num_poles": design.num_poles,
               "num_generators": int(len(design.generators)), "max_degree": M,
               "pairing": design.pairing, "hessian_margin": hessian_margin,
               "kernel_min_value": fo.min_value, "kernel_raw_min_value": fo.raw_min_value}
    flats = L._flat if getattr(L, "_flat", None) is not None else None
    while eps >= 1e-8 * start:
        D = PerturbedBody(L, f_prev, g, eps, flats)
        note = {"epsilon": eps}
        if np.any(A_L_m - eps * g_m <= 0) or np.any(A_L_s - eps * g_s <= 0):
            note["status"] = "nonpositive radius"
            attempts.append(note)
            eps /= 2
            continue
        conv = convexity_check(D, num_pairs=num_pairs, tol=1e-9, seed=seed)
        note["worst_violation"] = conv.worst_violation
        if not conv.is_convex:
            note["status"] = "not convex"
            attempts.append(note)
            eps /= 2
            continue
        rho_s = D.radial_given(sub_nodes, g_s)
        A_D_s = radial_integral(f_prev, sub_nodes, rho_s, n - 2)
        sec_D = np.array([tree_sum(s.weights * A_D_s[bounds[i]:bounds[i + 1]])
                          for i, s in enumerate(sub)])
        margins = sec_L - sec_D
        j = int(np.argmin(margins))
        margin = float(margins[j])
        note["hypothesis_margin"] = margin
        if margin < -1e-9:
            note["status"] = "sections grew"
            attempts.append(note)
            eps /= 2
            continue
        rho_m = D.radial_given(mgrid.nodes, g_m)
        mu_D = float(tree_sum(mgrid.weights * radial_integral(f_n, mgrid.nodes, rho_m, n - 1)))
        gap = mu_D - mu_L
        ok = gap >= 1e-6 * mu_L
        note["conclusion_gap"] = gap
        note["status"] = "success" if ok else "gap below threshold"
        attempts.append(note)
        meta = {"attempts": attempts, "num_directions": int(len(xis)),
                "margin_direction": xis[j].tolist(),
                "margin_first_order": float(eps * radon_g.min()),
                "gap_first_order": float(eps * design.pairing),
                "design": design.meta, "lp_status": design.lp_status}
        result = CounterexampleResult(D, eps, margin, gap, conv, support, bool(ok), mu_L, mu_D, meta)
        break
    if result is None:
        raise NumericalFailure(f"epsilon underflow without success after {len(attempts)} attempts: "
                               f"{attempts[-1] if attempts else {}}")
    return result


# ------------------------------------------------------------ section bounds

@dataclass(frozen=True)
class SectionBound:
    direction: np.ndarray
    lhs: float
    rhs: float
    slack: float
    kernel_positive_definite: bool
    meta: dict = field(default_factory=dict, compare=False)

    def as_dict(self):
        return {"direction": self.direction.tolist(), "lhs": self.lhs, "rhs": self.rhs,
                "slack": self.slack, "kernel_positive_definite": self.kernel_positive_definite,
                **self.meta}


def section_integral_lower_bound(K, Mbody, xi_grid=None, resolution=None, check_kernel=True):
    """Best direction for the lower bound on int_{K cap xi-perp} ||x||_M.

    The bound compares the section integral with
    ``(n-1)/n * Vol_{n-1}(M cap xi-perp) / Vol_n(M) * Vol_n(K)`` and reports
    the largest excess over the direction grid.
    """
    n = K.dimension
    xi_grid = xi_grid or build_sphere_grid(n, 8, "gauss")
    xis = xi_grid.nodes[: len(xi_grid) // 2]
    weight = body_power(Mbody, 1.0)
    one = lebesgue(n)
    vol_K = body_measure(K, one)
    vol_M = body_measure(Mbody, one)
    lhs = np.array([section_measure_direct(K, weight, x, resolution) for x in xis])
    sec_M = np.array([section_measure_direct(Mbody, one, x, resolution) for x in xis])
    rhs = (n - 1) / n * sec_M / vol_M * vol_K
    diff = lhs - rhs
    j = int(np.argmax(diff))
    pd = body_kernel(Mbody).is_positive_definite if check_kernel else None
    meta = {"num_directions": int(len(xis)), "volume_K": vol_K, "volume_M": vol_M}
    if pd is False:
        meta["warning"] = "1/||x||_M is not positive definite; the bound need not hold"
    return SectionBound(xis[j].copy(), float(lhs[j]), float(rhs[j]), float(diff[j]), pd, meta)


def iterated_section_comparison(K, L, Mbody, k, subspace_samples=64, seed=0, resolution=None,
                                tol=1e-9):
    """Compare int_{K cap H} ||x||_M^i with the same over L for H in G(n, n-i), i = k..0.

    Stage k is the hypothesis; stages below it are the successive conclusions
    of the iteration, ending with the volumes.  Each stage also checks that
    its ratio kernel equals the radial function of M.
    """
    n = K.dimension
    if not 1 <= k < n - 1:
        raise ValueError("k must satisfy 1 <= k < n - 1")
    rng = np.random.Generator(np.random.Philox(key=[int(seed), 11]))
    probe = random_directions(n, 512, rng)
    stages = []
    for i in range(k, 0, -1):
        weight = body_power(Mbody, float(i))
        diffs = []
        for _ in range(subspace_samples):
            frame = random_subspace_frame(n, i, rng)
            a = subspace_section_integral(K, weight, frame, resolution)
            b = subspace_section_integral(L, weight, frame, resolution)
            diffs.append((b - a, max(abs(a), abs(b))))
        d = np.array(diffs)
        rel = d[:, 0] / d[:, 1]
        # stage kernel inside (n-i+1)-dimensional subspaces: f_d = ||x||^(i-1), f_{d-1} = ||x||^i
        kvals = kernel_values(K, body_power(Mbody, float(i - 1)), body_power(Mbody, float(i)), probe)
        kerr = float(np.max(np.abs(kvals / Mbody.radial(probe) - 1)))
        stages.append({"power": i, "subspace_dim": n - i, "min_difference": float(d[:, 0].min()),
                       "min_relative_difference": float(rel.min()),
                       "holds": bool(np.all(d[:, 0] >= -tol * d[:, 1])), "kernel_identity_error": kerr})
    one = lebesgue(n)
    vol_K, vol_L = body_measure(K, one), body_measure(L, one)
    pd = body_kernel(Mbody).is_positive_definite
    hyp = stages[0]["holds"]
    return {"k": k, "subspace_samples": subspace_samples, "hypothesis_holds": hyp, "stages": stages,
            "volume_K": vol_K, "volume_L": vol_L, "volume_verdict": bool(vol_K <= vol_L * (1 + 1e-9)),
            "kernel_positive_definite": bool(pd),
            "note": "hypothesis read as K-sections against L-sections; verified on sampled subspaces"}


# ----------------------------------------------------------- l_p volumes

def lp_ball_volume(n, p):
    """Vol_n(B_p^n) = (2 Gamma(1 + 1/p))^n / Gamma(1 + n/p)."""
    if np.isinf(p):
        return 2.0 ** n
    return exp(n * np.log(2.0) + n * lgamma(1 + 1 / p) - lgamma(1 + n / p))


def lp_section_ratio(n, p):
    """Vol_{n-1}(B_p^{n-1}) / Vol_n(B_p^n)."""
    if np.isinf(p):
        return 0.5
    return exp(lgamma(1 + n / p) - np.log(2.0) - lgamma(1 + 1 / p) - lgamma(1 + (n - 1) / p))


def lp_ratio_table(ns=(3, 4, 5, 6), ps=(1.0, 1.5, 2.0, 4.0, np.inf)):
    """Rows (n, p, ratio, ratio / sqrt(n)) for reporting."""
    return [{"n": n, "p": "inf" if np.isinf(p) else p, "ratio": lp_section_ratio(n, p),
             "ratio_over_sqrt_n": lp_section_ratio(n, p) / sqrt(n)} for n in ns for p in ps]
