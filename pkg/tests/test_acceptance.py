"""Acceptance suite.

Every criterion prints one ``PASS``/``FAIL`` line (also repeated in the
pytest terminal summary).  Run with ``pytest tests/test_acceptance.py -v`` or
directly with ``python tests/test_acceptance.py``.
"""
import json
import math
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from sectio.bodies import ellipsoid, lp_ball, random_convex_body
from sectio.bpgm import (BPInstance, body_kernel, construct_counterexample,
                         elementary_inequality_residual, section_integral_lower_bound, verify_bpgm,
                         zonal_radon)
from sectio.cli import main as cli_main
from sectio.harmonics import HarmonicExpansion, fourier_on_sphere, harmonic_dimension, radon_transform
from sectio.measures import (body_measure, gaussian, lebesgue, lp_power, reconstruct_from_sections,
                             section_measure_fourier, section_measures_direct, section_profile)
from sectio.sphere import build_sphere_grid, integrate_on_grid, random_directions

RESULTS = {}


def record(k, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {k:2d}  {title}: {detail}"
    RESULTS[k] = line
    print(line, flush=True)
    assert ok, line


def lp_volume(n, p):
    return (2 * math.gamma(1 + 1 / p)) ** n / math.gamma(1 + n / p)


def random_expansion(n, M, rng, constant=0.0):
    coeffs = [rng.standard_normal(harmonic_dimension(n, m)) for m in range(0, M + 1, 2)]
    coeffs[0] = coeffs[0] + constant
    return HarmonicExpansion(n, M, tuple(coeffs))


# ---------------------------------------------------------------- 1. volumes

def test_criterion_01_volume_oracles():
    worst, slowest = 0.0, 0.0
    for n in (3, 4, 5):
        for p in (1, 2, 4):
            t = time.perf_counter()
            v = body_measure(lp_ball(n, p), lebesgue(n))
            slowest = max(slowest, time.perf_counter() - t)
            worst = max(worst, abs(v / lp_volume(n, p) - 1))
    record(1, "l_p ball volumes", worst <= 1e-4 and slowest <= 10,
           f"max rel err {worst:.2e} (<= 1e-4), slowest case {slowest:.2f}s (<= 10s)")


# ------------------------------------------------------ 2. route equivalence

def test_criterion_02_route_equivalence():
    t0 = time.perf_counter()
    worst, where = 0.0, ""
    for n in (3, 4, 5):
        rng = np.random.default_rng(100 + n)
        bodies = [lp_ball(n, 2), lp_ball(n, 1), lp_ball(n, 4), ellipsoid(np.linspace(0.7, 1.5, n))]
        densities = [lebesgue(n), gaussian(n), lp_power(n, 1, 1)]
        for body in bodies:
            for f in densities:
                X = random_directions(n, 20, rng)
                d = section_measures_direct(body, f, X)
                fo = section_measure_fourier(body, f, X)
                err = float(np.max(np.abs(fo - d) / np.abs(d)))
                if err > worst:
                    worst, where = err, f"{body.label}/{f.label}"
    total = time.perf_counter() - t0
    record(2, "direct vs Fourier sections", worst <= 1e-3 and total <= 300,
           f"36 pairs x 20 xi, max rel diff {worst:.2e} at {where} (<= 1e-3), {total:.0f}s (<= 300s)")


# --------------------------------------------- 3. Radon/Fourier and Parseval

def test_criterion_03_identities():
    pi = math.pi
    worst_radon = 0.0
    for n in (3, 4, 5):
        rng = np.random.default_rng(300 + n)
        grid = build_sphere_grid(n, 12)
        for _ in range(3):
            g = random_expansion(n, 6, rng, constant=2.0)
            fo = fourier_on_sphere(g.evaluate, n, -(n - 1), grid, M=6, refine=False)
            X = random_directions(n, 10, rng)
            direct = np.array([radon_transform(g.evaluate, x, 8) for x in X])
            err = np.abs(fo.evaluate(X) / pi - direct) / np.abs(direct)
            worst_radon = max(worst_radon, float(err.max()))
    worst_pars = 0.0
    pairs = 0
    for n, count in ((3, 17), (4, 17), (5, 16)):
        rng = np.random.default_rng(310 + n)
        grid = build_sphere_grid(n, 8)
        for _ in range(count):
            f = random_expansion(n, 4, rng, constant=10.0)
            g = random_expansion(n, 4, rng, constant=10.0)
            fh = fourier_on_sphere(f.evaluate, n, -1, grid, M=4, refine=False).expansion
            gh = fourier_on_sphere(g.evaluate, n, -(n - 1), grid, M=4, refine=False).expansion
            lhs = integrate_on_grid(grid, fh.evaluate(grid.nodes) * gh.evaluate(grid.nodes))
            rhs = (2 * pi) ** n * integrate_on_grid(grid, f.evaluate(grid.nodes) * g.evaluate(grid.nodes))
            worst_pars = max(worst_pars, abs(lhs / rhs - 1))
            pairs += 1
    ok = worst_radon <= 1e-6 and worst_pars <= 1e-6 and pairs == 50
    record(3, "Radon = Fourier/pi and spherical Parseval", ok,
           f"Radon route max rel err {worst_radon:.1e}, Parseval max rel err {worst_pars:.1e} "
           f"over {pairs} pairs (both <= 1e-6)")


# ----------------------------------------------- 4. positive definiteness

def test_criterion_04_pd_dichotomy(tmp_path, capsys):
    verdicts = {}
    for p in (1, 2, 4, 8, 32):
        cfg = tmp_path / f"pd{p}.json"
        cfg.write_text(json.dumps({"n": 5, "body": {"kind": "lp", "p": p}}))
        code = cli_main(["pdtest", "--config", str(cfg)])
        out = capsys.readouterr().out
        verdicts[p] = code == 0 and json.loads(out)["positive_definite"]
    rng = np.random.default_rng(404)
    n4 = [body_kernel(random_convex_body(4, rng)).is_positive_definite for _ in range(50)]
    ok = verdicts[1] and verdicts[2] and not any(verdicts[p] for p in (4, 8, 32)) and all(n4)
    shown = ", ".join(f"p={p}:{'PD' if v else 'not PD'}" for p, v in verdicts.items())
    record(4, "positive-definiteness dichotomy", ok,
           f"B_p^5 {shown}; n=4 random convex bodies PD {sum(n4)}/50")


# --------------------------------------------------- 5. counterexamples

def _check_counterexample(f):
    n = 5
    L = lp_ball(n, 4)
    res = construct_counterexample(L, f, f, seed=0)
    xi_grid = build_sphere_grid(n, 8, "gauss")
    inst = BPInstance(res.D, L, f, f, xi_grid=xi_grid, section_resolution=24, section_kind="gauss")
    rep = verify_bpgm(inst, with_kernel=False)
    dense = float((res.epsilon * zonal_radon(res.D.g, random_directions(n, 100000,
                                                                        np.random.default_rng(5)))).min())
    fine = build_sphere_grid(n, 32, "gauss")
    gap_fine = body_measure(res.D, f, fine) - body_measure(L, f, fine)
    conv = res.convexity
    ok = (res.success and conv.is_convex and conv.num_pairs >= 100000 and conv.tol == 1e-9
          and res.hypothesis_margin >= -1e-9 and rep.hypothesis_margin >= -1e-9
          and rep.meta["num_directions"] >= 500 and dense >= -1e-9
          and res.conclusion_gap >= 1e-6 * res.measure_L and gap_fine >= 1e-6 * res.measure_L)
    return ok, res, rep, dense, gap_fine


def test_criterion_05_counterexample():
    t0 = time.perf_counter()
    parts, ok_all = [], True
    for f in (lebesgue(5), gaussian(5)):
        ok, res, rep, dense, gap_fine = _check_counterexample(f)
        ok_all &= ok
        parts.append(f"{f.label}: success={res.success} eps={res.epsilon:.2e} "
                     f"margin={res.hypothesis_margin:.2e}/{rep.hypothesis_margin:.2e} "
                     f"({rep.meta['num_directions']} dirs) off-grid min={dense:.2e} "
                     f"gap/mu_L={res.conclusion_gap / res.measure_L:.2e}/{gap_fine / res.measure_L:.2e} "
                     f"worst convexity violation {res.convexity.worst_violation:.1e}")
    total = time.perf_counter() - t0
    record(5, "B_4^5 counterexamples", ok_all and total <= 1800,
           "; ".join(parts) + f"; {total:.0f}s (<= 1800s)")


# ------------------------------------------------- 6. affirmative property

def _tight_scale(K, E, f, xis, res, power):
    """Smallest r with weighted sections of r E at least those of K on xis."""
    sK = section_measures_direct(K, f, xis, res)
    sE = section_measures_direct(E, f, xis, res)
    # exact for weights homogeneous along rays, a starting guess otherwise
    r = float(np.max(sK / sE)) ** (1 / (power or K.dimension - 1))
    if power is not None:
        return r
    F = lambda s: float(np.min(section_measures_direct(E.scaled(s), f, xis, res) - sK))
    lo, hi = r, r
    while F(lo) > 0:
        lo *= 0.8
    while F(hi) < 0:
        hi *= 1.25
    return brentq(F, lo, hi, xtol=1e-13 * hi, rtol=1e-13)


def _affirmative_batch(n, count, densities, rng, xi_res, sec_res, f_n_of=None, power_of=None):
    grid = build_sphere_grid(n, xi_res, "gauss")
    xis = grid.nodes[: len(grid) // 2]
    worst, used = np.inf, 0
    for i in range(count):
        f_prev = densities[i % len(densities)]
        f_n = f_prev if f_n_of is None else f_n_of
        K, E = random_convex_body(n, rng), random_convex_body(n, rng)
        power = power_of(f_prev)
        r = _tight_scale(K, E, f_prev, xis, sec_res, power) * (1 + 1e-9)
        rep = verify_bpgm(BPInstance(K, E.scaled(r), f_n, f_prev, xi_grid=grid, section_resolution=sec_res),
                          with_kernel=False)
        if rep.hypothesis_margin >= 0:
            used += 1
            worst = min(worst, rep.conclusion_gap / rep.measure_L)
    return used, worst


def test_criterion_06_affirmative_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    powers = lambda f: {"lebesgue": f.dimension - 1, "lp_power": f.dimension - 1 + f.s}.get(f.kind)
    used, worst = 0, np.inf
    for n, xi_res in ((3, 8), (4, 6)):
        dens = [lebesgue(n), gaussian(n), lp_power(n, 1, 1), lp_power(n, 2, 2)]
        u, w = _affirmative_batch(n, 100, dens, rng, xi_res, None, power_of=powers)
        used, worst = used + u, min(worst, w)
    u5, w5 = _affirmative_batch(5, 100, [lp_power(5, 1, 1)], rng, 4, 12, f_n_of=lebesgue(5),
                                power_of=lambda f: 5)
    total = time.perf_counter() - t0
    ok = used == 200 and u5 == 100 and worst >= -1e-6 and w5 >= -1e-6
    record(6, "affirmative comparisons", ok,
           f"n in {{3,4}}: {used}/200 instances with margin >= 0, min gap/mu_L {worst:.2e}; "
           f"l1-weighted n=5: {u5}/100, min gap/mu_L {w5:.2e} (all >= -1e-6); {total:.0f}s")


# --------------------------------------------------- 7. radial inequality

def test_criterion_07_radial_inequality():
    rng = np.random.default_rng(707)
    worst, flagged = np.inf, 0
    for _ in range(1000):
        n = int(rng.integers(2, 8))
        b0, b1, k1, c = rng.uniform(0.1, 2), rng.uniform(0, 2), rng.uniform(0, 3), rng.uniform(0, 1)
        u0, k2, d = rng.uniform(0.2, 3), rng.uniform(0, 3), rng.uniform(0, 2)
        beta = lambda t, b0=b0, b1=b1, k1=k1, c=c: (b0 + b1 * t ** k1) * np.exp(-c * t * t)
        # t alpha / beta = u0 t^k2 e^(d t), nondecreasing
        alpha = lambda t, beta=beta, u0=u0, k2=k2, d=d: beta(t) * u0 * t ** (k2 - 1) * np.exp(d * t)
        a, b = rng.uniform(0.05, 3, 2)
        r = elementary_inequality_residual(alpha, beta, float(a), float(b), n)
        flagged += not r.precondition_ok
        worst = min(worst, r.residual)
    record(7, "radial inequality residual", worst >= -1e-10 and flagged == 0,
           f"1000 tuples, min residual {worst:.2e} (>= -1e-10), precondition flags {flagged}")


# ------------------------------------------------------ 8. reconstruction

def _round_trip(body, f, grid_res, sec_res):
    n = body.dimension
    grid = build_sphere_grid(n, grid_res, "gauss")
    prof = section_profile(body, f, grid, resolution=sec_res, kind="gauss")
    rec = reconstruct_from_sections(prof, f, grid)
    X = np.vstack([random_directions(n, 2000, np.random.default_rng(808)), grid.nodes])
    return float(np.abs(rec.radial(X) / body.radial(X) - 1).max())


def test_criterion_08_reconstruction():
    e1 = _round_trip(lp_ball(5, 4), lebesgue(5), 28, 24)
    e2 = _round_trip(ellipsoid([2, 1, 1, 1]), gaussian(4), 16, 24)
    record(8, "section profile round trip", e1 <= 1e-2 and e2 <= 1e-2,
           f"B_4^5/lebesgue max rel radial err {e1:.2e}, ellipsoid(2,1,1,1)/gaussian {e2:.2e} (<= 1e-2)")


# -------------------------------------------------------- 9. section bound

def test_criterion_09_section_bound():
    rng = np.random.default_rng(909)
    worst, pd = np.inf, True
    for n, count, xi_res in ((3, 17, 8), (4, 17, 6), (5, 16, 4)):
        Mb = lp_ball(n, 1)
        pd &= body_kernel(Mb).is_positive_definite
        grid = build_sphere_grid(n, xi_res, "gauss")
        for _ in range(count):
            b = section_integral_lower_bound(random_convex_body(n, rng), Mb, grid, check_kernel=False)
            worst = min(worst, b.slack / b.rhs)
    eq = 0.0
    for n in (3, 4, 5):
        B = lp_ball(n, 2)
        b = section_integral_lower_bound(B, B, build_sphere_grid(n, 4), check_kernel=False)
        eq = max(eq, abs(b.slack) / b.rhs)
    record(9, "section-integral lower bound", pd and worst >= -1e-6 and eq <= 1e-6,
           f"50 random K with M=B_1^n: min slack/rhs {worst:.3f} (>= -1e-6); "
           f"K=M=B_2^n |slack|/rhs {eq:.1e} (<= 1e-6)")


# ---------------------------------------------------------- 10. determinism

def _cli(args, threads, cwd):
    env = dict(os.environ, SECTIO_THREADS=str(threads))
    r = subprocess.run([sys.executable, "-m", "sectio", *args], capture_output=True, env=env, cwd=cwd)
    files = {p.name: p.read_bytes() for p in sorted(Path(cwd).glob("out*"))}
    return r.returncode, r.stdout, files


CLI_CASES = {
    "volume": {"n": 4, "bodies": [{"kind": "lp", "p": 3}, {"kind": "ellipsoid", "semi_axes": [1, 2, 1, 0.5]}],
               "densities": [{"kind": "gaussian"}, {"kind": "lp_power", "p": 1, "s": 1}]},
    "sections": {"n": 4, "body": {"kind": "lp", "p": 1}, "density": {"kind": "gaussian"}, "route": "both",
                 "grid": {"kind": "gauss", "resolution": 4}},
    "pdtest": {"n": 4, "body": {"kind": "lp", "p": 8}},
    "counterexample": {"n": 5, "body": {"kind": "lp", "p": 4}, "density": {"kind": "gaussian"},
                       "max_degree": 14, "num_pairs": 20000, "seed": 3},
    "reconstruct": {"n": 3, "density": {"kind": "gaussian"}, "profile": "profile.csv"},
    "bounds": {"n": 3, "body": {"kind": "ellipsoid", "semi_axes": [1, 2, 1.5]}, "xi_resolution": 4},
}


def test_criterion_10_determinism():
    same, bad = 0, []
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        profile_cfg = {"n": 3, "body": {"kind": "ellipsoid", "semi_axes": [1.5, 1, 0.7]},
                       "density": {"kind": "gaussian"}, "grid": {"kind": "gauss", "resolution": 12}}
        (tmp / "p.json").write_text(json.dumps(profile_cfg))
        subprocess.run([sys.executable, "-m", "sectio", "sections", "--config", "p.json",
                        "--out", "profile.csv"], cwd=tmp, check=True)
        for name, cfg in CLI_CASES.items():
            (tmp / "c.json").write_text(json.dumps(cfg))
            outs = []
            for threads in (1, 4, 8, 1):
                for old in tmp.glob("out*"):
                    old.unlink()
                outs.append(_cli([name, "--config", "c.json", "--out", "out.json"], threads, tmp))
            if outs[0][0] == 0 and all(o == outs[0] for o in outs):
                same += 1
            else:
                bad.append(name)
    record(10, "CLI determinism", same == len(CLI_CASES),
           f"{same}/{len(CLI_CASES)} commands byte-identical over runs with 1, 4, 8, 1 workers"
           + (f"; differing: {', '.join(bad)}" if bad else ""))


if __name__ == "__main__":
    import pytest

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
