"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 precondition refusal.
"""
import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bodies import body_from_spec, lp_ball
from .bpgm import (body_kernel, construct_counterexample, kernel, lp_ratio_table,
                   section_integral_lower_bound)
from .errors import ConfigError, NumericalFailure, PreconditionRefusal
from .measures import (SectionProfile, body_measure, density_from_spec, lebesgue,
                       reconstruct_from_sections, section_measure_fourier, section_measures_direct)
from .sphere import build_sphere_grid, grid_from_nodes

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_REFUSAL = 0, 2, 3, 4
COMMANDS = ("volume", "sections", "pdtest", "counterexample", "reconstruct", "bounds")


def fmt(x):
    """Float at 9 significant digits."""
    return f"{float(x):.9g}"


def _round_floats(obj):
    if isinstance(obj, float) or isinstance(obj, np.floating):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        return float(fmt(x))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def dump_json(obj):
    return json.dumps(_round_floats(obj), indent=2, sort_keys=True) + "\n"


def rows_to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


# ------------------------------------------------------------------ config

@dataclass
class ExperimentConfig:
    n: int
    bodies: list
    densities: list
    resolution: int = None
    max_degree: int = None
    seed: int = 0
    output: str = None
    raw: dict = field(default_factory=dict)


def _require(cfg, key, kind=None):
    if key not in cfg:
        raise ConfigError(f"missing field '{key}'")
    val = cfg[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"field '{key}' has the wrong type")
    return val


def _int_field(cfg, key, default=None, lo=None, hi=None):
    if key not in cfg or cfg[key] is None:
        return default
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"field '{key}' must be an integer")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigError(f"field '{key}' is out of range [{lo}, {hi}]")
    return v


def _listify(cfg, one, many):
    if many in cfg:
        val = cfg[many]
        if not isinstance(val, list) or not val:
            raise ConfigError(f"field '{many}' must be a nonempty list")
        return val
    if one in cfg:
        return [cfg[one]]
    return None


def load_config(args):
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file '{args.config}' not found")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    n = _int_field(raw, "n", None, 2, 8)
    if n is None:
        raise ConfigError("missing field 'n'")
    bodies = _listify(raw, "body", "bodies") or []
    densities = _listify(raw, "density", "densities") or [{"kind": "lebesgue"}]
    res = args.resolution if args.resolution is not None else _int_field(raw, "resolution", None, 4, 1000)
    if res is not None and res < 4:
        raise ConfigError("field 'resolution' must be at least 4")
    M = args.max_degree if args.max_degree is not None else _int_field(raw, "max_degree", None, 0, 200)
    if M is not None and (M < 0 or M % 2):
        raise ConfigError("field 'max_degree' must be a nonnegative even integer")
    seed = args.seed if args.seed is not None else _int_field(raw, "seed", 0, 0)
    return ExperimentConfig(n, bodies, densities, res, M, seed, args.out or raw.get("output"), raw)


def _build(builder, spec, n, name):
    try:
        return builder(spec, n)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"field '{name}': {e}")


def _bodies(cfg):
    if not cfg.bodies:
        raise ConfigError("missing field 'body'")
    return [_build(body_from_spec, b, cfg.n, "body") for b in cfg.bodies]


def _densities(cfg, key="density"):
    return [_build(density_from_spec, d, cfg.n, key) for d in cfg.densities]


def _directions(cfg):
    raw = cfg.raw
    if "directions" in raw:
        X = np.asarray(raw["directions"], dtype=float)
        if X.ndim != 2 or X.shape[1] != cfg.n:
            raise ConfigError(f"field 'directions' must be a list of {cfg.n}-vectors")
        r = np.linalg.norm(X, axis=1)
        if np.any(np.abs(r - 1) > 1e-6):
            raise ConfigError("field 'directions' must contain unit vectors")
        return X / r[:, None], None
    spec = raw.get("grid", {"kind": "gauss", "resolution": 4})
    if not isinstance(spec, dict):
        raise ConfigError("field 'grid' must be an object")
    grid = _build(lambda s, n: build_sphere_grid(n, int(s.get("resolution", 4)), s.get("kind", "gauss")),
                  spec, cfg.n, "grid")
    return grid.nodes, grid


# ---------------------------------------------------------------- commands

def cmd_volume(cfg, args):
    rows = []
    for body in _bodies(cfg):
        for dens in _densities(cfg):
            grid = None
            if cfg.resolution:
                grid = build_sphere_grid(cfg.n, cfg.resolution, cfg.raw.get("grid_kind", "orthant"))
            rows.append([body.label, dens.label, body_measure(body, dens, grid)])
    return rows_to_csv(["body", "density", "measure"], rows)


def cmd_sections(cfg, args):
    route = args.route or cfg.raw.get("route", "direct")
    if route not in ("direct", "fourier", "both"):
        raise ConfigError("field 'route' must be direct, fourier or both")
    body = _bodies(cfg)[0]
    dens = _densities(cfg)[0]
    X, grid = _directions(cfg)
    kind = cfg.raw.get("section_kind")
    if kind not in (None, "cells", "gauss"):
        raise ConfigError("field 'section_kind' must be cells or gauss")
    cols = []
    if route in ("direct", "both"):
        cols.append(("direct", section_measures_direct(body, dens, X, cfg.resolution, kind)))
    if route in ("fourier", "both"):
        cols.append(("fourier", section_measure_fourier(body, dens, X, M=cfg.max_degree)))
    if route == "both":
        d, f = cols[0][1], cols[1][1]
        cols.append(("relative_difference", np.abs(f - d) / np.maximum(np.abs(d), 1e-300)))
    if len(cols) == 1:
        return SectionProfile(body.label, dens.label, X, cols[0][1]).to_csv()
    header = [f"xi_{i + 1}" for i in range(cfg.n)] + [c[0] for c in cols]
    rows = [list(map(float, x)) + [float(c[1][i]) for c in cols] for i, x in enumerate(X)]
    return rows_to_csv(header, rows)


def _density_pair(cfg):
    raw = cfg.raw
    if "f_n" in raw or "f_prev" in raw:
        f_n = _build(density_from_spec, raw.get("f_n", {"kind": "lebesgue"}), cfg.n, "f_n")
        f_prev = _build(density_from_spec, raw.get("f_prev", {"kind": "lebesgue"}), cfg.n, "f_prev")
        return f_n, f_prev
    d = _densities(cfg)[0]
    return d, d


def cmd_pdtest(cfg, args):
    body = _bodies(cfg)[0]
    f_n, f_prev = _density_pair(cfg)
    kern = kernel(body, f_n, f_prev, M=cfg.max_degree)
    out = {"body": body.label, "f_n": f_n.label, "f_prev": f_prev.label, **kern.verdict()}
    out["verdict"] = "positive-definite" if kern.is_positive_definite else "not positive-definite"
    return dump_json(out)


def cmd_counterexample(cfg, args):
    body = _bodies(cfg)[0]
    f_n, f_prev = _density_pair(cfg)
    eps0 = cfg.raw.get("epsilon0")
    if eps0 is not None and not (isinstance(eps0, (int, float)) and eps0 > 0):
        raise ConfigError("field 'epsilon0' must be a positive number")
    num_pairs = _int_field(cfg.raw, "num_pairs", 100000, 1)
    M = cfg.max_degree if cfg.max_degree is not None else 16
    res = construct_counterexample(body, f_n, f_prev, M=M, eps0=eps0, seed=cfg.seed, num_pairs=num_pairs)
    rep = res.report()
    rep.update({"body": body.label, "f_n": f_n.label, "f_prev": f_prev.label, "seed": cfg.seed})
    samples = rep["radial_samples"]
    grid = build_sphere_grid(cfg.n, samples["resolution"], "gauss")
    radial_csv = rows_to_csv([f"theta_{i + 1}" for i in range(cfg.n)] + ["rho"],
                             [list(map(float, x)) + [float(v)] for x, v in zip(grid.nodes, samples["values"])])
    return dump_json(rep), radial_csv


def cmd_reconstruct(cfg, args):
    path = args.profile or cfg.raw.get("profile")
    if not path:
        raise ConfigError("missing field 'profile'")
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ConfigError(f"profile file '{path}' not found")
    try:
        profile = SectionProfile.from_csv(text)
    except (ValueError, IndexError) as e:
        raise ConfigError(f"field 'profile': {e}")
    if profile.directions.shape[1] != cfg.n:
        raise ConfigError("field 'profile' has the wrong dimension")
    try:
        grid = grid_from_nodes(profile.directions, atol=1e-8)
    except ValueError as e:
        raise ConfigError(f"field 'profile': {e}")
    profile.directions = grid.nodes.copy()
    profile.grid = grid
    dens = _densities(cfg)[0]
    body = reconstruct_from_sections(profile, dens, grid, cfg.max_degree)
    rho = body.radial(grid.nodes)
    return rows_to_csv([f"theta_{i + 1}" for i in range(cfg.n)] + ["rho"],
                       [list(map(float, x)) + [float(v)] for x, v in zip(grid.nodes, rho)])


def cmd_bounds(cfg, args):
    raw = cfg.raw
    K = _bodies(cfg)[0]
    Mspec = raw.get("M", {"kind": "lp", "n": cfg.n, "p": 1})
    Mbody = _build(body_from_spec, Mspec, cfg.n, "M")
    xi_res = _int_field(raw, "xi_resolution", 8, 2)
    bound = section_integral_lower_bound(K, Mbody, build_sphere_grid(cfg.n, xi_res, "gauss"),
                                         cfg.resolution)
    table = raw.get("ratio_table", {})
    ns = table.get("ns", [3, 4, 5, 6])
    ps = [math.inf if p in ("inf", "Infinity") else float(p) for p in table.get("ps", [1, 1.5, 2, 4, "inf"])]
    out = {"K": K.label, "M": Mbody.label, "lemma_bound": bound.as_dict(),
           "relative_slack": bound.slack / bound.rhs, "ratio_table": lp_ratio_table(ns, ps)}
    return dump_json(out)


HANDLERS = {"volume": cmd_volume, "sections": cmd_sections, "pdtest": cmd_pdtest,
            "counterexample": cmd_counterexample, "reconstruct": cmd_reconstruct, "bounds": cmd_bounds}


# ---------------------------------------------------------------- selftest

def selftest(out=None):
    """Quick oracle suite; returns True when every check passes."""
    out = sys.stdout if out is None else out
    from math import gamma, pi
    from .harmonics import fourier_multiplier, radon_multiplier

    checks = []

    def check(name, ok, detail):
        checks.append((name, bool(ok), detail))

    for n, p in [(3, 1.0), (4, 2.0), (5, 4.0)]:
        v = body_measure(lp_ball(n, p), lebesgue(n))
        exact = (2 * gamma(1 + 1 / p)) ** n / gamma(1 + n / p)
        check(f"volume B_{p:g}^{n}", abs(v / exact - 1) <= 1e-4, f"rel err {abs(v / exact - 1):.2e}")
    check("radon multiplier n=3 m=2", abs(radon_multiplier(3, 2) + pi) < 1e-12, "")
    for n in (3, 4, 5):
        prod = fourier_multiplier(n, 1, 2) * fourier_multiplier(n, n - 1, 2)
        check(f"fourier inversion n={n}", abs(prod / (2 * pi) ** n - 1) < 1e-12, f"{prod:.6g}")
        check(f"radon-fourier identity n={n}",
              abs(fourier_multiplier(n, n - 1, 4) / pi - radon_multiplier(n, 4)) < 1e-10, "")
    rng = np.random.default_rng(0)
    xi = rng.standard_normal((3, 4))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    B = lp_ball(4, 4)
    d = section_measures_direct(B, lebesgue(4), xi)
    f = section_measure_fourier(B, lebesgue(4), xi)
    err = float(np.max(np.abs(f - d) / d))
    check("route equivalence B_4^4", err <= 1e-3, f"rel diff {err:.2e}")
    check("pdtest B_1^5", body_kernel(lp_ball(5, 1)).is_positive_definite, "")
    check("pdtest B_4^5", not body_kernel(lp_ball(5, 4)).is_positive_definite, "")
    width = max(len(c[0]) for c in checks)
    for name, ok, detail in checks:
        out.write(f"{'PASS' if ok else 'FAIL'}  {name.ljust(width)}  {detail}\n")
    return all(c[1] for c in checks)


# ---------------------------------------------------------------- entry

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration")
    common.add_argument("--out", help="output path (default: standard output)")
    common.add_argument("--route", choices=("direct", "fourier", "both"))
    common.add_argument("--seed", type=int)
    common.add_argument("--resolution", type=int)
    common.add_argument("--max-degree", type=int, dest="max_degree")
    common.add_argument("--profile", help="section profile CSV (reconstruct)")
    parser = argparse.ArgumentParser(prog="sectio", parents=[common],
                                     description="Weighted sections of star bodies.")
    parser.add_argument("--selftest", action="store_true", help="run the built-in oracle suite")
    sub = parser.add_subparsers(dest="command")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _write(path, text):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    if args.selftest:
        return EXIT_OK if selftest() else EXIT_NUMERIC
    if not args.command:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args)
        result = HANDLERS[args.command](cfg, args)
    except ConfigError as e:
        sys.stderr.write(f"config error: {e}\n")
        return EXIT_CONFIG
    except PreconditionRefusal as e:
        sys.stderr.write(f"refused: {e}\n")
        return EXIT_REFUSAL
    except (NumericalFailure, ValueError, FloatingPointError) as e:
        sys.stderr.write(f"numerical failure: {e}\n")
        return EXIT_NUMERIC
    if isinstance(result, tuple):
        report, radial = result
        _write(cfg.output, report)
        if cfg.output:
            base = Path(cfg.output)
            Path(str(base.with_suffix("")) + ".radial.csv").write_text(radial)
    else:
        _write(cfg.output, result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
