"""Command-line interface.

Each subcommand builds the requested object, writes its artifacts
(CSV, JSON, PGM) under the output directory, and prints a one-line
JSON summary {cmd, elapsed_ms, outputs, status} to standard output.
Exit codes: 0 on success, 2 for configuration or validation problems,
3 for numerical failures raised by the computation modules.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import density as _density_mod  # noqa: F401  (module import for clarity)
from .density import raster as _raster
from .density import sample as _sample
from .domain import boundary_polyline
from .errors import NumericalError
from .hj import domain_profile, evaluate_S, pde_residual_r, pde_residual_tau
from .measures import BrownParams, CircleMeasure, delta1, four_points, load_measure_json
from .moments import solve_hierarchy
from .outputs import write_csv, write_json, write_pgm
from .pushforward import build_push_map, phi_stau_many, verify_pushforward
from .rmt import SimConfig, eig_cloud, eig_vs_density, estimate_S_mc
from .rng import substream

__all__ = ["dispatch", "main", "parse_complex"]

_BUILTIN_MEASURES = {"delta1": delta1, "four_points": four_points}


def parse_complex(text: str) -> complex:
    """Parse 'a+bi' style complex literals without locale dependence.

    Accepts plain reals ('2', '-0.5'), pure imaginaries ('i', '-2i'),
    and combinations ('1+1i', '1-0.5i', '0.3+0.1j'). The decimal
    separator is always the period.
    """
    t = text.strip().replace(" ", "")
    if not t:
        raise ValueError("empty complex literal")
    t = t.replace("I", "i").replace("J", "j").replace("i", "j")
    if t.endswith("j") and (len(t) == 1 or t[-2] in "+-"):
        t = t[:-1] + "1j"
    try:
        return complex(t)
    except ValueError:
        raise ValueError(f"cannot parse complex value {text!r}") from None


def _resolve_measure(spec: str) -> CircleMeasure:
    """Resolve a --measure argument: builtin name, JSON file, or inline JSON."""
    if spec in _BUILTIN_MEASURES:
        return _BUILTIN_MEASURES[spec]()
    stripped = spec.strip()
    if stripped.startswith("{"):
        return load_measure_json(stripped)
    if os.path.exists(spec):
        return load_measure_json(spec)
    raise ValueError(
        f"unknown measure {spec!r}: expected one of "
        f"{sorted(_BUILTIN_MEASURES)}, a JSON file path, or inline JSON"
    )


def _profile_from(args):
    m = _resolve_measure(args.measure)
    p = BrownParams(args.s, parse_complex(args.tau))
    return m, p, domain_profile(m, p)


def _out_path(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


# ---------------------------------------------------------------------------
# Subcommand handlers (each returns the list of written artifact paths)
# ---------------------------------------------------------------------------


def _cmd_domain(args):
    _, _, prof = _profile_from(args)
    profile_rows = zip(
        prof.theta_grid,
        prof.r_s,
        prof.I_s,
        prof.R_s,
        prof.phi_s,
        prof.delta_stau,
        prof.v1_nodes,
        prof.v2_nodes,
    )
    path1 = write_csv(
        _out_path(args, "domain_profile.csv"),
        ["theta", "r_s", "I_s", "R_s", "phi_s", "delta", "v1", "v2"],
        profile_rows,
    )
    inner, outer = boundary_polyline(prof, n=args.n)
    rows = [(z.real, z.imag, "inner") for z in inner]
    rows += [(z.real, z.imag, "outer") for z in outer]
    path2 = write_csv(_out_path(args, "domain_boundary.csv"), ["x", "y", "arc"], rows)
    return [path1, path2]


def _cmd_density(args):
    _, _, prof = _profile_from(args)
    ny = args.ny if args.ny is not None else args.nx
    ras = _raster(prof, nx=args.nx, ny=ny)
    rows = (
        (ras.x[ix], ras.y[iy], ras.values[iy, ix])
        for iy in range(ras.y.size)
        for ix in range(ras.x.size)
    )
    path1 = write_csv(_out_path(args, "density.csv"), ["x", "y", "density"], rows)
    path2 = write_pgm(_out_path(args, "density.pgm"), ras.values)
    return [path1, path2]


def _cmd_sample(args):
    _, _, prof = _profile_from(args)
    pts = _sample(prof, args.n, seed=args.seed)
    path = write_csv(
        _out_path(args, "sample.csv"), ["x", "y"], ((z.real, z.imag) for z in pts)
    )
    return [path]


def _cmd_potential(args):
    m, p, prof = _profile_from(args)
    inner, outer = boundary_polyline(prof, n=256)
    pts = np.concatenate([inner, outer])
    x0, x1 = pts.real.min(), pts.real.max()
    y0, y1 = pts.imag.min(), pts.imag.max()
    mx, my = 0.1 * (x1 - x0), 0.1 * (y1 - y0)
    ny = args.ny if args.ny is not None else args.nx
    xs = np.linspace(x0 - mx, x1 + mx, args.nx)
    ys = np.linspace(y0 - my, y1 + my, ny)
    eps = args.eps
    rows = []
    state = None
    for y in ys:
        for x in xs:
            lam = complex(x, y)
            try:
                res = evaluate_S(m, p, lam, eps, seed_state=state)
            except NumericalError:
                state = None
                res = evaluate_S(m, p, lam, eps)
            state = res.state
            # Wirtinger gradient to real partials: Sx = 2 Re, Sy = -2 Im.
            rows.append(
                (
                    x,
                    y,
                    eps,
                    res.S_value,
                    2.0 * res.grad_lam.real,
                    -2.0 * res.grad_lam.imag,
                    res.grad_eps,
                )
            )
    path = write_csv(
        _out_path(args, "potential.csv"),
        ["x", "y", "eps", "S", "dS_dx", "dS_dy", "dS_deps"],
        rows,
    )
    return [path]


def _cmd_pde_check(args):
    m, p, prof = _profile_from(args)
    pts = _sample(prof, args.n, seed=args.seed)
    rng = substream(args.seed, 1)
    eps_draws = rng.uniform(0.05, 0.25, args.n)
    rows = []
    for lam, eps in zip(pts, eps_draws):
        r_tau = pde_residual_tau(m, p, lam, eps, h=args.h)
        r_r = pde_residual_r(
            m, p.s, p.tau, p.s, p.tau, 1.0, lam, eps, h=args.h
        )
        rows.append((lam.real, lam.imag, eps, r_tau, r_r))
    path = write_csv(
        _out_path(args, "pde_check.csv"),
        ["lambda_x", "lambda_y", "eps", "residual_tau", "residual_r"],
        rows,
    )
    return [path]


def _cmd_pushforward(args):
    m, p, _ = _profile_from(args)
    pm = build_push_map(m, p.s, p.tau)
    report = verify_pushforward(pm, n=args.n, seed=args.seed)
    src = _sample(pm.source_profile, args.n, seed=args.seed)
    tgt = phi_stau_many(pm, src)
    path1 = write_csv(
        _out_path(args, "pushforward_pairs.csv"),
        ["source_x", "source_y", "target_x", "target_y"],
        zip(src.real, src.imag, tgt.real, tgt.imag),
    )
    path2 = write_json(_out_path(args, "pushforward_report.json"), report)
    return [path1, path2]


def _cmd_moments(args):
    tau = parse_complex(args.tau)
    table = solve_hierarchy(
        args.s, tau, r_max=args.r_max, max_len=args.max_len, steps=args.steps
    )
    words = []
    for w in table.words:
        if len(w) == 0:
            continue
        traj = table.trajectory(w)
        words.append(
            {
                "word": w.to_string(),
                "trajectory": [
                    [float(r), float(v.real), float(v.imag)]
                    for r, v in zip(table.r_nodes, traj)
                ],
            }
        )
    doc = {"s": args.s, "tau": tau, "r_max": args.r_max, "words": words}
    path = write_json(_out_path(args, "moments.json"), doc)
    return [path]


def _cmd_simulate(args):
    m, p, prof = _profile_from(args)
    cfg = SimConfig(
        N=args.N,
        steps=args.steps,
        samples=args.samples,
        seed=args.seed,
        scheme=args.scheme,
    )
    cloud = eig_cloud(cfg, m, p.s, p.tau)
    path1 = write_csv(
        _out_path(args, "eigenvalues.csv"),
        ["x", "y", "sample_index"],
        zip(cloud.values.real, cloud.values.imag, cloud.sample_index),
    )
    report = eig_vs_density(cloud, prof)
    report["config"] = {
        "N": cfg.N,
        "steps": cfg.steps,
        "samples": cfg.samples,
        "seed": cfg.seed,
        "scheme": cfg.scheme,
    }
    path2 = write_json(_out_path(args, "simulate_report.json"), report)
    return [path1, path2]


def _cmd_compare(args):
    m, p, prof = _profile_from(args)
    half = max(args.n // 2, 1)
    interior = _sample(prof, half, seed=args.seed)
    _, outer = boundary_polyline(prof, n=max(args.n, 8))
    idx = np.linspace(0, len(outer) - 1, args.n - half).astype(int)
    exterior = 1.3 * outer[idx]
    probes = np.concatenate([interior, exterior])
    cfg = SimConfig(
        N=args.N, steps=args.steps, samples=args.samples, seed=args.seed
    )
    means, errs = estimate_S_mc(cfg, m, p.s, p.tau, probes, args.eps)
    rows = []
    state = None
    for lam, mc_mean, mc_err in zip(probes, means, errs):
        try:
            res = evaluate_S(m, p, lam, args.eps, seed_state=state)
        except NumericalError:
            state = None
            res = evaluate_S(m, p, lam, args.eps)
        state = res.state
        sigma = abs(mc_mean - res.S_value) / mc_err if mc_err > 0 else float("inf")
        rows.append(
            {
                "lambda": complex(lam),
                "eps": args.eps,
                "mc_mean": float(mc_mean),
                "mc_stderr": float(mc_err),
                "exact": float(res.S_value),
                "sigma": float(sigma),
            }
        )
    doc = {
        "s": p.s,
        "tau": p.tau,
        "samples": cfg.samples,
        "points": rows,
        "max_sigma": max(r["sigma"] for r in rows),
    }
    path = write_json(_out_path(args, "compare_report.json"), doc)
    return [path]


# ---------------------------------------------------------------------------
# Parser assembly and dispatch
# ---------------------------------------------------------------------------


def _add_common(sub, tau_default="1+0i"):
    sub.add_argument("--measure", default="delta1", help="builtin name, JSON file, or inline JSON")
    sub.add_argument("--s", type=float, default=1.0)
    sub.add_argument("--tau", default=tau_default, help="complex 'a+bi'")
    sub.add_argument("--out", default=".", help="output directory")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--threads", type=int, default=None)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="brownlab",
        description="Spectral domains, densities, potentials, and finite-N checks for the multiplicative matrix flow.",
    )
    subs = parser.add_subparsers(dest="cmd", required=True)

    sp = subs.add_parser("domain", help="strip profile and boundary polyline CSVs")
    _add_common(sp)
    sp.add_argument("--n", type=int, default=512, help="boundary polyline nodes")
    sp.set_defaults(func=_cmd_domain)

    sp = subs.add_parser("density", help="density raster CSV and PGM heatmap")
    _add_common(sp)
    sp.add_argument("--nx", type=int, default=256)
    sp.add_argument("--ny", type=int, default=None)
    sp.set_defaults(func=_cmd_density)

    sp = subs.add_parser("sample", help="draw points from the density")
    _add_common(sp)
    sp.add_argument("--n", type=int, default=10000)
    sp.set_defaults(func=_cmd_sample)

    sp = subs.add_parser("potential", help="log potential and gradients on a grid")
    _add_common(sp)
    sp.add_argument("--nx", type=int, default=24)
    sp.add_argument("--ny", type=int, default=None)
    sp.add_argument("--eps", type=float, default=0.1)
    sp.set_defaults(func=_cmd_potential)

    sp = subs.add_parser("pde-check", help="PDE residuals at random probe points")
    _add_common(sp)
    sp.add_argument("--n", type=int, default=10)
    sp.add_argument("--h", type=float, default=1e-3)
    sp.set_defaults(func=_cmd_pde_check)

    sp = subs.add_parser("pushforward", help="map sampled points and test the image law")
    _add_common(sp, tau_default="1+0.5i")
    sp.add_argument("--n", type=int, default=20000)
    sp.set_defaults(func=_cmd_pushforward)

    sp = subs.add_parser("moments", help="word-trace trajectories as JSON")
    sp.add_argument("--s", type=float, default=1.0)
    sp.add_argument("--tau", default="1+0i", help="complex 'a+bi'")
    sp.add_argument("--r-max", type=float, default=1.0)
    sp.add_argument("--max-len", type=int, default=4)
    sp.add_argument("--steps", type=int, default=200)
    sp.add_argument("--out", default=".")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=None)
    sp.set_defaults(func=_cmd_moments)

    sp = subs.add_parser("simulate", help="finite-N eigenvalue cloud and density comparison")
    _add_common(sp, tau_default="1+0.5i")
    sp.add_argument("--N", type=int, default=300)
    sp.add_argument("--steps", type=int, default=200)
    sp.add_argument("--samples", type=int, default=10)
    sp.add_argument("--scheme", default="euler", choices=["euler", "exponential"])
    sp.set_defaults(func=_cmd_simulate)

    sp = subs.add_parser("compare", help="Monte-Carlo potential against the closed form")
    _add_common(sp)
    sp.add_argument("--n", type=int, default=6, help="number of probe points")
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--N", type=int, default=200)
    sp.add_argument("--steps", type=int, default=100)
    sp.add_argument("--samples", type=int, default=50)
    sp.set_defaults(func=_cmd_compare)

    return parser


def dispatch(argv) -> int:
    """Parse arguments, run one subcommand, print the one-line summary."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    if getattr(args, "threads", None):
        os.environ["BROWNLAB_THREADS"] = str(args.threads)
    start = time.perf_counter()
    try:
        written = args.func(args)
    except (ValueError, json.JSONDecodeError, OSError) as exc:
        _summary(args.cmd, start, [], "error", str(exc))
        return 2
    except NumericalError as exc:
        _summary(args.cmd, start, [], "error", str(exc))
        return 3
    _summary(args.cmd, start, written, "ok")
    return 0


def _summary(cmd, start, written, status, message=None):
    doc = {
        "cmd": cmd,
        "elapsed_ms": int(round(1000.0 * (time.perf_counter() - start))),
        "outputs": list(written),
        "status": status,
    }
    if message is not None:
        doc["error"] = message
    sys.stdout.write(json.dumps(doc) + "\n")


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
