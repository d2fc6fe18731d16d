"""Command line entry point: ``fracspde <subcommand> ...``.

Every subcommand writes CSV to stdout (or files under ``--out``) and exits
with status 0 only when all checks it runs pass.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import config as _config
from .kernel import HeatKernel, kernel_eval, lambda_theta
from .lab import GrowthReport, classify_growth, continuity_experiment, phase_sweep, save_phase, save_run
from .mlf import ml_bounds, ml_neg
from .noise import mode_covariance, parse_kernel
from .solver import PathOverflowError, resolution_check, second_moment_volterra, simulate_paths
from .spectra import Grid, build_basis, parse_domain


def _floats(text: str) -> list[float]:
    """``a,b,c`` or an inclusive range ``start:stop:step``."""
    if ":" in text:
        a, b, s = (float(v) for v in text.split(":"))
        if not s > 0:
            raise argparse.ArgumentTypeError("range step must be positive")
        n = int(math.floor((b - a) / s + 1e-9))
        return [round(a + k * s, 12) for k in range(n + 1)]
    return [float(v) for v in text.split(",") if v.strip()]


def _g(v) -> str:
    return format(float(v), ".17g")


def cmd_ml(a) -> int:
    value = ml_neg(a.beta, a.x)
    if not a.bounds:
        print(f"{_g(a.beta)},{_g(a.x)},{_g(value)},,")
        return 0
    if a.beta == 1.0:
        print(f"{_g(a.beta)},{_g(a.x)},{_g(value)},,")
        return 0
    b = ml_bounds(a.beta, a.x)
    print(f"{_g(a.beta)},{_g(a.x)},{_g(value)},{_g(b.lower)},{_g(b.upper)}")
    return 0 if b.contains(value, 1e-12) else 1


def cmd_spectra(a) -> int:
    basis = build_basis(parse_domain(a.domain, a.alpha), a.modes)
    print("n,mu_n")
    for n, mu in enumerate(basis.eigenvalues, 1):
        print(f"{n},{_g(mu)}")
    return 0


def cmd_kernel(a) -> int:
    dom = parse_domain(a.domain, a.alpha)
    basis = build_basis(dom, a.modes)
    if a.action == "lambda":
        mu1 = float(basis.eigenvalues[0])
        print("beta,theta,lambda")
        for th in a.theta_grid:
            print(f"{_g(a.beta)},{_g(th)},{_g(lambda_theta(a.beta, mu1, th))}")
        return 0
    if a.t is None or a.x is None or a.y is None:
        print("kernel eval needs --t, --x and --y", file=sys.stderr)
        return 2
    k = HeatKernel(basis, a.beta)
    gxy, gyx = kernel_eval(k, a.t, a.x, a.y), kernel_eval(k, a.t, a.y, a.x)
    print("beta,t,x,y,G")
    print(f"{_g(a.beta)},{_g(a.t)},{_g(a.x)},{_g(a.y)},{_g(gxy)}")
    return 0 if gxy == gyx else 1


def cmd_noise(a) -> int:
    dom = parse_domain(a.domain, a.alpha)
    basis = build_basis(dom, a.modes)
    grid = Grid.cell_centred(dom, a.grid)
    kern = None if a.kernel == "white" else parse_kernel(a.kernel)
    if kern is not None:
        kern.validate_for(dom.dim, dom.alpha)
    Q = mode_covariance(kern, basis, grid)
    np.savetxt(sys.stdout, Q, delimiter=",", fmt="%.17g")
    return 0 if np.max(np.abs(Q - Q.T)) < 1e-12 else 1


def _emit(cfg, traj, report, out) -> None:
    if out:
        save_run(out, cfg, traj, report)
    sys.stdout.write(traj.to_csv())
    print(json.dumps(report.summary(), sort_keys=True), file=sys.stderr)


def cmd_simulate(a) -> int:
    cfg = _config.load_config(a.config, paths=a.paths, seed=a.seed)
    try:
        traj = simulate_paths(cfg, workers=a.workers)
    except PathOverflowError as exc:
        print(str(exc), file=sys.stderr)
        traj = exc.partial
    _emit(cfg, traj, classify_growth(traj) if _tail_ok(traj) else _short(traj), a.out)
    return 0


def cmd_moments(a) -> int:
    cfg = _config.load_config(a.config)
    traj = second_moment_volterra(cfg)
    ok = True
    if a.check_resolution:
        _, ok = resolution_check(cfg)
    _emit(cfg, traj, classify_growth(traj) if _tail_ok(traj) else _short(traj), a.out)
    return 0 if ok else 1


def _tail_ok(traj) -> bool:
    return traj.overflow_time is not None or int(np.sum(traj.times >= traj.times[-1] / 2)) >= 16


def _short(traj):
    return GrowthReport("inconclusive", None, math.nan, math.nan, (traj.times[-1] / 2, traj.times[-1]))


def cmd_phase(a) -> int:
    base = _config.load_config(a.config)
    diag = phase_sweep(base, a.beta, a.lam, route=a.route, workers=a.workers)
    if a.out:
        save_phase(a.out, base, diag)
    sys.stdout.write(diag.to_csv())
    sys.stdout.write(diag.thresholds_csv())
    ok = diag.monotone() and all(c.passed for c in diag.decay_checks.values())
    return 0 if ok else 1


def cmd_continuity(a) -> int:
    base = _config.load_config(a.config)
    res = continuity_experiment(base, a.beta, a.gamma, a.p, workers=a.workers)
    sys.stdout.write(res.to_csv())
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(res.to_csv())
    print(f"decreasing={res.decreasing}", file=sys.stderr)
    return 0 if res.decreasing else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracspde", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ml", help="Mittag-Leffler E_beta(-x) and its envelope")
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--x", type=float, required=True)
    s.add_argument("--bounds", action="store_true")
    s.set_defaults(func=cmd_ml)

    s = sub.add_parser("spectra", help="Dirichlet eigenvalues")
    s.add_argument("--domain", default="interval:1.0")
    s.add_argument("--alpha", type=float, default=2.0)
    s.add_argument("--modes", type=int, default=20)
    s.set_defaults(func=cmd_spectra)

    s = sub.add_parser("kernel", help="heat kernel values or Lambda(theta)")
    s.add_argument("action", nargs="?", choices=("eval", "lambda"), default="eval")
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--t", type=float)
    s.add_argument("--x", type=float)
    s.add_argument("--y", type=float)
    s.add_argument("--theta-grid", type=_floats, default=[1e-6, 1e-4, 1e-2, 1.0])
    s.add_argument("--domain", default="interval:pi")
    s.add_argument("--alpha", type=float, default=2.0)
    s.add_argument("--modes", type=int, default=64)
    s.set_defaults(func=cmd_kernel)

    s = sub.add_parser("noise", help="mode covariance matrix Q")
    s.add_argument("action", choices=("q",))
    s.add_argument("--kernel", default="white")
    s.add_argument("--modes", type=int, default=16)
    s.add_argument("--domain", default="interval:1.0")
    s.add_argument("--alpha", type=float, default=2.0)
    s.add_argument("--grid", type=int, default=64)
    s.set_defaults(func=cmd_noise)

    for name, func, text in (("simulate", cmd_simulate, "Monte Carlo second moment"),
                             ("moments", cmd_moments, "Volterra second moment")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True)
        s.add_argument("--out", help="run directory for config.echo, trajectory.csv, summary.json, plot.gp")
        if name == "simulate":
            s.add_argument("--paths", type=int)
            s.add_argument("--seed", type=lambda v: int(v, 0))
            s.add_argument("--workers", type=int, default=1)
        else:
            s.add_argument("--check-resolution", action="store_true")
        s.set_defaults(func=func)

    s = sub.add_parser("phase", help="(beta, lambda) growth diagram")
    s.add_argument("--config", required=True)
    s.add_argument("--beta", type=_floats, required=True)
    s.add_argument("--lambda", dest="lam", type=_floats, required=True)
    s.add_argument("--route", choices=("volterra", "monte_carlo"), default="volterra")
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_phase)

    s = sub.add_parser("continuity", help="coupled differences as gamma approaches beta")
    s.add_argument("--config", required=True)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--gamma", type=_floats, required=True)
    s.add_argument("--p", type=float, default=2.0)
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_continuity)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
