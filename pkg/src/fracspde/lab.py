"""Experiments built on the two solver routes, and their on-disk layout."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .config import dump_config
from .solver import (
    DifferenceTable,
    MomentTrajectory,
    PathOverflowError,
    SimulationConfig,
    coupled_beta_difference,
    second_moment_volterra,
    simulate_paths,
)

__all__ = [
    "GrowthReport",
    "DecayCheck",
    "PhaseDiagram",
    "ContinuityResult",
    "classify_growth",
    "no_exponential_decay_check",
    "run_route",
    "phase_sweep",
    "continuity_experiment",
    "save_run",
    "save_phase",
    "PLOT_SCRIPT",
]

RATE_THRESHOLD = 0.05
BOUNDED_SLOPE = 0.01
MIN_TAIL_POINTS = 16


@dataclass(frozen=True)
class GrowthReport:
    classification: str  #: growth, bounded or inconclusive
    rate: float | None  #: fitted exponential rate, growth only
    slope: float
    r2: float
    window: tuple[float, float]
    ci: tuple[float, float] | None = None
    overflow_time: float | None = None

    def summary(self) -> dict:
        return {
            "classification": self.classification,
            "rate": self.rate,
            "ci": list(self.ci) if self.ci is not None else None,
            "slope": self.slope,
            "r2": self.r2,
            "window": list(self.window),
            "overflow_time": self.overflow_time,
        }


def _fit(t: np.ndarray, m: np.ndarray):
    y = np.log(np.maximum(m, np.finfo(float).tiny))
    if np.ptp(y) == 0.0:
        return 0.0, 1.0, 0.0
    res = stats.linregress(t, y)
    return float(res.slope), float(res.rvalue**2), float(res.stderr)


def classify_growth(traj: MomentTrajectory, rate_threshold: float = RATE_THRESHOLD,
                    bounded_slope: float = BOUNDED_SLOPE) -> GrowthReport:
    """Classify ``sup_moment`` by a log-linear fit over ``[T/2, T]``.

    growth: slope above ``rate_threshold`` with ``r2 >= 0.9``.  bounded:
    slope at most ``bounded_slope`` (polynomial decay is allowed) and the tail
    never exceeds its value at ``T/2`` by more than 10%.  Trajectories cut at
    an overflow count as growth, fitted on ``[t_of/2, t_of]``.
    """
    t = np.asarray(traj.times, dtype=float)
    m = np.asarray(traj.sup_moment, dtype=float)
    if traj.overflow_time is not None:
        t_of = traj.overflow_time
        k = t >= t_of / 2
        if k.sum() < 2:
            k = np.ones_like(t, dtype=bool)
        slope, r2, se = _fit(t[k], m[k]) if k.sum() >= 2 else (math.inf, 1.0, 0.0)
        ci = (slope - 1.96 * se, slope + 1.96 * se)
        return GrowthReport("growth", slope, slope, r2, (t_of / 2, t_of), ci, t_of)
    T = t[-1]
    k = t >= T / 2
    if k.sum() < MIN_TAIL_POINTS:
        raise ValueError(f"need at least {MIN_TAIL_POINTS} points in [T/2, T], got {int(k.sum())}")
    tt, mm = t[k], m[k]
    window = (float(tt[0]), float(T))
    if not np.any(mm > 0):
        return GrowthReport("bounded", None, 0.0, 1.0, window)
    slope, r2, se = _fit(tt, mm)
    ci = (slope - 1.96 * se, slope + 1.96 * se)
    if slope > rate_threshold and r2 >= 0.9:
        return GrowthReport("growth", slope, slope, r2, window, ci)
    if slope <= bounded_slope and mm.max() <= 1.1 * mm[0]:
        return GrowthReport("bounded", None, slope, r2, window, ci)
    return GrowthReport("inconclusive", None, slope, r2, window, ci)


@dataclass(frozen=True)
class DecayCheck:
    passed: bool
    slope: float
    reference_slope: float
    c: float
    ratio: float  #: M(T) / (T**(-2 beta) M(1))

    def __bool__(self) -> bool:
        return self.passed


def _value_at(traj: MomentTrajectory, t: float) -> float:
    return float(np.exp(np.interp(t, traj.times, np.log(np.maximum(traj.sup_moment, np.finfo(float).tiny)))))


def no_exponential_decay_check(traj: MomentTrajectory, reference: MomentTrajectory,
                               beta: float | None = None) -> DecayCheck:
    """Test that ``traj`` decays no faster than the noiseless run ``reference``.

    Passes when the tail log-slope is at least ``s0 - 0.1|s0|`` (``s0`` the
    reference slope) and ``M(T) >= c T**(-2 beta) M(1)``, where ``c`` is 0.9
    times the smallest ``M0(t) t**(2 beta) / M0(1)`` of the reference on
    ``[1, T]``.  Overflowed trajectories pass trivially.
    """
    b = traj.beta if beta is None else float(beta)
    if traj.overflow_time is not None:
        return DecayCheck(True, math.inf, math.nan, math.nan, math.inf)
    T = float(traj.times[-1])
    if not T > 1.0:
        raise ValueError("horizon must exceed 1")
    k = traj.times >= T / 2
    slope = _fit(traj.times[k], traj.sup_moment[k])[0]
    kr = reference.times >= reference.times[-1] / 2
    ref_slope = _fit(reference.times[kr], reference.sup_moment[kr])[0]
    r1 = _value_at(reference, 1.0)
    sel = (reference.times >= 1.0) & (reference.times <= T)
    c = 0.9 * float(np.min(reference.sup_moment[sel] * reference.times[sel] ** (2 * b)) / r1)
    ratio = float(traj.sup_moment[-1] / (T ** (-2 * b) * _value_at(traj, 1.0)))
    passed = slope >= ref_slope - 0.1 * abs(ref_slope) and ratio >= c
    return DecayCheck(bool(passed), slope, ref_slope, c, ratio)


def run_route(cfg: SimulationConfig, route: str = "volterra", workers: int = 1) -> MomentTrajectory:
    """One trajectory by either route; Monte Carlo overflow returns the partial run."""
    if route == "volterra":
        return second_moment_volterra(cfg)
    if route == "monte_carlo":
        try:
            return simulate_paths(cfg, workers=workers)
        except PathOverflowError as exc:
            return exc.partial
    raise ValueError(f"unknown route {route!r}")


@dataclass
class PhaseDiagram:
    betas: np.ndarray
    lambdas: np.ndarray
    route: str
    noise: str
    reports: dict = field(default_factory=dict)  #: (i, j) -> GrowthReport
    trajectories: dict = field(default_factory=dict)
    decay_checks: dict = field(default_factory=dict)
    references: dict = field(default_factory=dict)  #: i -> lambda = 0 trajectory
    thresholds: dict = field(default_factory=dict)  #: beta -> (max bounded, min growth)

    def cell(self, beta: float, lam: float) -> GrowthReport:
        i = int(np.flatnonzero(np.isclose(self.betas, beta))[0])
        j = int(np.flatnonzero(np.isclose(self.lambdas, lam))[0])
        return self.reports[i, j]

    def column(self, beta: float) -> list[str]:
        i = int(np.flatnonzero(np.isclose(self.betas, beta))[0])
        return [self.reports[i, j].classification for j in range(len(self.lambdas))]

    def monotone(self) -> bool:
        """No bounded cell above a growth cell in any column."""
        for i in range(len(self.betas)):
            seen_growth = False
            for j in range(len(self.lambdas)):
                c = self.reports[i, j].classification
                if c == "growth":
                    seen_growth = True
                elif c == "bounded" and seen_growth:
                    return False
        return True

    def to_csv(self) -> str:
        rows = ["beta,lambda,classification,rate,slope,r2,overflow_time,decay_check"]
        for i, b in enumerate(self.betas):
            for j, lam in enumerate(self.lambdas):
                r = self.reports[i, j]
                chk = self.decay_checks.get((i, j))
                rows.append(",".join([
                    format(float(b), ".17g"), format(float(lam), ".17g"), r.classification,
                    "" if r.rate is None else format(r.rate, ".17g"),
                    format(r.slope, ".17g"), format(r.r2, ".17g"),
                    "" if r.overflow_time is None else format(r.overflow_time, ".17g"),
                    "" if chk is None else ("pass" if chk.passed else "fail"),
                ]))
        return "\n".join(rows) + "\n"

    def thresholds_csv(self) -> str:
        rows = ["beta,max_bounded_lambda,min_growth_lambda"]
        for b, (lo, hi) in self.thresholds.items():
            rows.append(f"{b!r},{'' if lo is None else repr(lo)},{'' if hi is None else repr(hi)}")
        return "\n".join(rows) + "\n"


def _strictly_increasing(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size == 0 or np.any(np.diff(a) <= 0):
        raise ValueError("grid axes must be nonempty and strictly increasing")
    return a


def phase_sweep(base: SimulationConfig, betas, lambdas, route: str = "volterra", workers: int = 1,
                decay_checks: bool = True) -> PhaseDiagram:
    """Classify ``sup_moment`` on a (beta, lambda) grid.

    Cells run on a pool of ``workers`` threads and are collected in grid
    order.  For each beta a noiseless reference run feeds
    :func:`no_exponential_decay_check`.  Columns with ``beta > 1/2`` get an
    empirical threshold interval ``[max bounded lambda, min growth lambda]``.
    """
    betas = _strictly_increasing(betas)
    lambdas = _strictly_increasing(lambdas)
    if route == "volterra" and base.sigma.kind != "linear":
        raise ValueError("the volterra route needs linear sigma")
    cells = [(i, j) for i in range(len(betas)) for j in range(len(lambdas))]
    inner = 1 if workers > 1 else workers

    def job(ij):
        i, j = ij
        cfg = base.with_(beta=float(betas[i]), lam=float(lambdas[j]))
        return run_route(cfg, route, inner)

    def ref(i):
        return second_moment_volterra(base.with_(beta=float(betas[i]), lam=0.0))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            trajs = list(ex.map(job, cells))
            refs = list(ex.map(ref, range(len(betas)))) if decay_checks else []
    else:
        trajs = [job(c) for c in cells]
        refs = [ref(i) for i in range(len(betas))] if decay_checks else []
    diag = PhaseDiagram(betas, lambdas, route, base.noise_label())
    for c, tr in zip(cells, trajs):
        diag.trajectories[c] = tr
        diag.reports[c] = classify_growth(tr)
    for i, r in enumerate(refs):
        diag.references[i] = r
        for j in range(len(lambdas)):
            diag.decay_checks[i, j] = no_exponential_decay_check(diag.trajectories[i, j], r)
    for i, b in enumerate(betas):
        if b <= 0.5:
            continue
        cls = [diag.reports[i, j].classification for j in range(len(lambdas))]
        growth = [float(lambdas[j]) for j, c in enumerate(cls) if c == "growth"]
        hi = min(growth) if growth else None
        bounded = [float(lambdas[j]) for j, c in enumerate(cls) if c == "bounded" and (hi is None or lambdas[j] < hi)]
        diag.thresholds[float(b)] = (max(bounded) if bounded else None, hi)
    return diag


@dataclass(frozen=True)
class ContinuityResult:
    beta: float
    p: float
    tables: tuple[DifferenceTable, ...]
    horizon: np.ndarray  #: metric at T per gamma, in the given order
    horizon_stderr: np.ndarray
    decreasing: bool

    def to_csv(self) -> str:
        out = "gamma,t,metric,stderr\n"
        for tab in self.tables:
            out += tab.to_csv(header=False)
        return out


def continuity_experiment(base: SimulationConfig, beta: float, gammas, p: float = 2.0,
                          workers: int = 1, slack: float = 2.0) -> ContinuityResult:
    """Coupled differences for each ``gamma``; verdict on the horizon metric.

    ``gammas`` are taken in the given order, which should approach ``beta``.
    The verdict requires each horizon metric to be below its predecessor up
    to ``slack`` combined standard errors.
    """
    cfgA = base.with_(beta=float(beta))
    tables = tuple(coupled_beta_difference(cfgA, base.with_(beta=float(g)), p, workers) for g in gammas)
    h = np.array([t.metric[-1] for t in tables])
    se = np.array([t.stderr[-1] for t in tables])
    ok = all(h[k + 1] <= h[k] + slack * math.hypot(se[k], se[k + 1]) for k in range(len(h) - 1))
    return ContinuityResult(float(beta), float(p), tables, h, se, bool(ok))


# -- persistence -----------------------------------------------------------------

PLOT_SCRIPT = """\
set datafile separator ','
set key autotitle columnhead
set logscale y
set xlabel 't'
set ylabel 'sup_x E|u_t(x)|^2'
set terminal pngcairo size 800,500
set output 'trajectory.png'
plot 'trajectory.csv' using 1:2 with lines title 'sup moment'
"""


def save_run(outdir, cfg: SimulationConfig, traj: MomentTrajectory, report: GrowthReport | None = None) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    if report is None:
        report = classify_growth(traj)
    (out / "config.echo").write_text(dump_config(cfg))
    traj.write_csv(out / "trajectory.csv")
    summary = report.summary() | {"source": traj.source, "beta": traj.beta, "lambda": traj.lam}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out / "plot.gp").write_text(PLOT_SCRIPT)
    return out


def save_phase(outdir, base: SimulationConfig, diag: PhaseDiagram) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.echo").write_text(dump_config(base))
    (out / "phase.csv").write_text(diag.to_csv())
    (out / "thresholds.csv").write_text(diag.thresholds_csv())
    for (i, j), tr in diag.trajectories.items():
        cell = base.with_(beta=float(diag.betas[i]), lam=float(diag.lambdas[j]))
        save_run(out / f"beta{diag.betas[i]:g}_lambda{diag.lambdas[j]:g}", cell, tr, diag.reports[i, j])
    summary = {
        "route": diag.route,
        "noise": diag.noise,
        "monotone": diag.monotone(),
        "cells": [
            {"beta": float(diag.betas[i]), "lambda": float(diag.lambdas[j])} | diag.reports[i, j].summary()
            for i in range(len(diag.betas)) for j in range(len(diag.lambdas))
        ],
        "thresholds": {repr(b): list(v) for b, v in diag.thresholds.items()},
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return out
