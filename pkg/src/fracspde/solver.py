"""Second moments of the mild solution, by Monte Carlo and by a Volterra solver.

Both routes share one discretisation: a uniform time grid ``t_j = j dt``, the
N-mode kernel, the cell-centred grid, and a left-point rule in time,

``u_{j+1} = v_{j+1} + lam * sum_{i<=j} sum_n E_beta(-mu_n (t_{j+1}-t_i)**beta)
phi_n(x) Z_{i,n}``,  ``Z_{i,n} = sum_m phi_n(y_m) sigma(u_i(y_m)) dF_{i,m}``,

where ``dF_{i,m}`` is the noise integrated over cell ``m`` and step ``i``.
Taking expectations of the square gives exactly the discrete Volterra
recursion solved by :func:`second_moment_volterra`, so for linear ``sigma``
the Monte Carlo estimate is unbiased for it.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable

import numpy as np

from .kernel import HeatKernel, InitialCondition
from .mlf import FractionalOrder, as_order
from .noise import CovKernel, NoiseModel, colored_noise, sample_cell_increments, white_noise
from .spectra import DomainSpec, Grid, SpectralBasis, build_basis
from .streams import path_normals

__all__ = [
    "SigmaSpec",
    "SimulationConfig",
    "MomentTrajectory",
    "DifferenceTable",
    "Setup",
    "SimulationError",
    "PathOverflowError",
    "OVERFLOW_LIMIT",
    "simulate_paths",
    "second_moment_volterra",
    "first_mode_volterra",
    "coupled_beta_difference",
    "resolution_check",
]

#: second moments beyond this are treated as blow-up
OVERFLOW_LIMIT = 1e150

CHUNK = 50  # paths per work unit; fixed so results never depend on worker count


class SimulationError(RuntimeError):
    pass


class PathOverflowError(SimulationError):
    """A path left the representable range; ``partial`` holds the moments so far."""

    def __init__(self, step: int, path: int, time: float, partial: "MomentTrajectory | None" = None):
        super().__init__(f"path {path} overflowed at step {step} (t = {time:.6g})")
        self.step = step
        self.path = path
        self.time = time
        self.partial = partial


@dataclass(frozen=True)
class SigmaSpec:
    """Nonlinearity ``sigma`` with its sandwich constants ``l|x| <= |sigma(x)| <= L|x|``."""

    kind: str = "linear"
    c: float = 1.0
    l_sigma: float | None = None
    L_sigma: float | None = None
    func: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "linear":
            object.__setattr__(self, "l_sigma", abs(float(self.c)))
            object.__setattr__(self, "L_sigma", abs(float(self.c)))
        elif self.kind == "custom":
            if self.func is None or self.l_sigma is None or self.L_sigma is None:
                raise ValueError("custom sigma needs func, l_sigma and L_sigma")
            if not 0 < self.l_sigma <= self.L_sigma:
                raise ValueError("need 0 < l_sigma <= L_sigma")
            probe = np.linspace(-10.0, 10.0, 2001)
            if not self.sandwich_holds(probe):
                raise ValueError("sigma violates l|x| <= |sigma(x)| <= L|x| on [-10, 10]")
        else:
            raise ValueError(f"unknown sigma kind {self.kind!r}")

    @classmethod
    def linear(cls, c: float = 1.0) -> "SigmaSpec":
        return cls("linear", float(c))

    @classmethod
    def custom(cls, func, l_sigma: float, L_sigma: float) -> "SigmaSpec":
        return cls("custom", 0.0, float(l_sigma), float(L_sigma), func)

    def __call__(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            return self.c * u
        return np.asarray(self.func(u), dtype=float)

    def sandwich_holds(self, u: np.ndarray, rtol: float = 1e-12) -> bool:
        a = np.abs(np.asarray(u, dtype=float))
        s = np.abs(self(u))
        slack = rtol * a
        return bool(np.all(self.l_sigma * a - slack <= s) and np.all(s <= self.L_sigma * a + slack))

    def label(self) -> str:
        return f"linear:{self.c!r}" if self.kind == "linear" else "custom"


@dataclass(frozen=True)
class SimulationConfig:
    domain: DomainSpec = field(default_factory=lambda: DomainSpec.interval(math.pi))
    beta: FractionalOrder = field(default_factory=lambda: FractionalOrder(0.75))
    lam: float = 0.5
    sigma: SigmaSpec = field(default_factory=SigmaSpec.linear)
    noise: CovKernel | None = None  #: ``None`` is space-time white noise
    u0: str = "sine"
    T: float = 5.0
    J: int = 64
    N: int = 16
    M: int = 32
    paths: int = 1000
    seed: int = 20240601

    def __post_init__(self):
        object.__setattr__(self, "beta", as_order(self.beta))
        if not self.lam >= 0 or not math.isfinite(self.lam):
            raise ValueError("noise level lam must be >= 0")
        for name in ("J", "N", "M", "paths"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
            object.__setattr__(self, name, int(getattr(self, name)))
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        b = self.beta.value
        d, alpha = self.domain.dim, self.domain.alpha
        if self.noise is None and not d < min(2.0, 1.0 / b) * alpha:
            raise ValueError(f"white noise needs d < (2 ^ 1/beta) alpha; got d={d}, beta={b}, alpha={alpha}")
        if self.noise is not None:
            self.noise.validate_for(d, alpha)

    @property
    def dt(self) -> float:
        return self.T / self.J

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.J + 1)

    def with_(self, **changes) -> "SimulationConfig":
        return replace(self, **changes)

    def noise_label(self) -> str:
        return "white" if self.noise is None else self.noise.label()

    def setup(self) -> "Setup":
        return _setup(self)


@dataclass(frozen=True, eq=False)
class Setup:
    """Everything derived from a config that both routes need."""

    cfg: SimulationConfig
    basis: SpectralBasis
    grid: Grid
    kernel: HeatKernel
    noise: NoiseModel
    u0: InitialCondition

    @cached_property
    def Phi(self) -> np.ndarray:
        return self.basis.evaluate(self.grid.points)

    @cached_property
    def decay(self) -> np.ndarray:
        """``E[j, n] = E_beta(-mu_n t_j**beta)`` on the time grid (also the lag table)."""
        return self.kernel.decay_table(self.cfg.times)

    @cached_property
    def a0(self) -> np.ndarray:
        return self.u0.modes(self.basis.N)

    @cached_property
    def deterministic(self) -> np.ndarray:
        """``v_{t_j}`` on the grid, shape ``(J+1, P)``."""
        return (self.decay * self.a0) @ self.Phi.T


def _build_u0(spec: str, grid: Grid, basis: SpectralBasis) -> InitialCondition:
    name, _, arg = spec.partition(":")
    name = name.strip().lower()
    val = float(arg) if arg else 1.0
    if name == "sine":
        return InitialCondition.sine(grid, basis, val)
    if name == "constant":
        return InitialCondition.constant(grid, basis, val)
    if name == "mode1":
        vals = basis.phi(1, grid.points if grid.domain.dim > 1 else grid.points[:, 0]) * val
        return InitialCondition.from_values(vals, grid, basis, "mode1")
    raise ValueError(f"unknown initial condition {spec!r}")


_SETUP_CACHE: dict = {}


def _setup(cfg: SimulationConfig) -> Setup:
    key = (cfg.domain, cfg.beta.value, cfg.noise, cfg.u0, cfg.N, cfg.M)
    base = _SETUP_CACHE.get(key)
    if base is None:
        basis = build_basis(cfg.domain, cfg.N)
        if np.any(basis.indices.max(axis=0) >= cfg.M):
            raise ValueError("grid too coarse for the retained modes: need M > largest mode index per axis")
        grid = Grid.cell_centred(cfg.domain, cfg.M)
        kern = HeatKernel(basis, cfg.beta)
        noise = white_noise(basis, grid) if cfg.noise is None else colored_noise(cfg.noise, basis, grid)
        u0 = _build_u0(cfg.u0, grid, basis)
        base = (basis, grid, kern, noise, u0)
        if len(_SETUP_CACHE) > 64:
            _SETUP_CACHE.clear()
        _SETUP_CACHE[key] = base
    return Setup(cfg, *base)


# -- results -----------------------------------------------------------------------


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else format(float(v), ".17g")


@dataclass(frozen=True, eq=False)
class MomentTrajectory:
    """``sup_x E|u_t(x)|**2`` on a time grid.

    ``stderr`` is the Monte Carlo standard error at the maximising grid point
    (``None`` for the Volterra route).  ``overflow_time`` is set when the
    trajectory was cut because it left the representable range.
    """

    times: np.ndarray
    sup_moment: np.ndarray
    stderr: np.ndarray | None
    source: str
    beta: float
    lam: float
    moments: np.ndarray | None = None
    overflow_time: float | None = None
    info: dict = field(default_factory=dict)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def to_csv(self) -> str:
        rows = ["t,sup_moment,stderr"]
        se = self.stderr if self.stderr is not None else [None] * len(self.times)
        for t, m, s in zip(self.times, self.sup_moment, se):
            rows.append(f"{_fmt(t)},{_fmt(m)},{_fmt(s)}")
        return "\n".join(rows) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def scaled(self, factor: float) -> "MomentTrajectory":
        se = None if self.stderr is None else self.stderr * factor
        return replace(self, sup_moment=self.sup_moment * factor, stderr=se)


@dataclass(frozen=True, eq=False)
class DifferenceTable:
    """``sup_x E|u^(gamma)_t - u^(beta)_t|**p`` with standard errors."""

    times: np.ndarray
    metric: np.ndarray
    stderr: np.ndarray
    p: float
    beta: float
    gamma: float

    def to_csv(self, header: bool = True) -> str:
        rows = ["gamma,t,metric,stderr"] if header else []
        for t, m, s in zip(self.times, self.metric, self.stderr):
            rows.append(f"{_fmt(self.gamma)},{_fmt(t)},{_fmt(m)},{_fmt(s)}")
        return "\n".join(rows) + "\n"


# -- Volterra route ----------------------------------------------------------------


def _truncate(times, values, limit=OVERFLOW_LIMIT):
    bad = np.flatnonzero(~np.isfinite(values) | (values > limit))
    if bad.size == 0:
        return len(times), None
    return int(bad[0]), float(times[bad[0]])


def _volterra_grid(s: Setup) -> tuple[np.ndarray, int | None]:
    cfg = s.cfg
    J, dt = cfg.J, cfg.dt
    w = s.grid.weights
    v2 = s.deterministic**2
    coef = (cfg.lam * cfg.sigma.L_sigma) ** 2 * dt
    # K[l] = G(l dt, x, y)**2 * w_y for lags l = 1..J (row 0 unused)
    K = np.zeros((J + 1, s.grid.size, s.grid.size))
    for l in range(1, J + 1):
        G = (s.Phi * s.decay[l]) @ s.Phi.T
        K[l] = G * G * w[None, :]
    M = np.zeros_like(v2)
    M[0] = v2[0]
    for j in range(J):
        lags = np.arange(j + 1, 0, -1)
        acc = np.einsum("ixy,iy->x", K[lags], M[: j + 1])
        M[j + 1] = v2[j + 1] + coef * acc
        if not np.all(np.isfinite(M[j + 1])) or M[j + 1].max() > OVERFLOW_LIMIT:
            return M[: j + 2], j + 1
    return M, None


def _volterra_modes(s: Setup) -> tuple[np.ndarray, int | None]:
    cfg = s.cfg
    J, dt = cfg.J, cfg.dt
    Phi, E, a0 = s.Phi, s.decay, s.a0
    C = s.noise.cell_cov
    coef = (cfg.lam * cfg.sigma.L_sigma) ** 2 * dt
    N = s.basis.N
    S = np.zeros((J, N, N))
    diag = np.zeros((J + 1, s.grid.size))
    mean = E * a0
    A = np.outer(mean[0], mean[0])
    for j in range(J + 1):
        R = Phi @ A @ Phi.T
        diag[j] = np.diag(R)
        if not np.all(np.isfinite(diag[j])) or diag[j].max() > OVERFLOW_LIMIT:
            return diag[: j + 1], j
        if j == J:
            break
        S[j] = Phi.T @ (R * C) @ Phi
        lags = np.arange(j + 1, 0, -1)
        El = E[lags]
        A = np.outer(mean[j + 1], mean[j + 1]) + coef * np.einsum("in,ik,ink->nk", El, El, S[: j + 1])
    return diag, None


def second_moment_volterra(cfg: SimulationConfig, engine: str = "auto") -> MomentTrajectory:
    """Deterministic second moment for linear ``sigma``.

    ``engine="grid"`` iterates ``M(t, x)`` on the grid (white noise only);
    ``engine="modes"`` propagates the mode covariance ``E[a a^T]`` and
    handles colored noise, reporting the diagonal ``M(t, x, x)``.
    """
    if cfg.sigma.kind != "linear":
        raise ValueError("the closed second-moment equation needs linear sigma")
    s = cfg.setup()
    if engine == "auto":
        engine = "grid" if (cfg.noise is None and s.grid.size <= 256) else "modes"
    if engine == "grid":
        if cfg.noise is not None:
            raise ValueError("the grid engine only handles white noise")
        M, cut = _volterra_grid(s)
    elif engine == "modes":
        if s.grid.size > 1024:
            raise ValueError("mode engine limited to grids with at most 1024 points")
        M, cut = _volterra_modes(s)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    times = cfg.times[: M.shape[0]]
    sup = M.max(axis=1)
    overflow = None
    if cut is not None:
        times, sup, M = times[:cut], sup[:cut], M[:cut]
        overflow = float(cfg.times[cut])
    return MomentTrajectory(times, sup, None, "volterra", cfg.beta.value, cfg.lam, M, overflow,
                            {"engine": engine, "noise": cfg.noise_label()})


def first_mode_volterra(cfg: SimulationConfig) -> np.ndarray:
    """``E <u_t, phi_1>**2`` from the scalar recursion driven by the grid moments.

    ``m(t) = E_1(t)**2 <u0,phi_1>**2 + lam**2 c**2 int E_1(t-s)**2 int phi_1**2 M(s, y) dy ds``
    with the same left-point rule; ``M`` comes from the grid Volterra solver.
    """
    traj = second_moment_volterra(cfg, engine="grid")
    s = cfg.setup()
    phi1 = s.Phi[:, 0]
    w = s.grid.weights
    E1 = s.decay[:, 0]
    coef = (cfg.lam * cfg.sigma.L_sigma) ** 2 * cfg.dt
    forcing = traj.moments @ (w * phi1**2)
    m = np.empty(len(traj.times))
    for j in range(len(traj.times)):
        lags = np.arange(j, 0, -1)
        m[j] = (E1[j] * s.a0[0]) ** 2 + coef * np.sum(E1[lags] ** 2 * forcing[:j])
    return m


def resolution_check(cfg: SimulationConfig, tolerance: float = 0.05) -> tuple[float, bool]:
    """Relative change of the horizon value when ``J`` is doubled."""
    a = second_moment_volterra(cfg)
    b = second_moment_volterra(cfg.with_(J=2 * cfg.J))
    if a.overflow_time is not None or b.overflow_time is not None:
        return math.inf, False
    rel = abs(b.sup_moment[-1] - a.sup_moment[-1]) / abs(b.sup_moment[-1])
    if rel > tolerance:
        warnings.warn(f"time grid too coarse: doubling J changes the horizon moment by {rel:.1%}", stacklevel=2)
    return float(rel), bool(rel <= tolerance)


# -- Monte Carlo route -------------------------------------------------------------


@dataclass
class _Acc:
    """Per-(time, grid point) count, mean and centred sum of squares."""

    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, samples: np.ndarray) -> "_Acc":
        mean = samples.mean(axis=0)
        # identical samples (no noise) must give an exact mean and zero spread
        mean = np.where(np.all(samples == samples[:1], axis=0), samples[0], mean)
        return cls(samples.shape[0], mean, ((samples - mean) ** 2).sum(axis=0))

    def merge(self, other: "_Acc") -> "_Acc":
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.n * other.n / n)
        return _Acc(n, mean, m2)

    def stderr(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


def _run_chunk(setups: list[Setup], paths: range, observe, store: bool, check_sigma: bool):
    """Advance all ``setups`` (same grid and noise) on a block of paths with shared noise.

    ``observe(list_of_u)`` maps grid values at one time to samples to be
    averaged.  Returns ``(per-time samples, overflow_step or None, paths)``.
    """
    base = setups[0]
    cfg = base.cfg
    J, P, N = cfg.J, base.grid.size, base.basis.N
    xi = path_normals(cfg.seed, paths, J, P)
    n_paths = len(paths)
    hist = [np.zeros((J, n_paths, N)) for _ in setups]
    samples = []
    stored = [] if store else None
    for j in range(J + 1):
        us = []
        for k, s in enumerate(setups):
            a = np.broadcast_to(s.decay[j] * s.a0, (n_paths, N))
            if j > 0 and s.cfg.lam != 0.0:
                lags = np.arange(j, 0, -1)
                a = a + s.cfg.lam * np.einsum("in,ipn->pn", s.decay[lags], hist[k][:j])
            us.append(a @ s.Phi.T)
        bad = [np.flatnonzero(~np.all(np.isfinite(u) & (u * u <= OVERFLOW_LIMIT), axis=1)) for u in us]
        if any(b.size for b in bad):
            first = min(int(b[0]) for b in bad if b.size)
            return samples, (j, paths[first]), stored
        samples.append(observe(us))
        if store:
            stored.append(np.stack(us))
        if j == J:
            break
        for k, s in enumerate(setups):
            if s.cfg.lam == 0.0:
                continue
            sig = s.cfg.sigma(us[k])
            if check_sigma and not s.cfg.sigma.sandwich_holds(us[k]):
                raise SimulationError(f"sigma sandwich violated at step {j}")
            dF = sample_cell_increments(s.noise, cfg.dt, xi[:, j, :])
            hist[k][j] = (sig * dF) @ s.Phi
    return samples, None, stored


def _monte_carlo(setups: list[Setup], observe, workers: int, store: bool, check_sigma: bool):
    cfg = setups[0].cfg
    chunks = [range(a, min(a + CHUNK, cfg.paths)) for a in range(0, cfg.paths, CHUNK)]

    def job(r):
        return _run_chunk(setups, r, observe, store, check_sigma)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(job, chunks))
    else:
        results = [job(r) for r in chunks]
    overflow = min((res[1] for res in results if res[1] is not None), default=None)
    n_times = cfg.J + 1 if overflow is None else overflow[0]
    acc = None
    for samples, _, _ in results:
        part = _Acc.of(np.stack(samples[:n_times], axis=1))
        acc = part if acc is None else acc.merge(part)
    stored = None
    if store:
        stored = np.concatenate([np.stack(res[2][:n_times], axis=2) for res in results], axis=1)
    return acc, overflow, stored


def simulate_paths(cfg: SimulationConfig, workers: int = 1, store_paths: bool = False,
                   check_sigma: bool = False) -> MomentTrajectory:
    """Monte Carlo estimate of ``sup_x E|u_t(x)|**2``.

    Paths are processed in fixed blocks of ``CHUNK`` and reduced in block
    order, so the output is identical for any ``workers``.  Raises
    :class:`PathOverflowError` (with the partial trajectory attached) when a
    path blows up.  With ``store_paths`` the grid values are kept in
    ``info["paths"]`` with shape ``(paths, J+1, P)``.
    """
    s = cfg.setup()
    acc, overflow, stored = _monte_carlo([s], lambda us: us[0] ** 2, workers, store_paths, check_sigma)
    mean, se = acc.mean, acc.stderr()
    arg = np.argmax(mean, axis=1)
    rows = np.arange(mean.shape[0])
    times = cfg.times[: mean.shape[0]]
    info = {"noise": cfg.noise_label(), "argmax": arg, "field_stderr": se}
    if stored is not None:
        info["paths"] = stored[0]
    traj = MomentTrajectory(times, mean[rows, arg], se[rows, arg], "monte_carlo", cfg.beta.value, cfg.lam,
                            mean, None if overflow is None else float(cfg.times[overflow[0]]), info)
    if overflow is not None:
        step, path = overflow
        raise PathOverflowError(step, path, float(cfg.times[step]), traj)
    return traj


def coupled_beta_difference(cfgA: SimulationConfig, cfgB: SimulationConfig, p: float = 2.0,
                            workers: int = 1) -> DifferenceTable:
    """``sup_x E|u^(B) - u^(A)|**p`` with both orders driven by identical noise.

    ``cfgA`` carries the reference order ``beta``, ``cfgB`` the order ``gamma``.
    """
    if p < 2:
        raise ValueError("p must be at least 2")
    same = ("domain", "lam", "sigma", "noise", "u0", "T", "J", "N", "M", "paths", "seed")
    for name in same:
        if getattr(cfgA, name) != getattr(cfgB, name):
            raise ValueError(f"coupled runs need identical {name}")
    b, g = cfgA.beta.value, cfgB.beta.value
    for v in (b, g):
        if not 0.5 < v < 1.0:
            raise ValueError("coupled orders must lie in (1/2, 1)")
    d, alpha = cfgA.domain.dim, cfgA.domain.alpha
    if not d < 0.5 * min(1.0 / b, 1.0 / g) * alpha:
        raise ValueError("need d < (1/2) min(1/beta, 1/gamma) alpha")
    sA, sB = cfgA.setup(), cfgB.setup()
    acc, overflow, _ = _monte_carlo([sA, sB], lambda us: np.abs(us[1] - us[0]) ** p, workers, False, False)
    if overflow is not None:
        step, path = overflow
        raise PathOverflowError(step, path, float(cfgA.times[step]))
    mean, se = acc.mean, acc.stderr()
    arg = np.argmax(mean, axis=1)
    rows = np.arange(mean.shape[0])
    return DifferenceTable(cfgA.times, mean[rows, arg], se[rows, arg], float(p), b, g)
