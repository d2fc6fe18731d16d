"""Fractional Dirichlet heat kernel and the quantities built from it.

``G(t, x, y) = sum_n E_beta(-mu_n t**beta) phi_n(x) phi_n(y)`` truncated to
the modes of a :class:`~fracspde.spectra.SpectralBasis`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .mlf import FractionalOrder, as_order, ml_neg
from .spectra import Grid, SpectralBasis

__all__ = [
    "HeatKernel",
    "InitialCondition",
    "KernelTimeBoundReport",
    "kernel_eval",
    "evolve",
    "lambda_theta",
    "time_integral_power",
    "check_kernel_time_bound",
    "kernel_series_partial_sums",
    "kernel_beta_continuity",
    "continuity_envelope",
]


@dataclass(frozen=True, eq=False)
class HeatKernel:
    basis: SpectralBasis
    beta: FractionalOrder

    def __init__(self, basis: SpectralBasis, beta):
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "beta", as_order(beta))
        object.__setattr__(self, "_cache", {})

    def mode_decay(self, t) -> np.ndarray:
        """``E_beta(-mu_n t**beta)`` with shape ``t.shape + (N,)``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("time must be nonnegative")
        b = self.beta.value
        return ml_neg(b, t[..., None] ** b * self.basis.eigenvalues)

    def decay_table(self, times) -> np.ndarray:
        """Cached :meth:`mode_decay` for a grid of times (rows follow ``times``)."""
        times = np.asarray(times, dtype=float)
        key = times.tobytes()
        table = self._cache.get(key)
        if table is None:
            table = self.mode_decay(times)
            table.setflags(write=False)
            self._cache[key] = table
        return table

    def matrix(self, t: float, x_points, y_points=None) -> np.ndarray:
        """``G(t, x_p, y_q)`` for all point pairs."""
        if not t > 0:
            raise ValueError("the kernel expansion needs t > 0")
        Px = self.basis.evaluate(x_points)
        Py = Px if y_points is None else self.basis.evaluate(y_points)
        return (Px * self.mode_decay(t)) @ Py.T


def kernel_eval(k: HeatKernel, t: float, x, y) -> float:
    """Truncated kernel value at a single pair of points."""
    if not t > 0:
        raise ValueError("the kernel expansion needs t > 0")
    px = k.basis.evaluate(x)[0]
    py = k.basis.evaluate(y)[0]
    # summing px*py first keeps G(t,x,y) == G(t,y,x) bit for bit
    return float(np.sum(k.mode_decay(t) * (px * py)))


@dataclass(frozen=True, eq=False)
class InitialCondition:
    """Initial datum represented by its mode coefficients ``<u0, phi_n>``.

    ``values`` keeps the grid samples when the datum came from a grid or a
    function, so the nonnegativity requirement can be checked.
    """

    coefficients: np.ndarray
    values: np.ndarray | None = None
    label: str = "custom"

    @classmethod
    def from_values(cls, values, grid: Grid, basis: SpectralBasis, label: str = "grid") -> "InitialCondition":
        vals = np.asarray(values, dtype=float).ravel()
        if vals.shape[0] != grid.size:
            raise ValueError("initial values must match the grid")
        if not np.all(np.isfinite(vals)):
            raise ValueError("initial condition must be bounded")
        if np.any(vals < 0):
            raise ValueError("initial condition must be nonnegative")
        if not np.any(vals > 0):
            raise ValueError("initial condition must not vanish identically")
        coeffs = basis.evaluate(grid.points).T @ (grid.weights * vals)
        return cls(coeffs, vals, label)

    @classmethod
    def from_function(cls, func, grid: Grid, basis: SpectralBasis, label: str = "function") -> "InitialCondition":
        pts = grid.points[:, 0] if grid.domain.dim == 1 else grid.points
        return cls.from_values(func(pts), grid, basis, label)

    @classmethod
    def from_modes(cls, coefficients) -> "InitialCondition":
        c = np.asarray(coefficients, dtype=float).ravel()
        if not np.any(c != 0):
            raise ValueError("initial condition must not vanish identically")
        return cls(c, None, "modes")

    @classmethod
    def sine(cls, grid: Grid, basis: SpectralBasis, amplitude: float = 1.0) -> "InitialCondition":
        """``amplitude * prod_i sin(pi x_i / L_i)``, a multiple of the ground state."""
        vals = np.full(grid.size, float(amplitude))
        for axis, L in enumerate(grid.domain.lengths):
            vals *= np.sin(math.pi * grid.points[:, axis] / L)
        return cls.from_values(vals, grid, basis, "sine")

    @classmethod
    def constant(cls, grid: Grid, basis: SpectralBasis, value: float = 1.0) -> "InitialCondition":
        return cls.from_values(np.full(grid.size, float(value)), grid, basis, "constant")

    def modes(self, N: int) -> np.ndarray:
        c = np.zeros(N)
        m = min(N, self.coefficients.size)
        c[:m] = self.coefficients[:m]
        return c


def evolve(k: HeatKernel, u0: InitialCondition, t, points) -> np.ndarray:
    """Deterministic solution ``v_t`` at ``points``.

    ``t`` may be a scalar (result shape ``(P,)``) or an array of times
    (result shape ``(len(t), P)``).  ``t = 0`` gives the N-mode projection.
    """
    Phi = k.basis.evaluate(points)
    c = u0.modes(k.basis.N)
    decay = k.mode_decay(t)
    return (decay * c) @ Phi.T


# -- Lambda(theta) -------------------------------------------------------------


def _log_panels(t0: float, t1: float, per_decade: int = 4) -> np.ndarray:
    decades = max(math.log10(t1 / t0), 1e-12)
    return np.logspace(math.log10(t0), math.log10(t1), max(2, int(math.ceil(decades * per_decade)) + 1))


def lambda_theta(beta, mu1: float, theta: float, rtol: float = 1e-8) -> float:
    """``Lambda(theta) = int_0^inf exp(-theta t) E_beta(-mu1 t**beta)**2 dt``.

    The integral is split at ``t = 1``: ``[0, 1]`` directly, ``[1, Tc]`` on
    logarithmic panels, and ``Tc`` is chosen so that the tail, bounded with
    ``E_beta(-x) <= Gamma(1+beta)/x``, is below ``rtol`` of the total.
    """
    b = as_order(beta).value
    if not theta > 0:
        raise ValueError("theta must be positive")
    if not mu1 > 0:
        raise ValueError("mu1 must be positive")

    def f(t):
        return math.exp(-theta * t) * ml_neg(b, mu1 * t**b) ** 2

    head = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=rtol * 0.1, limit=200)[0]
    c = (math.gamma(1.0 + b) / mu1) ** 2 if b < 1 else 1.0 / mu1**2

    def tail_bound(T):
        # int_T^inf e^{-theta t} c t^{-2b} dt <= c T^{-2b} e^{-theta T} / theta
        return c * T ** (-2 * b) * math.exp(-theta * T) / theta

    Tc = max(2.0, 1.0 / theta)
    while tail_bound(Tc) > 0.1 * rtol * head:
        Tc *= 2.0
    edges = _log_panels(1.0, Tc)
    body = 0.0
    for a, z in zip(edges[:-1], edges[1:]):
        body += integrate.quad(f, a, z, epsabs=0.0, epsrel=rtol * 0.1, limit=200)[0]
    return head + body


# -- time-integral bounds ------------------------------------------------------


def time_integral_power(beta, p: float, mu: float, t: float) -> float:
    """``int_0^t E_beta(-mu (t - s)**beta)**p ds`` by adaptive quadrature."""
    b = as_order(beta).value
    if not (mu > 0 and t > 0):
        raise ValueError("mu and t must be positive")

    def f(r):
        return ml_neg(b, mu * r**b) ** p

    # the integrand relaxes on the time scale mu**(-1/b)
    scale = mu ** (-1.0 / b)
    lo = min(scale * 1e-3, t)
    edges = [0.0] + list(_log_panels(lo, t, per_decade=3)) if lo < t else [0.0, t]
    total = 0.0
    for a, z in zip(edges[:-1], edges[1:]):
        total += integrate.quad(f, a, z, epsabs=0.0, epsrel=1e-10, limit=200)[0]
    return total


@dataclass(frozen=True)
class KernelTimeBoundReport:
    beta: float
    p: float
    mu: np.ndarray
    times: np.ndarray
    integrals: np.ndarray  #: shape (len(times), len(mu))
    ratios: np.ndarray  #: integrals * mu**(1/beta)
    bound: float
    max_ratio: float
    passed: bool


def check_kernel_time_bound(beta, p: float, mu_list, times=(1.0, 10.0, 100.0)) -> KernelTimeBoundReport:
    """Check ``int_0^t E_beta(-mu (t-s)**beta)**p ds <= K mu**(-1/beta)``.

    The constant is the one obtained from the upper Mittag-Leffler bound,
    ``K = Gamma(1+beta)**(1/beta) * p beta / (p beta - 1)``, which holds for
    every ``mu`` and every ``t``.
    """
    b = as_order(beta, allow_classical=False).value
    if p < 2:
        raise ValueError("p must be at least 2")
    if not b > 1.0 / p:
        raise ValueError(f"need beta > 1/p, got beta={b}, p={p}")
    mu = np.asarray(mu_list, dtype=float)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    I = np.array([[time_integral_power(b, p, m, t) for m in mu] for t in times])
    ratios = I * mu ** (1.0 / b)
    bound = math.gamma(1.0 + b) ** (1.0 / b) * p * b / (p * b - 1.0)
    mx = float(ratios.max())
    return KernelTimeBoundReport(b, p, mu, times, I, ratios, bound, mx, bool(mx <= bound * (1 + 1e-9)))


def kernel_series_partial_sums(beta, p: float, mu_list, t: float) -> np.ndarray:
    """Cumulative sums ``S_N = sum_{n<=N} int_0^t E_beta(-mu_n (t-s)**beta)**p ds``."""
    b = as_order(beta, allow_classical=False).value
    if not b > 1.0 / p:
        raise ValueError(f"need beta > 1/p, got beta={b}, p={p}")
    terms = np.array([time_integral_power(b, p, m, t) for m in np.asarray(mu_list, dtype=float)])
    return np.cumsum(terms)


# -- continuity in beta --------------------------------------------------------


def kernel_beta_continuity(kA: HeatKernel, kB: HeatKernel, t: float, points=None) -> float:
    """``sup_{x,y} |G^(gamma)(t,x,y) - G^(beta)(t,x,y)|`` over grid point pairs."""
    if not kA.basis.same_as(kB.basis):
        raise ValueError("kernels must share the same spectral basis")
    if not t > 0:
        raise ValueError("t must be positive")
    if points is None:
        points = Grid.cell_centred(kA.basis.domain, 32).points
    Phi = kA.basis.evaluate(points)
    diff = kA.mode_decay(t) - kB.mode_decay(t)
    return float(np.max(np.abs((Phi * diff) @ Phi.T)))


def continuity_envelope(kA: HeatKernel, kB: HeatKernel, t: float) -> float:
    """``2 C(B)**2 max(1, 1/t) sum_n 1/mu_n`` over the retained modes."""
    C = kA.basis.uniform_bound
    return 2.0 * C**2 * max(1.0, 1.0 / t) * float(np.sum(1.0 / kA.basis.eigenvalues))
