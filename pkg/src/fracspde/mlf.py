"""Gamma and Mittag-Leffler evaluation on the negative real axis.

Only ``E_beta(-x)`` with ``x >= 0`` and ``0 < beta <= 1`` is needed by the
rest of the package.  Three regimes are used:

* the defining power series while ``x**(1/beta)`` is small, where the
  alternating sum loses at most a couple of digits;
* the algebraic asymptotic series ``sum_k (-1)**(k+1) x**-k / Gamma(1 - beta k)``
  once its terms shrink below double precision before they start to grow;
* in between, the Laplace-type representation

  .. math::

      E_\\beta(-x) = \\frac{\\sin\\beta\\pi}{\\beta\\pi}
          \\int_0^\\infty \\frac{x\\, e^{-w^{1/\\beta}}}
          {w^2 + 2 w x \\cos\\beta\\pi + x^2}\\, dw ,

  integrated adaptively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

__all__ = [
    "FractionalOrder",
    "MLBounds",
    "gamma",
    "ml_neg",
    "ml_bounds",
    "subordinator_density_half",
    "subordinator_check_half",
    "subordinator_laplace_half",
    "subordinator_mass_half",
    "SERIES_SWITCH",
]

#: the power series is used while ``x**(1/beta) <= SERIES_SWITCH``
SERIES_SWITCH = 1.5

_TINY = 1e-17


@dataclass(frozen=True)
class FractionalOrder:
    """Order of the Caputo time derivative, strictly inside (0, 1).

    Use :meth:`classical` for the ``beta = 1`` limit, which is only meant for
    cross-checks against the ordinary heat equation.
    """

    value: float
    allow_classical: bool = False

    def __post_init__(self):
        v = float(self.value)
        if not math.isfinite(v):
            raise ValueError(f"fractional order must be finite, got {self.value!r}")
        if self.allow_classical:
            if not 0.0 < v <= 1.0:
                raise ValueError(f"fractional order must lie in (0, 1], got {v}")
        elif not 0.0 < v < 1.0:
            raise ValueError(f"fractional order must lie strictly in (0, 1), got {v}")
        object.__setattr__(self, "value", v)

    @classmethod
    def classical(cls) -> "FractionalOrder":
        return cls(1.0, allow_classical=True)

    @property
    def is_classical(self) -> bool:
        return self.value == 1.0

    def __float__(self) -> float:
        return self.value

    def __repr__(self) -> str:
        return f"FractionalOrder({self.value!r})"


@dataclass(frozen=True)
class MLBounds:
    lower: float
    upper: float

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack


def as_order(beta, allow_classical: bool = True) -> FractionalOrder:
    """Coerce a float or :class:`FractionalOrder` into a validated order."""
    if isinstance(beta, FractionalOrder):
        if beta.is_classical and not allow_classical:
            raise ValueError("beta = 1 is not admissible here")
        return beta
    v = float(beta)
    if v == 1.0:
        if not allow_classical:
            raise ValueError("beta = 1 is not admissible here")
        return FractionalOrder.classical()
    return FractionalOrder(v)


def gamma(x: float) -> float:
    """Gamma function for positive real arguments."""
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"gamma is only provided for x > 0, got {x}")
    return math.gamma(x)


def _series(beta: float, x: float) -> float:
    logx = math.log(x)
    total = 1.0
    k = 1
    prev = math.inf
    while True:
        logterm = k * logx - math.lgamma(1.0 + beta * k)
        mag = math.exp(logterm)
        total += -mag if k % 2 else mag
        if mag < _TINY * abs(total) and logterm < prev:
            return total
        prev = logterm
        k += 1
        if k > 5000:  # pragma: no cover - unreachable inside the series window
            raise RuntimeError("Mittag-Leffler series failed to converge")


def _asymptotic(beta: float, x: float) -> float | None:
    """Algebraic expansion; ``None`` if it cannot reach double precision."""
    logx = math.log(x)
    total = 0.0
    prev = math.inf
    for k in range(1, 400):
        z = beta * k
        logenv = math.lgamma(z) - k * logx - math.log(math.pi)
        # 1/Gamma(1 - z) = Gamma(z) sin(pi z) / pi
        term = math.exp(logenv) * math.sin(math.pi * z)
        total += term if k % 2 else -term
        if total != 0.0 and logenv < math.log(_TINY * abs(total)):
            return total
        if logenv > prev:
            return None
        prev = logenv
    return None


def _integral(beta: float, x: float) -> float:
    c = math.cos(beta * math.pi)
    sn = math.sin(beta * math.pi)
    inv = 1.0 / beta

    def f(w):
        # w^2 + 2 w x cos + x^2 written as a sum of squares so it never rounds to 0
        return math.exp(-(w**inv)) * x / ((w + x * c) ** 2 + (x * sn) ** 2)

    upper = 60.0**beta
    peak = -x * c
    pts = [peak] if 0.0 < peak < upper else None
    val, _ = integrate.quad(f, 0.0, upper, points=pts, epsabs=0.0, epsrel=1e-13, limit=400)
    return sn / (beta * math.pi) * val


@lru_cache(maxsize=1 << 17)
def _ml_scalar(beta: float, x: float) -> float:
    if x == 0.0:
        return 1.0
    if beta == 1.0:
        return math.exp(-x)
    if x ** (1.0 / beta) <= SERIES_SWITCH:
        return _series(beta, x)
    asym = _asymptotic(beta, x)
    if asym is not None:
        return asym
    return _integral(beta, x)


def ml_neg(beta, x):
    """Evaluate ``E_beta(-x)`` for ``x >= 0``.

    ``x`` may be a scalar or an array; the result mirrors its shape.
    """
    b = as_order(beta).value
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(~np.isfinite(arr)):
        raise ValueError("ml_neg expects finite x >= 0")
    if arr.ndim == 0:
        return _ml_scalar(b, float(arr))
    out = np.empty(arr.shape)
    flat = arr.ravel()
    res = out.ravel()
    for i, xi in enumerate(flat):
        res[i] = _ml_scalar(b, float(xi))
    return out


def ml_bounds(beta, x: float) -> MLBounds:
    """Two-sided rational envelope of ``E_beta(-x)`` valid for ``0 < beta < 1``."""
    b = as_order(beta, allow_classical=False).value
    x = float(x)
    if x < 0:
        raise ValueError("ml_bounds expects x >= 0")
    lower = 1.0 / (1.0 + math.gamma(1.0 - b) * x)
    upper = 1.0 / (1.0 + x / math.gamma(1.0 + b))
    return MLBounds(lower, upper)


# -- beta = 1/2 subordination ------------------------------------------------


def _stable_half_density(u: float) -> float:
    # density of D_1 for the 1/2-stable subordinator (Levy distribution)
    if u <= 0.0:
        return 0.0
    return u**-1.5 * math.exp(-1.0 / (4.0 * u)) / (2.0 * math.sqrt(math.pi))


def subordinator_density_half(t: float, s: float) -> float:
    """Density ``f_t(s)`` of the inverse 1/2-stable subordinator at time ``t``."""
    t = float(t)
    s = float(s)
    if t <= 0 or s <= 0:
        raise ValueError("subordinator density needs t > 0 and s > 0")
    beta = 0.5
    return t / beta * s ** (-1.0 - 1.0 / beta) * _stable_half_density(t * s ** (-1.0 / beta))


subordinator_check_half = subordinator_density_half


def _half_line_quad(func, scale: float) -> float:
    # the density is a half-normal of width ~ sqrt(t); split so quad sees the bulk
    edges = [0.0, scale, 4 * scale, 16 * scale, 64 * scale]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(func, a, b, epsabs=1e-15, epsrel=1e-12, limit=200)[0]
    total += integrate.quad(func, edges[-1], np.inf, epsabs=1e-15, limit=200)[0]
    return total


def subordinator_mass_half(t: float) -> float:
    """Quadrature of ``f_t`` over the half line (should be 1)."""
    return _half_line_quad(lambda s: subordinator_density_half(t, s) if s > 0 else 0.0, math.sqrt(t))


def subordinator_laplace_half(t: float, lam: float) -> float:
    """Quadrature of the Laplace transform ``int e^{-lam s} f_t(s) ds``."""
    if lam < 0:
        raise ValueError("Laplace variable must be nonnegative")
    return _half_line_quad(
        lambda s: math.exp(-lam * s) * subordinator_density_half(t, s) if s > 0 else 0.0,
        math.sqrt(t),
    )
