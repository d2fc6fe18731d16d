"""Spatial structure of the driving noise.

Space-time white noise and noise that is white in time with spatial
covariance ``f(x, y)``.  Everything downstream works with the noise
integrated over the cells of a :class:`~fracspde.spectra.Grid`:

``C[m, l] = int_{cell m} int_{cell l} f(y, z) dy dz``

is the covariance (per unit time) of the cell increments, so for white noise
``C = diag(cell volumes)``.  The mode covariance is ``Q = Phi^T C Phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectra import Grid, SpectralBasis

__all__ = [
    "CovKernel",
    "NoiseModel",
    "SingularPointError",
    "FactorizationError",
    "KERNEL_KINDS",
    "cov_eval",
    "cell_covariance",
    "mode_covariance",
    "factorize_psd",
    "psd_sqrt",
    "white_noise",
    "colored_noise",
    "sample_mode_increments",
    "sample_cell_increments",
    "kernel_infimum",
    "total_mass",
    "riesz_mass_interval",
    "parse_kernel",
]

KERNEL_KINDS = ("riesz", "exponential_type", "ornstein_uhlenbeck", "poisson", "cauchy", "constant")


class SingularPointError(ValueError):
    """Raised when a singular kernel is evaluated on its diagonal."""


class FactorizationError(np.linalg.LinAlgError):
    """The covariance could not be factorised even after maximal jitter."""


@dataclass(frozen=True)
class CovKernel:
    """Spatial covariance kernel.

    ``gamma`` is the Riesz exponent, ``delta`` the Ornstein-Uhlenbeck power
    and ``c`` the level of the ``constant`` kernel (a test fixture).
    """

    kind: str
    gamma: float | None = None
    delta: float | None = None
    c: float | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        if self.kind == "riesz":
            if self.gamma is None or not self.gamma > 0:
                raise ValueError("riesz kernel needs gamma > 0")
        if self.kind == "ornstein_uhlenbeck":
            if self.delta is None or not 0 < self.delta <= 2:
                raise ValueError("ornstein_uhlenbeck kernel needs delta in (0, 2]")
        if self.kind == "constant":
            if self.c is None or not self.c > 0:
                raise ValueError("constant kernel needs c > 0")

    @property
    def singular(self) -> bool:
        return self.kind == "riesz"

    def validate_for(self, dim: int, alpha: float) -> None:
        """Riesz exponents must satisfy ``gamma < min(d, alpha)``."""
        if self.kind == "riesz" and not self.gamma < min(dim, alpha):
            raise ValueError(f"riesz exponent must be < min(d, alpha) = {min(dim, alpha)}, got {self.gamma}")

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim == 0:
            x = x[None]
        if y.ndim == 0:
            y = y[None]
        diff = x - y
        kind = self.kind
        if kind == "riesz":
            r = np.sqrt(np.sum(diff**2, axis=-1))
            if np.any(r == 0):
                raise SingularPointError("riesz kernel is singular on the diagonal x == y")
            return r ** (-self.gamma)
        if kind == "exponential_type":
            return np.exp(-np.sum(x * y, axis=-1))
        if kind == "ornstein_uhlenbeck":
            r = np.sqrt(np.sum(diff**2, axis=-1))
            return np.exp(-(r**self.delta))
        if kind == "poisson":
            d = diff.shape[-1]
            return (1.0 / (np.sum(diff**2, axis=-1) + 1.0)) ** ((d + 1) / 2.0)
        if kind == "cauchy":
            return np.sum(1.0 / (1.0 + diff**2), axis=-1)
        return np.full(np.broadcast(x[..., 0], y[..., 0]).shape, float(self.c))

    def label(self) -> str:
        if self.kind == "riesz":
            return f"riesz:{self.gamma!r}"
        if self.kind == "ornstein_uhlenbeck":
            return f"ornstein_uhlenbeck:{self.delta!r}"
        if self.kind == "constant":
            return f"constant:{self.c!r}"
        return self.kind


def parse_kernel(text: str) -> CovKernel:
    """``riesz:0.5``, ``ornstein_uhlenbeck:1.5``, ``constant:2``, ``poisson`` ..."""
    kind, _, arg = text.strip().partition(":")
    kind = kind.strip().lower().replace("-", "_")
    aliases = {"ou": "ornstein_uhlenbeck", "exponential": "exponential_type"}
    kind = aliases.get(kind, kind)
    val = float(arg) if arg else None
    if kind == "riesz":
        return CovKernel(kind, gamma=val)
    if kind == "ornstein_uhlenbeck":
        return CovKernel(kind, delta=val)
    if kind == "constant":
        return CovKernel(kind, c=val)
    return CovKernel(kind)


def cov_eval(k: CovKernel, x, y) -> float:
    """Kernel value at one pair of points."""
    return float(np.asarray(k(x, y)).ravel()[0])


# -- cell averages ---------------------------------------------------------------


def _riesz_antiderivative(s: np.ndarray, g: float) -> np.ndarray:
    # second antiderivative of |s|^-g
    return np.abs(s) ** (2.0 - g) / ((1.0 - g) * (2.0 - g))


def _riesz_cells_1d(edges: np.ndarray, g: float) -> np.ndarray:
    a = edges[:-1]
    b = edges[1:]
    H = lambda s: _riesz_antiderivative(s, g)  # noqa: E731
    return (
        H(b[:, None] - a[None, :])
        - H(a[:, None] - a[None, :])
        - H(b[:, None] - b[None, :])
        + H(a[:, None] - b[None, :])
    )


def _staggered_offsets(k: int, h: float) -> np.ndarray:
    return (np.arange(k) + 0.5) * (h / k) - 0.5 * h


def cell_covariance(kernel: CovKernel, grid: Grid, sub: int = 4) -> np.ndarray:
    """Cell-integrated covariance ``C[m, l]`` on ``grid``.

    The 1-d Riesz kernel is integrated exactly.  Smooth kernels use the same
    ``sub``-point product midpoint rule in both cells, which keeps ``C``
    positive semidefinite.  A singular kernel in higher dimension gets ``sub``
    and ``sub + 1`` points for the two cells; those rules never share a node,
    so the diagonal is never sampled.
    """
    dim = grid.domain.dim
    if kernel.kind == "riesz" and dim == 1:
        if not kernel.gamma < 1:
            raise ValueError("1-d riesz kernel needs gamma < 1 to be integrable")
        L = grid.domain.lengths[0]
        edges = np.linspace(0.0, L, grid.per_axis + 1)
        return _riesz_cells_1d(edges, kernel.gamma)
    P = grid.size
    h = np.asarray(grid.spacing)
    offs_a = np.stack(np.meshgrid(*[_staggered_offsets(sub, hi) for hi in h], indexing="ij"), -1).reshape(-1, dim)
    sub_b = sub + 1 if kernel.singular else sub
    offs_b = np.stack(np.meshgrid(*[_staggered_offsets(sub_b, hi) for hi in h], indexing="ij"), -1).reshape(-1, dim)
    C = np.zeros((P, P))
    for oa in offs_a:
        ya = grid.points + oa
        for ob in offs_b:
            zb = grid.points + ob
            C += kernel(ya[:, None, :], zb[None, :, :])
    C *= (grid.weights[:, None] * grid.weights[None, :]) / (len(offs_a) * len(offs_b))
    return 0.5 * (C + C.T)


def factorize_psd(Q: np.ndarray, start: float = 1e-12, stop: float = 1e-8) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``Q``, adding diagonal jitter if needed.

    Jitter starts at ``start * trace(Q) / n`` and grows tenfold up to
    ``stop * trace(Q) / n``.  Returns ``(L, jitter)``.
    """
    n = Q.shape[0]
    scale = float(np.trace(Q)) / n
    try:
        return np.linalg.cholesky(Q), 0.0
    except np.linalg.LinAlgError:
        pass
    eps = start
    while eps <= stop * (1 + 1e-12):
        jit = eps * scale
        try:
            return np.linalg.cholesky(Q + jit * np.eye(n)), jit
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise FactorizationError(f"covariance is not positive semidefinite (jitter up to {stop:g} trace/N failed)")


def psd_sqrt(C: np.ndarray) -> np.ndarray:
    """Square root ``S`` with ``S S^T = C`` from the eigendecomposition.

    Smooth kernels give cell covariances of very low numerical rank, where
    Cholesky fails even with jitter; tiny negative eigenvalues are clipped.
    """
    w, V = np.linalg.eigh(0.5 * (C + C.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def mode_covariance(kernel: CovKernel | None, basis: SpectralBasis, grid: Grid | None = None) -> np.ndarray:
    """``Q[n, k] = int int phi_n(y) f(y, z) phi_k(z) dy dz`` on ``grid``.

    ``kernel=None`` stands for white noise (``f`` a delta), giving the Gram
    matrix of the modes on the grid.
    """
    if grid is None:
        grid = Grid.cell_centred(basis.domain, 64 if basis.domain.dim == 1 else 24)
    Phi = basis.evaluate(grid.points)
    if kernel is None:
        return (Phi * grid.weights[:, None]).T @ Phi
    return Phi.T @ cell_covariance(kernel, grid) @ Phi


def kernel_infimum(kernel: CovKernel, domain, per_axis: int = 33) -> float:
    """Infimum of ``f`` over pairs of a closed tensor lattice (diagonal skipped)."""
    axes = [np.linspace(0.0, L, per_axis) for L in domain.lengths]
    pts = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    X = pts[:, None, :]
    Y = pts[None, :, :]
    if kernel.singular:
        mask = ~np.eye(len(pts), dtype=bool)
        vals = kernel(np.broadcast_to(X, (len(pts), len(pts), pts.shape[1]))[mask],
                      np.broadcast_to(Y, (len(pts), len(pts), pts.shape[1]))[mask])
    else:
        vals = kernel(X, Y)
    return float(np.min(vals))


def total_mass(kernel: CovKernel, grid: Grid) -> float:
    """``int_B int_B f`` as the sum of the cell covariance."""
    return float(np.sum(cell_covariance(kernel, grid)))


def riesz_mass_interval(gamma: float, L: float) -> float:
    """Closed form ``2 L**(2-gamma) / ((1-gamma)(2-gamma))`` on ``[0, L]**2``."""
    return 2.0 * L ** (2.0 - gamma) / ((1.0 - gamma) * (2.0 - gamma))


# -- noise model -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Noise structure discretised on a grid and projected on a basis.

    ``cell_cov`` and ``cell_factor`` describe the cell increments (per unit
    time); ``mode_cov``/``mode_cov_factor`` the projection on the modes.
    """

    structure: str
    kernel: CovKernel | None
    grid: Grid
    basis: SpectralBasis
    cell_cov: np.ndarray
    cell_factor: np.ndarray | None
    mode_cov: np.ndarray
    mode_cov_factor: np.ndarray
    K_f: float | None

    @property
    def is_white(self) -> bool:
        return self.structure == "white"

    def label(self) -> str:
        return "white" if self.is_white else self.kernel.label()


def white_noise(basis: SpectralBasis, grid: Grid) -> NoiseModel:
    C = np.diag(grid.weights)
    Q = np.eye(basis.N)
    return NoiseModel("white", None, grid, basis, C, None, Q, Q.copy(), None)


def colored_noise(kernel: CovKernel, basis: SpectralBasis, grid: Grid) -> NoiseModel:
    kernel.validate_for(basis.domain.dim, basis.domain.alpha)
    C = cell_covariance(kernel, grid)
    lo, hi = np.linalg.eigvalsh(C)[[0, -1]]
    if lo < -1e-8 * hi:
        raise FactorizationError(
            f"{kernel.label()} is not positive semidefinite on this grid (eigenvalue {lo:.3g}); "
            "it cannot serve as a noise covariance"
        )
    Lc = psd_sqrt(C)
    Phi = basis.evaluate(grid.points)
    Q = Phi.T @ C @ Phi
    Q = 0.5 * (Q + Q.T)
    Lq, _ = factorize_psd(Q)
    kf = kernel_infimum(kernel, basis.domain)
    return NoiseModel("colored", kernel, grid, basis, C, Lc, Q, Lq, kf)


def sample_mode_increments(model: NoiseModel, dt: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Mode projections ``<phi_n, dW>`` over a step of length ``dt``.

    White noise gives iid ``N(0, dt)``; colored noise has covariance ``Q dt``.
    With ``size`` the result gets leading shape ``size``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    shape = (model.basis.N,) if size is None else tuple(np.atleast_1d(size)) + (model.basis.N,)
    z = rng.standard_normal(shape)
    if model.is_white:
        return math.sqrt(dt) * z
    return math.sqrt(dt) * z @ model.mode_cov_factor.T


def sample_cell_increments(model: NoiseModel, dt: float, xi: np.ndarray) -> np.ndarray:
    """Turn iid standard normals ``xi[..., M]`` into cell noise increments."""
    if model.is_white:
        return xi * np.sqrt(dt * model.grid.weights)
    return math.sqrt(dt) * xi @ model.cell_factor.T
