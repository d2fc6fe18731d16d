"""Dirichlet eigenpairs on intervals and rectangular boxes.

The fractional operator is the spectral power of the Dirichlet Laplacian:
eigenfunctions are the usual tensor sines and eigenvalues are raised to
``alpha / 2``.  For ``alpha < 2`` this is not the generator of the killed
stable process, but it has the same ``n**(alpha/d)`` eigenvalue growth and
explicit eigenpairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

__all__ = [
    "DomainSpec",
    "SpectralBasis",
    "Grid",
    "WeylReport",
    "build_basis",
    "check_weyl",
    "gram_matrix",
    "parse_domain",
]


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    lengths: tuple[float, ...]
    alpha: float = 2.0

    def __post_init__(self):
        if self.kind not in ("interval", "box"):
            raise ValueError(f"unsupported domain kind {self.kind!r}")
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        if not lengths or any(not (v > 0 and math.isfinite(v)) for v in lengths):
            raise ValueError(f"domain lengths must be positive, got {self.lengths!r}")
        if self.kind == "interval" and len(lengths) != 1:
            raise ValueError("an interval takes exactly one length")
        if not 0.0 < float(self.alpha) <= 2.0:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "alpha", float(self.alpha))

    @classmethod
    def interval(cls, length: float = 1.0, alpha: float = 2.0) -> "DomainSpec":
        return cls("interval", (length,), alpha)

    @classmethod
    def box(cls, lengths, alpha: float = 2.0) -> "DomainSpec":
        return cls("box", tuple(lengths), alpha)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def label(self) -> str:
        return f"{self.kind}:" + "x".join(repr(v) for v in self.lengths)


def parse_domain(text: str, alpha: float = 2.0) -> DomainSpec:
    """Parse ``interval:L`` or ``box:L1xL2[x...]``."""
    kind, _, rest = text.strip().partition(":")
    kind = kind.strip().lower()
    if not rest:
        raise ValueError(f"domain needs lengths, e.g. 'interval:1.0', got {text!r}")
    if rest.strip().lower() == "pi":
        lengths = (math.pi,)
    else:
        lengths = tuple(math.pi if p.strip().lower() == "pi" else float(p) for p in rest.split("x"))
    if kind == "interval":
        return DomainSpec.interval(lengths[0], alpha) if len(lengths) == 1 else DomainSpec("interval", lengths, alpha)
    return DomainSpec.box(lengths, alpha)


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """First ``N`` Dirichlet eigenpairs of ``(-Laplacian)**(alpha/2)``.

    ``indices[n]`` holds the multi-index of the n-th mode (0-based row, 1-based
    sine frequencies).  ``eigenvalues`` are already raised to ``alpha/2``.
    """

    domain: DomainSpec
    indices: np.ndarray
    eigenvalues: np.ndarray
    laplace_eigenvalues: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.eigenvalues)

    @property
    def uniform_bound(self) -> float:
        """``sup_{n, x} |phi_n(x)|``, i.e. ``prod_i sqrt(2 / L_i)``."""
        return float(np.prod([math.sqrt(2.0 / L) for L in self.domain.lengths]))

    def evaluate(self, points) -> np.ndarray:
        """Eigenfunction matrix ``Phi[p, n] = phi_n(points[p])``."""
        pts = _as_points(points, self.domain.dim)
        out = np.ones((pts.shape[0], self.N))
        for axis, L in enumerate(self.domain.lengths):
            freq = self.indices[:, axis] * (math.pi / L)
            out *= math.sqrt(2.0 / L) * np.sin(np.outer(pts[:, axis], freq))
        return out

    def phi(self, n: int, points) -> np.ndarray:
        """Evaluate the single mode ``n`` (1-based) at ``points``."""
        if not 1 <= n <= self.N:
            raise IndexError(f"mode {n} outside 1..{self.N}")
        pts = _as_points(points, self.domain.dim)
        vals = np.ones(pts.shape[0])
        for axis, L in enumerate(self.domain.lengths):
            vals *= math.sqrt(2.0 / L) * np.sin(self.indices[n - 1, axis] * math.pi * pts[:, axis] / L)
        return vals

    def same_as(self, other: "SpectralBasis") -> bool:
        return (
            self is other
            or (
                self.domain == other.domain
                and self.N == other.N
                and np.array_equal(self.indices, other.indices)
            )
        )


def _as_points(points, dim: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if dim == 1:
        return pts.reshape(-1, 1)
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != dim:
        raise ValueError(f"points must have trailing dimension {dim}")
    return pts.reshape(-1, dim)


def _lattice(domain: DomainSpec, N: int) -> tuple[np.ndarray, np.ndarray]:
    d = domain.dim
    lengths = np.asarray(domain.lengths)
    if d == 1:
        idx = np.arange(1, N + 1).reshape(-1, 1)
        return idx, ((idx[:, 0] * math.pi / lengths[0]) ** 2)
    caps = np.full(d, int(math.ceil(N ** (1.0 / d))) + 5)
    while True:
        grids = [np.arange(1, c + 1) for c in caps]
        idx = np.array(list(product(*grids)))
        lap = np.sum((idx * (math.pi / lengths)) ** 2, axis=1)
        # ties (e.g. (1,2) vs (2,1) on a square) must compare equal
        key = np.round(lap / lap.min(), 9)
        order = np.lexsort(tuple(idx[:, a] for a in reversed(range(d))) + (key,))
        idx, lap = idx[order], lap[order]
        if len(lap) >= N:
            cutoff = lap[N - 1]
            # smallest eigenvalue not enumerated along each axis
            base = np.sum((math.pi / lengths) ** 2)
            missing = base + ((caps + 1) ** 2 - 1) * (math.pi / lengths) ** 2
            if np.all(missing > cutoff):
                return idx[:N], lap[:N]
            caps = np.where(missing <= cutoff, caps * 2, caps)
        else:
            caps = caps * 2


def build_basis(domain: DomainSpec, N: int) -> SpectralBasis:
    """Enumerate the first ``N`` eigenpairs by ascending eigenvalue.

    Ties are broken lexicographically on the multi-index.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    idx, lap = _lattice(domain, int(N))
    mu = lap ** (domain.alpha / 2.0)
    return SpectralBasis(domain, idx.astype(int), mu, lap)


@dataclass(frozen=True, eq=False)
class Grid:
    """Cell-centred tensor grid with ``M`` points per axis.

    Used both as the collocation grid of the solvers and as a midpoint rule;
    ``weights`` are cell volumes, ``spacing`` the per-axis cell widths.
    """

    domain: DomainSpec
    per_axis: int
    points: np.ndarray
    weights: np.ndarray
    spacing: tuple[float, ...]

    @classmethod
    def cell_centred(cls, domain: DomainSpec, M: int) -> "Grid":
        if int(M) != M or M < 1:
            raise ValueError(f"grid size must be a positive integer, got {M}")
        M = int(M)
        axes = [(np.arange(M) + 0.5) * (L / M) for L in domain.lengths]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        h = tuple(L / M for L in domain.lengths)
        w = np.full(pts.shape[0], float(np.prod(h)))
        return cls(domain, M, pts, w, h)

    @property
    def size(self) -> int:
        return self.points.shape[0]


def gram_matrix(basis: SpectralBasis, points_per_axis: int = 512) -> np.ndarray:
    """Inner products ``<phi_n, phi_k>`` by the composite trapezoid rule."""
    dom = basis.domain
    G = np.ones((basis.N, basis.N))
    # the tensor structure factorises the integral axis by axis
    for axis, L in enumerate(dom.lengths):
        x = np.linspace(0.0, L, points_per_axis + 1)
        w = np.full(x.size, L / points_per_axis)
        w[[0, -1]] *= 0.5
        S = math.sqrt(2.0 / L) * np.sin(np.outer(x, basis.indices[:, axis] * math.pi / L))
        G *= (S * w[:, None]).T @ S
    return G


@dataclass(frozen=True)
class WeylReport:
    exponent: float
    expected: float
    prefactor: float
    max_ratio_deviation: float
    passed: bool


def check_weyl(basis: SpectralBasis, tolerance: float = 0.10) -> WeylReport:
    """Fit ``mu_n ~ c n**e`` on a log scale and compare ``e`` with ``alpha/d``."""
    if basis.N < 20:
        raise ValueError("check_weyl needs at least 20 modes")
    n = np.arange(1, basis.N + 1)
    slope, intercept = np.polyfit(np.log(n), np.log(basis.eigenvalues), 1)
    expected = basis.domain.alpha / basis.domain.dim
    fit = np.exp(intercept) * n**slope
    ratio = basis.eigenvalues / fit
    dev = float(np.max(np.abs(ratio - 1.0)))
    passed = abs(slope - expected) <= tolerance * expected
    return WeylReport(float(slope), expected, float(np.exp(intercept)), dev, bool(passed))
