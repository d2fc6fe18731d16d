import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from fracspde.noise import (
    CovKernel,
    FactorizationError,
    SingularPointError,
    cell_covariance,
    colored_noise,
    cov_eval,
    factorize_psd,
    kernel_infimum,
    mode_covariance,
    parse_kernel,
    riesz_mass_interval,
    sample_mode_increments,
    total_mass,
    white_noise,
)
from fracspde.spectra import DomainSpec, Grid, build_basis

UNIT = DomainSpec.interval(1.0)
SHIPPED = ["riesz:0.5", "exponential_type", "ornstein_uhlenbeck:1", "poisson", "cauchy"]


def test_cov_eval_examples():
    assert cov_eval(parse_kernel("riesz:0.5"), [0.0], [4.0]) == pytest.approx(0.5)
    assert cov_eval(parse_kernel("cauchy"), [0.0], [1.0]) == pytest.approx(0.5)
    assert cov_eval(parse_kernel("ornstein_uhlenbeck:2"), [0.0], [1.0]) == pytest.approx(math.exp(-1))


def test_riesz_diagonal_is_singular():
    with pytest.raises(SingularPointError):
        cov_eval(parse_kernel("riesz:0.5"), [0.3], [0.3])


def test_kernel_parameter_validation():
    with pytest.raises(ValueError):
        CovKernel("ornstein_uhlenbeck", delta=2.5)
    with pytest.raises(ValueError):
        CovKernel("gaussian")
    with pytest.raises(ValueError):
        parse_kernel("riesz:1.2").validate_for(1, 2.0)  # gamma < min(d, alpha)


def test_riesz_mass_against_2d_quadrature():
    g = 0.5
    # the singular line x = y is handled by splitting the square along it
    f = lambda y, x: abs(x - y) ** (-g)
    lower = integrate.dblquad(f, 0, 1, 0, lambda x: x, epsabs=1e-10)[0]
    upper = integrate.dblquad(f, 0, 1, lambda x: x, 1, epsabs=1e-10)[0]
    assert lower + upper == pytest.approx(8 / 3, abs=1e-6)
    assert riesz_mass_interval(g, 1.0) == pytest.approx(8 / 3, rel=1e-14)
    assert total_mass(parse_kernel("riesz:0.5"), Grid.cell_centred(UNIT, 64)) == pytest.approx(8 / 3, abs=1e-3)


def test_constant_kernel_rank_one():
    b = build_basis(UNIT, 8)
    g = Grid.cell_centred(UNIT, 64)
    Q = mode_covariance(CovKernel("constant", c=2.0), b, g)
    ones = b.evaluate(g.points).T @ g.weights
    assert np.allclose(Q, 2.0 * np.outer(ones, ones), atol=1e-12)
    assert np.linalg.matrix_rank(Q, tol=1e-10) == 1


def test_white_mode_covariance_identity():
    for dom in (UNIT, DomainSpec.box((1.0, 2.0))):
        b = build_basis(dom, 12)
        g = Grid.cell_centred(dom, 32)
        assert np.allclose(mode_covariance(None, b, g), np.eye(12), atol=1e-12)


COVARIANCES = [s for s in SHIPPED if s != "exponential_type"]


def test_exponential_type_is_not_a_covariance():
    k = parse_kernel("exponential_type")
    two = np.array([[cov_eval(k, [a], [b]) for b in (0.0, 1.0)] for a in (0.0, 1.0)])
    assert np.linalg.det(two) < 0
    b = build_basis(UNIT, 8)
    g = Grid.cell_centred(UNIT, 32)
    Q = mode_covariance(k, b, g)
    assert np.max(np.abs(Q - Q.T)) < 1e-12
    assert kernel_infimum(k, UNIT) > 0
    with pytest.raises(FactorizationError):
        colored_noise(k, b, g)


@pytest.mark.parametrize("spec", COVARIANCES)
def test_shipped_kernels_symmetric_psd_and_positive(spec):
    k = parse_kernel(spec)
    b = build_basis(UNIT, 16)
    g = Grid.cell_centred(UNIT, 64)
    C = cell_covariance(k, g)
    Phi = b.evaluate(g.points)
    Q = Phi.T @ C @ Phi
    assert np.max(np.abs(Q - Q.T)) < 1e-12
    model = colored_noise(k, b, g)
    assert model.K_f > 0
    L = model.mode_cov_factor
    assert np.max(np.abs(L @ L.T - model.mode_cov)) < 1e-8
    assert np.allclose(L, np.tril(L))


def test_kernel_infimum_on_box():
    for spec in SHIPPED:
        assert kernel_infimum(parse_kernel(spec), DomainSpec.box((1.0, 1.0))) > 0


def test_riesz_refinement_converges():
    k = parse_kernel("riesz:0.5")
    b = build_basis(UNIT, 8)
    q = [mode_covariance(k, b, Grid.cell_centred(UNIT, M)) for M in (512, 1024)]
    assert np.max(np.abs(q[1] - q[0])) < 1e-4


def test_jitter_repair_and_failure():
    Q = np.array([[1.0, 1.0], [1.0, 1.0 - 1e-13]])
    L, jit = factorize_psd(Q)
    assert jit > 0
    assert np.allclose(L @ L.T, Q, atol=1e-8)
    with pytest.raises(FactorizationError):
        factorize_psd(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_white_increment_statistics():
    b = build_basis(UNIT, 4)
    model = white_noise(b, Grid.cell_centred(UNIT, 16))
    dt, n = 0.01, 100_000
    z = sample_mode_increments(model, dt, np.random.default_rng(11), size=n)
    assert z.shape == (n, 4)
    assert np.all(np.abs(z.mean(axis=0)) <= 4 * math.sqrt(dt) / math.sqrt(n))
    cov = np.cov(z, rowvar=False, bias=True)
    assert np.all(np.abs(cov - dt * np.eye(4)) <= 5 * dt / math.sqrt(n))


def test_colored_increment_covariance():
    b = build_basis(UNIT, 4)
    model = colored_noise(parse_kernel("cauchy"), b, Grid.cell_centred(UNIT, 32))
    dt, n = 0.5, 100_000
    z = sample_mode_increments(model, dt, np.random.default_rng(5), size=n)
    cov = np.cov(z, rowvar=False, bias=True)
    scale = np.sqrt(np.outer(np.diag(model.mode_cov), np.diag(model.mode_cov))) * dt
    assert np.all(np.abs(cov - dt * model.mode_cov) <= 6 * scale / math.sqrt(n))


def test_rank_one_increments_share_sign_pattern():
    b = build_basis(UNIT, 4)
    g = Grid.cell_centred(UNIT, 32)
    model = colored_noise(CovKernel("constant", c=1.0), b, g)
    z = sample_mode_increments(model, 0.1, np.random.default_rng(3), size=50)
    ones = b.evaluate(g.points).T @ g.weights
    # every draw is a multiple of <phi_n, 1> (modes 2 and 4 integrate to ~0)
    ratio = z[:, 0] / ones[0]
    assert np.allclose(z[:, [0, 2]], np.outer(ratio, ones[[0, 2]]), rtol=1e-4, atol=1e-6)


@given(st.floats(0.05, 0.95), st.floats(0.3, 3.0))
def test_riesz_mass_formula_property(g, L):
    dom = DomainSpec.interval(L)
    mass = total_mass(CovKernel("riesz", gamma=g), Grid.cell_centred(dom, 16))
    assert mass == pytest.approx(riesz_mass_interval(g, L), rel=1e-10)


@given(st.sampled_from(SHIPPED), st.lists(st.floats(0.0, 1.0), min_size=2, max_size=2))
def test_kernels_positive(spec, xy):
    x, y = xy
    k = parse_kernel(spec)
    if k.singular and x == y:
        return
    assert cov_eval(k, [x], [y]) > 0
