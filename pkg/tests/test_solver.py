import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracspde.kernel import HeatKernel, evolve
from fracspde.noise import parse_kernel
from fracspde.solver import (
    MomentTrajectory,
    PathOverflowError,
    SigmaSpec,
    SimulationConfig,
    coupled_beta_difference,
    first_mode_volterra,
    resolution_check,
    second_moment_volterra,
    simulate_paths,
)
from fracspde.spectra import DomainSpec, Grid, build_basis
from fracspde.streams import SEED_ENV, path_normals, resolve_seed

SMALL = SimulationConfig(T=2.0, J=32, N=8, M=16, paths=200, seed=42)


def test_sigma_spec():
    s = SigmaSpec.linear(-2.0)
    assert s.l_sigma == s.L_sigma == 2.0
    assert SigmaSpec.linear(0.0).L_sigma == 0.0
    c = SigmaSpec.custom(lambda u: u * (1.5 + 0.5 * np.sin(u)), 1.0, 2.0)
    assert c.sandwich_holds(np.linspace(-50, 50, 1001))
    with pytest.raises(ValueError):
        SigmaSpec.custom(lambda u: 3 * u, 1.0, 2.0)
    with pytest.raises(ValueError):
        SigmaSpec.custom(np.sin, 0.5, 1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        SMALL.with_(lam=-1.0)
    with pytest.raises(ValueError):
        SMALL.with_(J=0)
    with pytest.raises(ValueError):
        SMALL.with_(beta=1.0 + 1e-9)
    # white noise needs d < (2 ^ 1/beta) alpha: d = 2, alpha = 1 fails
    with pytest.raises(ValueError):
        SMALL.with_(domain=DomainSpec.box((1.0, 1.0), 1.0))
    # retained modes must be resolved by the grid
    with pytest.raises(ValueError):
        SMALL.with_(N=20, M=16).setup()


def test_zero_noise_is_deterministic():
    for cfg in (SMALL.with_(lam=0.0), SMALL.with_(sigma=SigmaSpec.linear(0.0))):
        mc = simulate_paths(cfg)
        vo = second_moment_volterra(cfg)
        s = cfg.setup()
        v = evolve(s.kernel, s.u0, cfg.times, s.grid.points)
        assert np.array_equal(mc.stderr, np.zeros_like(mc.stderr))
        assert np.allclose(mc.sup_moment, np.max(v**2, axis=1), rtol=1e-13, atol=0)
        assert np.allclose(vo.sup_moment, np.max(v**2, axis=1), rtol=1e-13, atol=0)


def test_initial_value_is_projection():
    traj = second_moment_volterra(SMALL)
    s = SMALL.setup()
    assert traj.sup_moment[0] == pytest.approx(np.max((s.Phi @ s.a0) ** 2), rel=1e-14)
    assert traj.sup_moment[0] == pytest.approx(np.max(s.u0.values**2), rel=1e-2)


def test_grid_and_mode_engines_agree():
    for cfg in (SMALL, SMALL.with_(beta=0.4, lam=2.0), SMALL.with_(domain=DomainSpec.box((1.0, 1.0)), M=8, N=6, beta=0.3)):
        a = second_moment_volterra(cfg, engine="grid")
        b = second_moment_volterra(cfg, engine="modes")
        assert np.allclose(a.sup_moment, b.sup_moment, rtol=1e-12, atol=0)


def test_grid_engine_rejects_colored():
    with pytest.raises(ValueError):
        second_moment_volterra(SMALL.with_(domain=DomainSpec.interval(1.0), noise=parse_kernel("riesz:0.5")), engine="grid")


def test_volterra_needs_linear_sigma():
    cfg = SMALL.with_(sigma=SigmaSpec.custom(lambda u: 1.5 * u, 1.0, 2.0))
    with pytest.raises(ValueError):
        second_moment_volterra(cfg)


def test_mode_engine_constant_kernel_scalar_oracle():
    """With f = 1 the noise is spatially flat; the mode engine is checked
    against a direct summation of the double-sum formula on the grid."""
    cfg = SimulationConfig(domain=DomainSpec.interval(1.0), beta=0.6, lam=1.5, noise=parse_kernel("constant:1"),
                           T=1.0, J=12, N=6, M=12)
    traj = second_moment_volterra(cfg, engine="modes")
    s = cfg.setup()
    J, dt, Phi, E = cfg.J, cfg.dt, s.Phi, s.decay
    C = s.noise.cell_cov
    # R_j(x, z) recursion written with explicit grid kernels
    G = [None] + [(Phi * E[l]) @ Phi.T for l in range(1, J + 1)]
    v = s.deterministic
    R = [np.outer(v[0], v[0])]
    for j in range(J):
        acc = np.zeros_like(R[0])
        for i in range(j + 1):
            Gl = G[j + 1 - i]
            acc += Gl @ (R[i] * C) @ Gl.T
        R.append(np.outer(v[j + 1], v[j + 1]) + cfg.lam**2 * dt * acc)
    ref = np.array([np.max(np.diag(r)) for r in R])
    assert np.allclose(traj.sup_moment, ref, rtol=1e-11)


def test_first_mode_cross_check():
    cfg = SimulationConfig(beta=0.75, lam=1.0, u0="mode1", T=3.0, J=48, N=12, M=24)
    scalar = first_mode_volterra(cfg)
    s = cfg.setup()
    # first-mode moment from the mode engine's covariance: E <u, phi_1>^2 = A[0, 0]
    A_diag = _mode_engine_first_mode(cfg)
    assert np.allclose(scalar, A_diag, rtol=1e-10)
    assert s.a0[0] > 0


def _mode_engine_first_mode(cfg):
    s = cfg.setup()
    Phi, E, a0, C = s.Phi, s.decay, s.a0, s.noise.cell_cov
    coef = cfg.lam**2 * cfg.dt
    mean = E * a0
    A = [np.outer(mean[0], mean[0])]
    S = []
    for j in range(cfg.J):
        R = Phi @ A[-1] @ Phi.T
        S.append(Phi.T @ (R * C) @ Phi)
        acc = sum(np.outer(E[j + 1 - i], E[j + 1 - i]) * S[i] for i in range(j + 1))
        A.append(np.outer(mean[j + 1], mean[j + 1]) + coef * acc)
    return np.array([a[0, 0] for a in A])


def test_monte_carlo_matches_volterra():
    cfg = SimulationConfig(beta=0.75, lam=0.5, T=3.0, J=48, N=12, M=24, paths=1000, seed=9)
    mc = simulate_paths(cfg)
    vo = second_moment_volterra(cfg)
    ok = np.abs(mc.sup_moment - vo.sup_moment) <= 3 * mc.stderr + 1e-12 * vo.sup_moment
    assert ok.mean() >= 0.95


def test_monte_carlo_colored_matches_volterra():
    cfg = SimulationConfig(domain=DomainSpec.interval(1.0), beta=0.6, lam=2.0, noise=parse_kernel("riesz:0.5"),
                           T=1.0, J=32, N=8, M=16, paths=1000, seed=3)
    mc = simulate_paths(cfg)
    vo = second_moment_volterra(cfg)
    ok = np.abs(mc.sup_moment - vo.sup_moment) <= 3 * mc.stderr + 1e-12 * vo.sup_moment
    assert ok.mean() >= 0.9


def test_reproducible_across_workers():
    cfg = SMALL.with_(paths=230)
    a = simulate_paths(cfg, workers=1)
    b = simulate_paths(cfg, workers=4)
    assert a.to_csv() == b.to_csv()


def test_seed_changes_output(monkeypatch):
    a = simulate_paths(SMALL).to_csv()
    assert simulate_paths(SMALL.with_(seed=43)).to_csv() != a
    monkeypatch.setenv(SEED_ENV, "43")
    assert resolve_seed(42) == 43


def test_stream_rows_independent_of_layout():
    full = path_normals(5, range(6), 10, 4)
    part = path_normals(5, [3, 4], 10, 4)
    assert np.array_equal(full[3:5], part)
    assert not np.array_equal(full[0], full[1])


def test_stored_paths():
    cfg = SMALL.with_(paths=60)
    traj = simulate_paths(cfg, store_paths=True)
    paths = traj.info["paths"]
    assert paths.shape == (60, cfg.J + 1, 16)
    assert np.allclose(np.max((paths**2).mean(axis=0), axis=1), traj.sup_moment, rtol=1e-12)


def test_overflow_diagnostic():
    cfg = SimulationConfig(beta=0.75, lam=300.0, T=20.0, J=64, N=8, M=16, paths=50)
    with pytest.raises(PathOverflowError) as info:
        simulate_paths(cfg)
    err = info.value
    assert "step" in str(err) and "path" in str(err)
    assert err.partial is not None and err.partial.overflow_time == pytest.approx(err.time)
    vo = second_moment_volterra(cfg)
    assert vo.overflow_time is not None and np.all(vo.sup_moment <= 1e150)


def test_sandwich_checked_along_paths():
    cfg = SMALL.with_(sigma=SigmaSpec.custom(lambda u: u * (1.5 + 0.5 * np.cos(u)), 1.0, 2.0), paths=50)
    traj = simulate_paths(cfg, check_sigma=True)
    assert np.all(traj.sup_moment > 0)


def test_csv_format():
    traj = second_moment_volterra(SMALL)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,sup_moment,stderr"
    assert len(lines) == SMALL.J + 2
    assert lines[1].endswith(",")
    mc = simulate_paths(SMALL.with_(paths=50))
    assert mc.to_csv().splitlines()[-1].count(",") == 2


def test_resolution_check_flags_coarse_grid():
    with pytest.warns(UserWarning):
        rel, ok = resolution_check(SimulationConfig(beta=0.4, lam=3.0, T=5.0, J=4, N=8, M=16))
    assert not ok and rel > 0.05
    rel, ok = resolution_check(SimulationConfig(beta=0.75, lam=0.5, T=2.0, J=128, N=8, M=16))
    assert ok


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_volterra_monotone_in_lambda(beta, l1, l2):
    lo, hi = sorted((l1, l2))
    base = SimulationConfig(beta=beta, T=3.0, J=24, N=6, M=12)
    a = second_moment_volterra(base.with_(lam=lo))
    b = second_moment_volterra(base.with_(lam=hi))
    assert b.sup_moment[-1] >= a.sup_moment[-1] * (1 - 1e-12)


def test_coupled_difference():
    cfg = SimulationConfig(beta=0.75, lam=0.5, T=1.0, J=32, N=8, M=16, paths=400)
    same = coupled_beta_difference(cfg, cfg)
    assert np.array_equal(same.metric, np.zeros_like(same.metric))
    seq = [coupled_beta_difference(cfg, cfg.with_(beta=0.75 + h)) for h in (0.12, 0.06, 0.03)]
    for p in (2.0, 4.0):
        seq = [coupled_beta_difference(cfg, cfg.with_(beta=0.75 + h), p) for h in (0.12, 0.06, 0.03)]
        h = [t.metric[-1] for t in seq]
        se = [t.stderr[-1] for t in seq]
        assert all(h[k + 1] <= h[k] + 2 * math.hypot(se[k], se[k + 1]) for k in range(2))


def test_coupled_difference_guards():
    cfg = SimulationConfig(beta=0.75, T=1.0, J=16, N=8, M=16, paths=10)
    with pytest.raises(ValueError):
        coupled_beta_difference(cfg, cfg.with_(beta=0.8, M=32))
    with pytest.raises(ValueError):
        coupled_beta_difference(cfg, cfg.with_(beta=0.4))
    with pytest.raises(ValueError):
        coupled_beta_difference(cfg, cfg.with_(beta=0.8), p=1.5)


def test_classical_order_has_threshold():
    from fracspde.lab import classify_growth

    base = SimulationConfig(beta=1.0, T=20.0, J=256, N=16, M=32)
    assert base.beta.is_classical
    small = classify_growth(second_moment_volterra(base.with_(lam=0.05)))
    large = classify_growth(second_moment_volterra(base.with_(lam=5.0)))
    assert small.classification == "bounded"
    assert large.classification == "growth"
