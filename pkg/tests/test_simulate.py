import io

import numpy as np
import pytest

from sddelab.kernels import Grid, fisher_limit, fisher_theta0
from sddelab.measures import SignedMeasure
from sddelab.simulate import (
    InitialPath,
    brownian_increments,
    derive_seed,
    path_from_csv,
    path_to_csv,
    simulate,
    simulate_batch,
    y_process,
)

D0 = SignedMeasure.point_masses(1.0, (0.0, 1.0))
BAL = SignedMeasure.point_masses(1.0, (0.0, 1.0), (-1.0, -1.0))
LEB = SignedMeasure.polynomial_density(1.0, [(-1.0, 0.0, (1.0,))])


def test_theta_zero_path_is_shifted_wiener():
    g = Grid.build(1.0, 10.0, 0.01)
    p = simulate(0.0, D0, InitialPath.constant(3.0), g, seed=1)
    assert np.max(np.abs(p.X[g.n_delay :] - (3.0 + p.W))) < 1e-12
    assert p.W[0] == 0.0
    np.testing.assert_array_equal(p.X[: g.n_delay + 1], 3.0)


def test_zero_noise_euler_recursion():
    g = Grid.build(1.0, 10.0, 0.01)
    p = simulate(-0.5, D0, InitialPath.constant(1.0), g, seed=0, dW=np.zeros(g.n_steps))
    expected = (1 - 0.5 * g.dt) ** np.arange(g.n_steps + 1)
    assert np.max(np.abs(p.X[g.n_delay :] - expected)) < 1e-12


def test_ou_stationary_variance():
    g = Grid.build(1.0, 200.0, 0.01)
    seeds = [derive_seed(123, i) for i in range(1000)]
    _, X, _ = simulate_batch(-0.5, D0, InitialPath.zero(), g, seeds)
    pooled = X[:, g.n_delay + g.n_steps // 2 :]
    assert float(np.mean(pooled**2)) == pytest.approx(1.0, rel=0.05)


def test_y_process_dirac0_identity():
    g = Grid.build(1.0, 4.0, 0.01)
    p = simulate(-0.5, D0, InitialPath.constant(1.0), g, seed=5)
    np.testing.assert_array_equal(y_process(p.X, D0, g), p.X[g.n_delay :])


def test_y_process_balanced_constant_cancels():
    g = Grid.build(1.0, 4.0, 0.01)
    X = np.ones(g.n_total)
    assert np.max(np.abs(y_process(X, BAL, g))) == 0.0


def test_y_process_lebesgue_linear():
    # X(t) = t with density 1 on [-1,0]: Y(t) = int (t+u) du = t - 1/2
    g = Grid.build(1.0, 4.0, 0.01)
    X = g.times()
    Y = y_process(X, LEB, g)
    want = g.state_times() - 0.5
    assert np.max(np.abs(Y - want)) < 1e-12


def test_path_internal_consistency():
    g = Grid.build(1.0, 5.0, 0.01)
    p = simulate(0.3, BAL, InitialPath.constant(0.5), g, seed=9)
    np.testing.assert_allclose(y_process(p.X, BAL, g), p.Y, atol=1e-12)


def test_replicate_seeds_are_order_independent():
    assert derive_seed(7, 3) == derive_seed(7, 3)
    assert derive_seed(7, 3) != derive_seed(7, 4)
    assert derive_seed(8, 3) != derive_seed(7, 3)
    assert derive_seed(7, 3, stream=1) != derive_seed(7, 3)


def test_single_path_matches_batch_row():
    g = Grid.build(1.0, 3.0, 0.01)
    seeds = [derive_seed(11, i) for i in range(4)]
    W, X, Y = simulate_batch(-0.5, BAL, InitialPath.zero(), g, seeds)
    p2 = simulate(-0.5, BAL, InitialPath.zero(), g, seeds[2])
    np.testing.assert_allclose(p2.X, X[2], atol=1e-12)
    np.testing.assert_allclose(p2.W, W[2], atol=1e-12)


def test_strong_order_one_under_refinement():
    # common Brownian increments: halving dt halves the strong error
    errs = []
    for dt in (0.02, 0.01, 0.005):
        g_f = Grid.build(1.0, 5.0, dt / 2)
        g_c = Grid.build(1.0, 5.0, dt)
        dWf = brownian_increments(42, g_f.n_steps, g_f.dt)
        dWc = dWf.reshape(-1, 2).sum(axis=1)
        pf = simulate(0.5, D0, InitialPath.constant(1.0), g_f, 0, dW=dWf)
        pc = simulate(0.5, D0, InitialPath.constant(1.0), g_c, 0, dW=dWc)
        errs.append(np.max(np.abs(pf.X[g_f.n_delay :: 2] - pc.X[g_c.n_delay :])))
    for coarse, fine in zip(errs, errs[1:]):
        assert 1.3 < coarse / fine < 3.4


def test_ergodic_time_averages_lan():
    # subcritical time averages approach (0, J) across replicates
    g = Grid.build(1.0, 200.0, 0.01)
    seeds = [derive_seed(2024, i) for i in range(500)]
    _, _, Y = simulate_batch(-0.5, D0, InitialPath.zero(), g, seeds)
    mean_Y = np.sum(Y[:, :-1], axis=1) * g.dt / g.T
    mean_Y2 = np.einsum("ij,ij->i", Y[:, :-1], Y[:, :-1]) * g.dt / g.T
    J = 1.0
    assert abs(np.median(mean_Y)) <= 0.05 * np.sqrt(J)
    assert abs(np.median(mean_Y2) - J) <= 0.05 * J


def test_ergodic_time_averages_theta0_balanced():
    g = Grid.build(1.0, 200.0, 0.01)
    seeds = [derive_seed(77, i) for i in range(500)]
    _, _, Y = simulate_batch(0.0, BAL, InitialPath.zero(), g, seeds)
    mean_Y2 = np.einsum("ij,ij->i", Y[:, :-1], Y[:, :-1]) * g.dt / g.T
    J = fisher_theta0(BAL)
    assert abs(np.median(mean_Y2) - J) <= 0.05 * J


def test_supercritical_scaled_path_settles():
    # e^{-theta t} Y(t) stabilizes pathwise for theta = 0.5, a = dirac at 0
    g = Grid.build(1.0, 20.0, 0.01)
    seeds = [derive_seed(31337, i) for i in range(300)]
    _, _, Y = simulate_batch(0.5, D0, InitialPath.zero(), g, seeds)
    t = g.state_times()
    sel = t >= 15.0
    scaled = Y[:, sel] * np.exp(-0.5 * t[sel])[None, :]
    osc = np.max(scaled, axis=1) - np.min(scaled, axis=1)
    limit = np.abs(Y[:, -1]) * np.exp(-0.5 * t[-1])
    assert np.median(osc) <= 0.05 * np.median(limit)


def test_csv_roundtrip():
    g = Grid.build(1.0, 2.0, 0.01)
    p = simulate(-0.5, D0, InitialPath.constant(1.0), g, seed=3)
    buf = io.StringIO()
    path_to_csv(p, buf)
    buf.seek(0)
    q = path_from_csv(buf)
    assert q.grid.n_delay == g.n_delay and q.grid.n_steps == g.n_steps
    np.testing.assert_array_equal(q.X, p.X)
    np.testing.assert_array_equal(q.W, p.W)
    np.testing.assert_array_equal(q.Y, p.Y)


def test_initial_path_kinds():
    g = Grid.build(1.0, 1.0, 0.25)
    assert np.all(InitialPath.zero().values_on(g) == 0.0)
    assert np.all(InitialPath.constant(2.5).values_on(g) == 2.5)
    ip = InitialPath.sampled([0.0, 1.0, 0.0])
    vals = ip.values_on(g)
    np.testing.assert_allclose(vals, [0.0, 0.5, 1.0, 0.5, 0.0])
    assert InitialPath.from_dict(ip.to_dict()) == ip


def test_simulate_with_sampled_density_measure():
    n = 513
    grid_u = np.linspace(-2 * np.pi, 0.0, n)
    sinm = SignedMeasure.sampled_density(2 * np.pi, np.sin(grid_u))
    g = Grid(r=2 * np.pi, n_delay=256, n_steps=512)
    p = simulate(0.15, sinm, InitialPath.constant(1.0), g, seed=13)
    assert np.all(np.isfinite(p.X))
    np.testing.assert_allclose(y_process(p.X, sinm, g), p.Y, atol=1e-12)


def test_delay_functional_against_direct_quadrature():
    # independent evaluation: interpolated atoms plus trapezoid of density*X
    rng = np.random.default_rng(55)
    a = SignedMeasure(
        r=1.0,
        atoms=((-0.37, 0.8), (0.0, -0.3)),
        density_pieces=SignedMeasure.polynomial_density(
            1.0, [(-1.0, 0.0, (0.4, -0.9))]
        ).density_pieces,
    )
    g = Grid.build(1.0, 2.0, 0.01)
    X = rng.standard_normal(g.n_total).cumsum() * 0.1
    Y = y_process(X, a, g)
    t_all = g.times()
    fine = np.linspace(-1.0, 0.0, 2001)
    rho = 0.4 - 0.9 * fine
    for k in (0, 57, g.n_steps):
        t = k * g.dt
        manual = 0.8 * np.interp(t - 0.37, t_all, X) - 0.3 * np.interp(t, t_all, X)
        manual += np.trapezoid(rho * np.interp(t + fine, t_all, X), fine)
        assert Y[k] == pytest.approx(manual, abs=2e-4)


def test_initial_path_numeric_shorthand():
    ip = InitialPath.from_dict(2.0)
    assert ip.kind == "constant" and ip.value == 2.0
    assert InitialPath.from_dict(None).kind == "zero"


def test_path_csv_rejects_bad_header():
    import io as _io

    with pytest.raises(Exception):
        path_from_csv(_io.StringIO("a,b,c,d\n1,2,3,4\n"))
