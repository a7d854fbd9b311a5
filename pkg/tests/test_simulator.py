import numpy as np
import pytest
import scipy.linalg as sla

from conftest import make_game, solve_limit

from lqnash import (
    CouplingWeight,
    Divergence,
    FeedbackGains,
    FiniteHorizonSpec,
    GameParams,
    StepTooLarge,
    closed_loop,
    evaluate_cost,
    extract_gains,
    newton_solve,
    simulate_full,
    simulate_reduced,
)


def _equilibrium_gains(p, K0, term, M):
    w = 1.0 / M
    cert = newton_solve(p, w, K_init=K0.full + w * term.matrix)
    return cert.K, extract_gains(cert.K, p, CouplingWeight.from_players(M))


def test_reduced_tracks_full_exactly(matrix_games):
    """(x1, z) from the M-player simulation and from the two-block system
    must coincide far below the acceptance tolerance."""
    rng = np.random.default_rng(31)
    _, p, _ = matrix_games[0]
    _, _, K0, term = solve_limit(p)
    for M in (3, 10):
        K, g = _equilibrium_gains(p, K0, term, M)
        x0 = rng.normal(size=(M, p.n))
        full = simulate_full(p, M, g, x0, T=10.0, dt=0.01)
        red = simulate_reduced(p, K, 1.0 / M, x0[0], x0.mean(axis=0),
                               T=10.0, dt=0.01)
        assert np.abs(full.x1 - red.x1).max() <= 1e-8
        assert np.abs(full.z - red.z).max() <= 1e-8
        assert np.abs(full.costs[:, 0] - red.costs[:, 0]).max() <= 1e-8


def test_z_is_player_average(p1, p1_solution):
    _, _, K0, term = p1_solution
    M = 4
    _, g = _equilibrium_gains(p1, K0, term, M)
    x0 = np.array([[1.0], [2.0], [-0.5], [0.25]])
    traj = simulate_full(p1, M, g, x0, T=3.0, dt=0.01)
    assert np.abs(traj.z - traj.states.mean(axis=1)).max() <= 1e-12


def test_exchangeability(p1, p1_solution):
    _, _, K0, term = p1_solution
    M = 3
    _, g = _equilibrium_gains(p1, K0, term, M)
    x0 = np.array([[1.0], [2.0], [-0.5]])
    perm = [2, 0, 1]
    a = simulate_full(p1, M, g, x0, T=2.0, dt=0.01)
    b = simulate_full(p1, M, g, x0[perm], T=2.0, dt=0.01)
    assert np.abs(a.states[:, perm, :] - b.states).max() <= 1e-12
    assert np.abs(a.costs[:, perm] - b.costs).max() <= 1e-12


def test_cost_matches_value_function(p1, p1_solution):
    """Long-horizon running cost converges to the algebraic value
    (1/2) v' K(w) v of the tracked player."""
    _, _, K0, term = p1_solution
    M = 5
    K, g = _equilibrium_gains(p1, K0, term, M)
    x0 = np.tile([[1.5]], (M, 1))
    traj = simulate_full(p1, M, g, x0, T=30.0, dt=0.005)
    v = np.array([1.5, 1.5])
    algebraic = 0.5 * v @ K @ v
    assert traj.costs[-1, 0] == pytest.approx(algebraic, abs=1e-7)


def test_evaluate_cost_consistency(p1, p1_solution):
    _, _, K0, term = p1_solution
    M = 4
    _, g = _equilibrium_gains(p1, K0, term, M)
    x0 = np.array([[1.0], [-1.0], [2.0], [0.5]])
    traj = simulate_full(p1, M, g, x0, T=5.0, dt=0.01)
    again = evaluate_cost(traj, p1)
    assert np.allclose(again, traj.costs[-1], atol=1e-10)
    # a terminal weight adds (1/2) x(T)' Qf x(T) per player
    fh = FiniteHorizonSpec(Qf=2.0 * np.eye(1), tf=5.0)
    with_terminal = evaluate_cost(traj, p1, fh=fh)
    bump = with_terminal - again
    expected = np.array([float(x @ (1.0 * np.eye(1)) @ x)
                         for x in traj.states[-1]])
    assert np.allclose(bump, expected, atol=1e-12)


def test_limit_gains_reduce_to_block_triangular_flow(p1, p1_solution):
    """Simulating the reduced system at w=0 realizes the decoupled limit:
    z evolves on its own and matches the matrix exponential of Ac2."""
    _, y, K0, _ = p1_solution
    traj = simulate_reduced(p1, K0, 0.0, np.array([1.0]), np.array([2.0]),
                            T=4.0, dt=0.01)
    lam2 = y.Ac2_spectrum[0].real
    ref = 2.0 * np.exp(lam2 * traj.times)
    assert np.abs(traj.z[:, 0] - ref).max() <= 1e-9


def test_rk4_order(p1, p1_solution):
    _, _, K0, _ = p1_solution
    Ac = closed_loop(K0.full, 0.0, p1).Ac
    v0 = np.array([1.0, 0.5])
    errs = []
    dts = [0.04, 0.02, 0.01]
    for dt in dts:
        traj = simulate_reduced(p1, K0, 0.0, v0[:1], v0[1:], T=2.0, dt=dt)
        exact = sla.expm(Ac * 2.0) @ v0
        got = np.concatenate([traj.x1[-1], traj.z[-1]])
        errs.append(np.linalg.norm(got - exact))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert slope == pytest.approx(4.0, abs=0.3)


def test_step_guard(p1, p1_solution):
    _, _, K0, _ = p1_solution
    with pytest.raises(StepTooLarge):
        simulate_reduced(p1, K0, 0.0, np.array([1.0]), np.array([1.0]),
                         T=2.0, dt=1.0)


def test_divergence_guard():
    p = GameParams.from_matrices([[2.0]], [[0.0]], [[1.0]], [[0.0]], [[1.0]])
    g = FeedbackGains(L1=[[0.0]], L2=[[0.0]])  # no feedback: e^{2t} blowup
    with pytest.raises(Divergence) as e:
        simulate_full(p, 2, g, np.ones((2, 1)), T=20.0, dt=0.01)
    assert 10.0 < e.value.blowup_time < 20.0


def test_csv_round_trip(p1, p1_solution):
    _, _, K0, term = p1_solution
    M = 3
    K, g = _equilibrium_gains(p1, K0, term, M)
    full = simulate_full(p1, M, g, np.ones((M, 1)), T=1.0, dt=0.04)
    red = simulate_reduced(p1, K, 1.0 / M, np.ones(1), np.ones(1),
                           T=1.0, dt=0.04)
    txt = full.to_csv()
    lines = txt.splitlines()
    assert lines[0] == "time,player,x0,u0,cost"
    assert len(lines) == 1 + 26 * M
    # emission is deterministic and parseable at full precision
    assert txt == full.to_csv()
    data = np.array([[float(f) for f in ln.split(",")] for ln in lines[1:]])
    assert np.allclose(data[::M, 2], full.states[:, 0, 0], rtol=0, atol=0)
    rlines = red.to_csv().splitlines()
    assert rlines[0] == "time,x0,z0,u0,cost"
    assert len(rlines) == 27


def test_full_simulation_multidimensional(matrix_games):
    # n = 2, m = 1 with heterogeneous states: closed loop decays
    _, p, _ = matrix_games[1]
    _, _, K0, term = solve_limit(p)
    M = 6
    _, g = _equilibrium_gains(p, K0, term, M)
    rng = np.random.default_rng(2)
    x0 = rng.normal(size=(M, p.n))
    traj = simulate_full(p, M, g, x0, T=12.0, dt=0.01)
    assert np.abs(traj.states[-1]).max() < 1e-2 * np.abs(x0).max()
    assert np.all(np.diff(traj.costs[:, 0]) >= -1e-12)  # running cost grows
