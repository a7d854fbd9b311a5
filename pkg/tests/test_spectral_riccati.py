import dataclasses

import numpy as np
import pytest
import scipy.linalg as sla

from conftest import make_game, solve_limit
from oracles import residual_oracle, scalar_closed_forms

from lqnash import (
    SpectrumMismatch,
    UnstableAc2,
    assemble_K0,
    build_hamiltonian,
    enumerate_y_solutions,
    solve_classical_are,
    solve_k2,
    verify_similarity,
)


def test_scalar_branches_match_closed_forms():
    """Seeded sweep: every quantity the solver reports agrees with the
    hand closed forms, including flags and stabilizing-branch counts."""
    rng = np.random.default_rng(42)
    checked = 0
    while checked < 60:
        a1 = rng.uniform(-2, 2)
        a = rng.uniform(-4, 4)
        b = rng.uniform(-0.9, 4)
        q = rng.uniform(0.0, 5.0)
        ref = scalar_closed_forms(a1, a, b, q)
        if ref["disc"] < 0.05:           # skip near-degenerate branch pairs
            continue
        p = make_game(a1, a, b, q)
        cls = solve_classical_are(p)
        assert cls.K1[0, 0] == pytest.approx(ref["k1"], rel=1e-10, abs=1e-12)
        assert cls.spectrum[0].real == pytest.approx(ref["lam1"], rel=1e-10,
                                                     abs=1e-12)
        branches = enumerate_y_solutions(p)
        assert len(branches) == 2
        for br in branches:
            ob = ref["branches"][br.branch_sign]
            assert br.Y[0, 0] == pytest.approx(ob["y"], rel=1e-9, abs=1e-11)
            assert br.Ac2_spectrum[0].real == pytest.approx(
                ob["lam2"], rel=1e-9, abs=1e-11)
            assert br.mirror_spectrum[0].real == pytest.approx(
                ob["lam_mirror"], rel=1e-9, abs=1e-11)
            assert br.stabilizing == ob["stabilizing"]
            assert br.stable_nash == ob["stable_nash"]
            if br.stabilizing:
                k2 = solve_k2(p, cls.K1, br)
                assert k2[0, 0] == pytest.approx(ob["k2"], rel=1e-9,
                                                 abs=1e-11)
        n_stab = sum(br.stabilizing for br in branches)
        expected = 2 if ref["two_acceptable"] else (
            1 if ref["one_acceptable"] else 0)
        assert n_stab == expected
        checked += 1


def test_worked_fixture_frozen_values(p1, p1_solution):
    cls, y, K0, _ = p1_solution
    assert cls.K1[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert y.Y[0, 0] == pytest.approx(1.3027756377319948, abs=1e-12)
    assert y.Ac2_spectrum[0].real == pytest.approx(-1.3027756377319948,
                                                   abs=1e-12)
    assert y.branch_sign == 1
    assert y.stabilizing and y.stable_nash
    assert K0.K[0, 0] == pytest.approx(0.3027756377319946, abs=1e-12)
    assert K0.K2[0, 0] == pytest.approx(0.19722436226800541, abs=1e-9)
    assert np.allclose(K0.full,
                       [[1.0, 0.3027756377319946],
                        [0.3027756377319946, 0.19722436226800541]],
                       atol=1e-9)
    # the assembled limit value solves the coupled equation at w = 0
    res, _ = residual_oracle(K0.full, 0.0, p1.A1, p1.A2, p1.B1, p1.B2, p1.Q)
    assert res <= 1e-12


def test_two_branch_fixture_flags(two_branch):
    branches = enumerate_y_solutions(two_branch)
    assert len(branches) == 2
    assert all(br.stabilizing for br in branches)
    nash = [br for br in branches if br.stable_nash]
    assert len(nash) == 1
    assert nash[0].branch_sign == 1
    assert nash[0].Y[0, 0] == pytest.approx((-2 + np.sqrt(8)) / 2, abs=1e-12)


def test_classical_matches_scipy(matrix_games):
    for _, p, _ in matrix_games[:8]:
        cls = solve_classical_are(p)
        ref = sla.solve_continuous_are(p.A1, p.B1, p.Q, np.eye(p.m))
        assert np.allclose(cls.K1, ref, atol=1e-9 * (1 + np.linalg.norm(ref)))
        assert np.max(cls.spectrum.real) < 0


def test_similarity_certificate(matrix_games):
    for _, p, br in matrix_games[:8]:
        h = build_hamiltonian(p)
        cert = verify_similarity(h, br)
        assert cert.max_mismatch <= 1e-7 * (1 + np.linalg.norm(h.H, 2))
        union = np.sort_complex(cert.split_spectrum)
        ham = np.sort_complex(cert.hamiltonian_spectrum)
        assert np.allclose(union, ham, atol=1e-6 * (1 + np.linalg.norm(h.H, 2)))


def test_similarity_rejects_corrupted_branch(p1, p1_solution):
    _, y, _, _ = p1_solution
    h = build_hamiltonian(p1)
    bad = dataclasses.replace(
        y,
        Y=y.Y + 0.05,
        Ac2_spectrum=np.linalg.eigvals(
            p1.A1 + p1.A2 - (p1.B1 + p1.B2) @ p1.B1.T @ (y.Y + 0.05)),
        mirror_spectrum=np.linalg.eigvals(
            -(p1.A1.T - (y.Y + 0.05) @ (p1.B1 + p1.B2) @ p1.B1.T)))
    with pytest.raises(SpectrumMismatch):
        verify_similarity(h, bad)


def test_k2_block_closes_lyapunov_equation(matrix_games):
    """Assemble the cross-coupled Lyapunov identity for the bottom block
    from primitive matrices and check the solver's K2 closes it."""
    for _, p, br in matrix_games[:8]:
        cls = solve_classical_are(p)
        K2 = solve_k2(p, cls.K1, br)
        K = br.Y - cls.K1
        Ac2 = p.A1 + p.A2 - (p.B1 + p.B2) @ p.B1.T @ br.Y
        Ac0 = p.A2 - p.B1 @ p.B1.T @ K - p.B2 @ p.B1.T @ br.Y
        res = (K2 @ Ac2 + Ac2.T @ K2 + K.T @ Ac0 + Ac0.T @ K
               + K.T @ p.B1 @ p.B1.T @ K)
        assert np.linalg.norm(res) <= 1e-9 * (1 + np.linalg.norm(br.Y) ** 2)
        K0 = assemble_K0(cls.K1, br, K2)
        full_res, _ = residual_oracle(K0.full, 0.0, p.A1, p.A2, p.B1, p.B2,
                                      p.Q)
        assert full_res <= 1e-9 * (1 + np.linalg.norm(K0.full) ** 2)


def test_k2_requires_stable_aggregate():
    # both branches of this fixture leave the aggregate loop unstable
    p = make_game(-1.0, 3.0, 0.0, 1.0)
    cls = solve_classical_are(p)
    branches = enumerate_y_solutions(p)
    assert branches and not any(br.stabilizing for br in branches)
    with pytest.raises(UnstableAc2):
        solve_k2(p, cls.K1, branches[0])


def test_full_enumeration_count(matrix_games):
    # n = 2 gives C(4, 2) = 6 eigenvalue subsets; real-pair closure and
    # singular top blocks can only shrink that
    _, p, _ = matrix_games[0]
    branches = enumerate_y_solutions(p, full=True)
    assert 1 <= len(branches) <= 6
    for br in branches:
        assert br.residual_norm <= 1e-9 * (1 + np.linalg.norm(br.Y, "fro") ** 2)


def test_branch_ordering(two_branch):
    branches = enumerate_y_solutions(two_branch)
    # stabilizing first, then by spectral abscissa of the aggregate loop
    abscissas = [np.max(br.Ac2_spectrum.real) for br in branches]
    assert abscissas == sorted(abscissas)


def test_decoupled_game_reduces_to_lqr(decoupled):
    cls, y, K0, _ = solve_limit(decoupled)
    # with A2 = B2 = 0 the aggregate equation is the classical one
    assert np.allclose(y.Y, cls.K1, atol=1e-10)
    assert np.allclose(K0.K, 0.0, atol=1e-10)
    assert np.allclose(K0.K2, 0.0, atol=1e-10)
