import numpy as np
import pytest

from lqnash import (
    GameParams,
    assemble_K0,
    enumerate_y_solutions,
    first_order_term,
    solve_classical_are,
    solve_k2,
)


def make_game(a1, a, b, q):
    """Scalar game with B1 normalized to 1."""
    return GameParams.from_matrices([[a1]], [[a]], [[1.0]], [[b]], [[q]])


def solve_limit(p, prefer_sign=None):
    """(classical, branch, K0, first-order term) for one stabilizing branch."""
    cls = solve_classical_are(p)
    branches = enumerate_y_solutions(p)
    pool = [y for y in branches if y.stabilizing]
    if prefer_sign is not None:
        pool = [y for y in pool if y.branch_sign == prefer_sign]
    y = pool[0]
    K0 = assemble_K0(cls.K1, y, solve_k2(p, cls.K1, y))
    term = first_order_term(K0, p)
    return cls, y, K0, term


@pytest.fixture(scope="session")
def p1():
    """The worked scalar fixture: a1=-1, a=1, b=0, q=3."""
    return make_game(-1.0, 1.0, 0.0, 3.0)


@pytest.fixture(scope="session")
def p1_solution(p1):
    return solve_limit(p1)


@pytest.fixture(scope="session")
def two_branch():
    """Scalar fixture with two stabilizing branches: a1=1, a=-4, b=0, q=1."""
    return make_game(1.0, -4.0, 0.0, 1.0)


@pytest.fixture(scope="session")
def decoupled():
    """No coupling at all: independent LQR problems."""
    return GameParams.from_matrices([[-1.0]], [[0.0]], [[1.0]], [[0.0]], [[3.0]])


def stable_matrix_games(count, start_seed=0, n=2, m=1):
    """Deterministic list of (seed, params, branch) with a stable-attractor
    branch; seeds are scanned in order so the selection is reproducible."""
    from oracles import random_matrix_game

    from lqnash.errors import LqnashError

    found = []
    seed = start_seed
    while len(found) < count and seed < start_seed + 4000:
        A1, A2, B1, B2, Q = random_matrix_game(seed, n=n, m=m)
        p = GameParams.from_matrices(A1, A2, B1, B2, Q)
        try:
            solve_classical_are(p)
            branches = enumerate_y_solutions(p)
        except LqnashError:
            seed += 1
            continue
        good = [y for y in branches if y.stabilizing and y.stable_nash]
        if good:
            found.append((seed, p, good[0]))
        seed += 1
    if len(found) < count:
        raise RuntimeError(f"only {len(found)} usable seeds below {seed}")
    return found


@pytest.fixture(scope="session")
def matrix_games():
    return stable_matrix_games(20)
