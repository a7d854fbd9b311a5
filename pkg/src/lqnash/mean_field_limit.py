"""Large-population limit dynamics and the inverse market-player problem.

As the population grows, one player's influence on the average state vanishes
and the pair (own state, average state) obeys a block-triangular linear
system: the average runs autonomously, the individual is steered by it.  The
inverse question — does the autonomous average itself behave like the optimal
trajectory of some single-agent control problem? — is answered constructively
here, two ways, with an independent verification routine that re-solves the
constructed problem and compares gains.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import MarketLQRUnsolvable, SeZeroInfeasible
from .game_model import GameParams, _frozen
from .spectral_riccati import NashValue, YSolution
from .tolerances import DEFAULT, Tolerances

__all__ = [
    "LimitSystem",
    "MarketProblem",
    "InverseVerdict",
    "limit_dynamics",
    "construct_market_problem",
    "verify_inverse",
]


@dataclass(frozen=True)
class LimitSystem:
    """Matrices of the infinite-population (own state, average state) system.

    d/dt x1 = (own_drift + own_gain) x1 + coupling z
    d/dt z  = aggregate_drift z

    own_gain is the feedback contribution -B1 B1' K1 already mapped through
    the input; the zero block in the z-row is the autonomy of the average:
    no single player moves it.
    """

    own_drift: np.ndarray
    own_gain: np.ndarray
    coupling: np.ndarray
    aggregate_drift: np.ndarray

    def __post_init__(self):
        for name in ("own_drift", "own_gain", "coupling", "aggregate_drift"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def own_closed_loop(self) -> np.ndarray:
        return self.own_drift + self.own_gain

    @property
    def augmented(self) -> np.ndarray:
        """Stacked (x1, z) drift; block upper-triangular by construction."""
        n = self.own_drift.shape[0]
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = self.own_closed_loop
        out[:n, n:] = self.coupling
        out[n:, n:] = self.aggregate_drift
        return out


@dataclass(frozen=True)
class MarketProblem:
    """Single-agent LQR data (state weight, cross term, value matrix).

    The cost is 1/2 * integral of z'Qe z + 2 z'Se' u + u'u; P is the value
    matrix the construction postulates for it.  psd_margin is the smallest
    eigenvalue of Qe - Se'Se (convexity of the cost in (z, u)), and
    riccati_residual certifies that P actually solves the problem's algebraic
    Riccati equation.
    """

    Qe: np.ndarray
    Se: np.ndarray
    P: np.ndarray
    choice: str
    psd_margin: float
    riccati_residual: float

    def __post_init__(self):
        for name in ("Qe", "Se", "P"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True)
class InverseVerdict:
    """Outcome of independently re-solving a constructed market problem."""

    verdict: bool
    gain: np.ndarray
    target_gain: np.ndarray
    gain_error: float
    closed_loop_error: float
    P_star: np.ndarray

    def __post_init__(self):
        for name in ("gain", "target_gain", "P_star"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    def __bool__(self) -> bool:
        return self.verdict


def limit_dynamics(p: GameParams, K0: NashValue) -> LimitSystem:
    """Infinite-population closed loop for (own state, average state).

    The average-state equation carries no trace of the individual: its drift
    is the aggregate closed loop, and the block below the coupling is zero.
    The coupling block collects every path by which the average state enters
    one player's dynamics — directly, through the player's own average-
    feedback term, and through everyone else's controls.
    """
    return LimitSystem(own_drift=p.A1,
                       own_gain=-p.B1 @ p.B1.T @ K0.K1,
                       coupling=K0.ac0(p),
                       aggregate_drift=K0.ac2(p))


def _market_are_residual(p: GameParams, Qe, Se, P) -> float:
    bs = p.b_sum
    res = (P @ (p.A1 + p.A2) + (p.A1 + p.A2).T @ P + Qe
           - (P @ bs + Se.T) @ (bs.T @ P + Se))
    return float(np.linalg.norm(res, "fro"))


def construct_market_problem(p: GameParams, y: YSolution,
                             choice: str = "default",
                             tol: Tolerances = DEFAULT) -> MarketProblem:
    """Cost data under which the average state is an optimal trajectory.

    choice="default": P = 0, Se = B1'Y, Qe = Se'Se.  Always well formed; the
    cost is a perfect square, the optimal value is zero, and Qe - Se'Se = 0
    exactly.

    choice="zero-cross": force Se = 0 by postulating P = Y, which demands a
    symmetric Y (raises SeZeroInfeasible otherwise — this cannot be
    guaranteed a priori) and yields Qe = Q - A2'Y + Y(B1+B2)B2'Y, which must
    itself come out positive semidefinite (second SeZeroInfeasible path).
    Note the optimal gain of this problem is (B1+B2)'Y; it reproduces the
    aggregate's B1'Y exactly when B2'Y = 0, e.g. whenever B2 = 0 —
    verify_inverse checks this rather than the constructor.
    """
    Y = y.Y
    n = p.n
    if choice == "default":
        Se = p.B1.T @ Y
        Qe = Se.T @ Se
        P = np.zeros((n, n))
    elif choice == "zero-cross":
        ynorm = float(np.linalg.norm(Y, 2))
        if np.linalg.norm(Y - Y.T, 2) > tol.sym * (1.0 + ynorm):
            raise SeZeroInfeasible(
                f"aggregate value matrix is not symmetric "
                f"(defect {np.linalg.norm(Y - Y.T, 2):.3e}); the zero-cross "
                f"construction needs P = Y symmetric")
        Ysym = 0.5 * (Y + Y.T)
        Qe = p.Q - p.A2.T @ Ysym + Ysym @ p.b_sum @ p.B2.T @ Ysym
        Qe = 0.5 * (Qe + Qe.T)
        qnorm = max(1.0, float(np.linalg.norm(Qe, 2)))
        if float(np.linalg.eigvalsh(Qe)[0]) < -tol.psd * qnorm:
            raise SeZeroInfeasible(
                f"zero-cross state weight indefinite "
                f"(min eigenvalue {np.linalg.eigvalsh(Qe)[0]:.3e})")
        Se = np.zeros((p.m, n))
        P = Ysym
    else:
        raise ValueError(f"unknown construction {choice!r}; "
                         f"use 'default' or 'zero-cross'")
    margin = float(np.linalg.eigvalsh(Qe - Se.T @ Se)[0])
    res = _market_are_residual(p, Qe, Se, P)
    return MarketProblem(Qe=Qe, Se=Se, P=P, choice=choice,
                         psd_margin=margin, riccati_residual=res)


def verify_inverse(p: GameParams, mp: MarketProblem, y: YSolution,
                   tol: Tolerances = DEFAULT) -> InverseVerdict:
    """Re-solve the constructed problem and compare against the aggregate.

    Completion of squares turns the cross-term cost into a standard LQR with
    state weight Qe - Se'Se and drift (A1+A2) - (B1+B2)Se; the optimal
    feedback of the original problem is then (B1+B2)'P* + Se.  True verdict
    means that gain matches B1'Y and the induced closed loop matches the
    aggregate drift, each within the residual tolerance.
    """
    bs = p.b_sum
    Qeff = mp.Qe - mp.Se.T @ mp.Se
    Qeff = 0.5 * (Qeff + Qeff.T)
    Aeff = (p.A1 + p.A2) - bs @ mp.Se
    try:
        P_star = sla.solve_continuous_are(Aeff, bs, Qeff, np.eye(p.m))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise MarketLQRUnsolvable(
            f"market Riccati equation unsolvable: {exc}") from exc
    gain = bs.T @ P_star + mp.Se
    target = p.B1.T @ y.Y
    scale = tol.res * (1.0 + float(np.linalg.norm(target, "fro")) ** 2)
    gain_err = float(np.linalg.norm(gain - target, "fro"))
    closed = (p.A1 + p.A2) - bs @ gain
    aggregate = (p.A1 + p.A2) - bs @ (p.B1.T @ y.Y)
    cl_err = float(np.linalg.norm(closed - aggregate, "fro"))
    ascale = tol.res * (1.0 + float(np.linalg.norm(aggregate, "fro")) ** 2)
    return InverseVerdict(verdict=(gain_err <= scale and cl_err <= ascale),
                          gain=gain, target_gain=target,
                          gain_error=gain_err, closed_loop_error=cl_err,
                          P_star=P_star)
