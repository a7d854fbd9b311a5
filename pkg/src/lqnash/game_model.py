"""Game data model for symmetric M-player linear-quadratic differential games.

Every player i = 1..M has state x_i in R^n and control u_i in R^m with

    dx_i/dt = A1 x_i + (A2/M) sum_j x_j + B1 u_i + (B2/M) sum_j u_j,
    J_i     = (1/2) Integral( x_i' Q x_i + u_i' u_i ) dt,

and plays a symmetric linear feedback u_i = L1 x_i + L2 z on the population
average z = (1/M) sum_j x_j.  Because the game is exchangeable, the pair
(x_1, z) carries everything player 1 needs: this module assembles that
two-block system and converts between value matrices and feedback gains.
The coupling strength lives in w = 1/M, carried by CouplingWeight so the
mean-field limit w = 0 is a first-class citizen.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AsymmetricCost, DimensionMismatch, NotPositiveSemidefinite
from .tolerances import DEFAULT, Tolerances

__all__ = [
    "GameParams",
    "CouplingWeight",
    "FeedbackGains",
    "AugmentedSystem",
    "validate_game",
    "augmented_dynamics",
    "extract_gains",
]


def _frozen(a) -> np.ndarray:
    """Return a read-only float64 copy so dataclass holders stay immutable."""
    out = np.array(a, dtype=float, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GameParams:
    """Problem data (A1, A2, B1, B2, Q) with state dim n and control dim m."""

    A1: np.ndarray
    A2: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    Q: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        for name in ("A1", "A2", "B1", "B2", "Q"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @classmethod
    def from_matrices(cls, A1, A2, B1, B2, Q) -> "GameParams":
        A1 = np.atleast_2d(np.asarray(A1, dtype=float))
        B1 = np.atleast_2d(np.asarray(B1, dtype=float))
        return cls(A1, np.atleast_2d(A2), B1, np.atleast_2d(B2),
                   np.atleast_2d(Q), n=A1.shape[0], m=B1.shape[1])

    @property
    def b_sum(self) -> np.ndarray:
        """B1 + B2, the control matrix seen by the population average."""
        return self.B1 + self.B2


@dataclass(frozen=True)
class CouplingWeight:
    """Coupling strength w = 1/M; w = 0 encodes the infinite-population limit."""

    w: float
    M: int | None = None

    def __post_init__(self):
        if self.M is not None:
            if int(self.M) != self.M or self.M < 2:
                raise ValueError(f"player count must be an integer >= 2, got {self.M}")
            object.__setattr__(self, "M", int(self.M))
            object.__setattr__(self, "w", 1.0 / self.M)
        if not 0.0 <= self.w <= 0.5:
            raise ValueError(f"coupling weight must lie in [0, 1/2], got {self.w}")

    @classmethod
    def from_players(cls, M: int) -> "CouplingWeight":
        return cls(w=1.0 / M, M=M)

    @classmethod
    def limit(cls) -> "CouplingWeight":
        return cls(w=0.0)


@dataclass(frozen=True)
class FeedbackGains:
    """Symmetric stationary feedback u_i = L1 x_i + L2 z (both m-by-n)."""

    L1: np.ndarray
    L2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "L1", _frozen(self.L1))
        object.__setattr__(self, "L2", _frozen(self.L2))

    def stacked(self) -> np.ndarray:
        """The m-by-2n matrix [L1 L2] acting on (x_1, z)."""
        return np.hstack([self.L1, self.L2])


@dataclass(frozen=True)
class AugmentedSystem:
    """Two-block dynamics d/dt (x_1, z) = A (x_1, z) + B u_1.

    Opponents' feedback is already folded into A; u_1 is still free, so this
    is exactly the linear-quadratic problem player 1 faces.
    """

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "B", _frozen(self.B))


def validate_game(params: GameParams, tol: Tolerances = DEFAULT) -> GameParams:
    """Check shapes and cost-matrix structure; return params with Q symmetrized.

    Raises DimensionMismatch for shape errors, AsymmetricCost when the
    asymmetric part of Q exceeds tol.sym * ||Q||, and NotPositiveSemidefinite
    when Q has an eigenvalue below -tol.psd * ||Q||.
    """
    n, m = params.n, params.m
    expected = {"A1": (n, n), "A2": (n, n), "B1": (n, m), "B2": (n, m), "Q": (n, n)}
    for name, shape in expected.items():
        got = getattr(params, name).shape
        if got != shape:
            raise DimensionMismatch(f"{name} has shape {got}, expected {shape}")
    for name in expected:
        if not np.all(np.isfinite(getattr(params, name))):
            raise DimensionMismatch(f"{name} contains non-finite entries")

    Q = params.Q
    scale = np.linalg.norm(Q, 2)
    if np.linalg.norm(Q - Q.T, 2) > tol.sym * scale:
        raise AsymmetricCost(
            f"cost matrix asymmetry {np.linalg.norm(Q - Q.T, 2):.3e} exceeds "
            f"{tol.sym * scale:.3e}")
    Q = 0.5 * (Q + Q.T)
    lam_min = np.linalg.eigvalsh(Q)[0] if n else 0.0
    if lam_min < -tol.psd * scale:
        raise NotPositiveSemidefinite(
            f"cost matrix eigenvalue {lam_min:.3e} below -{tol.psd * scale:.3e}")

    return GameParams(params.A1, params.A2, params.B1, params.B2, Q, n=n, m=m)


def augmented_dynamics(p: GameParams, g: FeedbackGains,
                       c: CouplingWeight) -> AugmentedSystem:
    """Assemble the (x_1, z) system seen by player 1 when everyone else plays g.

    With w = 1/M the blocks are

        A = [ A1 - w B2 L1          A2 + B2 (L1 + (1-w) L2)               ]
            [ -w (B1+B2) L1         A1 + A2 + (B1+B2)(L1 + (1-w) L2)      ]
        B = [ B1 + w B2 ]
            [ w (B1+B2) ]

    which is the exact reduction of the M-player dynamics, not an
    approximation; at w = 0 the average becomes autonomous.
    """
    w = c.w
    L1, L2 = g.L1, g.L2
    bsum = p.b_sum
    mix = L1 + (1.0 - w) * L2
    A = np.block([
        [p.A1 - w * (p.B2 @ L1), p.A2 + p.B2 @ mix],
        [-w * (bsum @ L1), p.A1 + p.A2 + bsum @ mix],
    ])
    B = np.vstack([p.B1 + w * p.B2, w * bsum])
    return AugmentedSystem(A=A, B=B)


def extract_gains(K, p: GameParams, c: CouplingWeight) -> FeedbackGains:
    """Read the feedback gains off a 2n-by-2n value matrix K.

    [L1 L2] = -[(B1 + w B2)'  w (B1+B2)'] K; K may be an ndarray or any
    object with a ``full`` attribute holding one.
    """
    K = np.asarray(getattr(K, "full", K), dtype=float)
    n = p.n
    if K.shape != (2 * n, 2 * n):
        raise DimensionMismatch(f"value matrix has shape {K.shape}, expected {(2*n, 2*n)}")
    w = c.w
    weights = np.hstack([(p.B1 + w * p.B2).T, w * p.b_sum.T])  # m x 2n
    G = -weights @ K
    return FeedbackGains(L1=G[:, :n], L2=G[:, n:])
