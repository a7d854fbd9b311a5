"""First-order behavior of the equilibrium in the coupling weight w = 1/M.

The map K -> R(K, w) is polynomial, so the solution branch K(w) through the
limiting value K0 is analytic wherever the linearization

    L(X) = X Ac + Ac' X - K0 E S1 X P - (K0 E S1 X P)'

(Ac the block-triangular w = 0 closed loop) is invertible.  L is kept in two
forms that are checked against each other: the direct bilinear form above and
a block-triangular form whose diagonal actions are a Lyapunov operator in
Ac1, a Sylvester operator in (A1' - Y (B1+B2) B1', Ac2), and a Lyapunov
operator in Ac2.  Invertibility and attractivity therefore reduce to pairwise
eigenvalue-sum conditions.

The first series term solves L(Kbar1) = r with r the explicit w-coefficient
of the residual at K0.  Its (1,1) block vanishes identically — the own-state
block is insensitive to population size at first order — and the solver
verifies that structure rather than assuming it.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InconsistentRepresentations, OperatorSingular, R11NotZero
from .game_model import GameParams, _frozen
from .spectral_riccati import NashValue, YSolution
from .tolerances import DEFAULT, Tolerances

__all__ = [
    "OperatorL",
    "InvertibilityVerdict",
    "SeriesTerm",
    "EpsilonBound",
    "build_operator",
    "invertibility_check",
    "first_order_rhs",
    "first_order_term",
    "epsilon_bound",
    "first_order_cost",
]


@dataclass(frozen=True)
class SeriesTerm:
    """Power-series coefficient of K(w) = K0 + w Kbar1 + ... at the given order."""

    order: int
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))

    @property
    def own_block(self) -> np.ndarray:
        n = self.matrix.shape[0] // 2
        return self.matrix[:n, :n]


@dataclass(frozen=True)
class InvertibilityVerdict:
    invertible: bool
    stable_nash: bool
    min_abs_sum: float
    max_real_sum: float


@dataclass(frozen=True)
class EpsilonBound:
    """First-order near-equilibrium estimate (1/2) w v' Kbar1 v per player.

    The sign is not asserted anywhere — Kbar1 is generally indefinite — only
    the O(1/M) magnitude is meaningful.
    """

    M: int
    x0: np.ndarray
    value: float
    per_player: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x0", _frozen(self.x0))
        object.__setattr__(self, "per_player", _frozen(self.per_player))


class OperatorL:
    """The linearization of the w = 0 residual around K0, in two forms."""

    def __init__(self, K0: NashValue, p: GameParams):
        self.p = p
        self.K0 = K0
        n = p.n
        self.n = n
        self.Ac1 = K0.ac1(p)
        self.Ac2 = K0.ac2(p)
        self.Ac0 = K0.ac0(p)
        self.Y = K0.Y
        # shift matrix of the Sylvester diagonal action on the cross block
        self.sylvester_shift = p.A1.T - self.Y @ p.b_sum @ p.B1.T
        # couplings feeding lower blocks from upper ones
        self.P1c = (K0.K1 @ p.B2 + K0.K @ p.b_sum) @ p.B1.T
        self.P2c = (K0.K.T @ p.B2 + K0.K2 @ p.b_sum) @ p.B1.T
        self._Ac_full = np.block([
            [self.Ac1, self.Ac0],
            [np.zeros((n, n)), self.Ac2],
        ])
        self._E = np.vstack([p.B2, p.b_sum])
        self._S1 = np.hstack([p.B1.T, np.zeros_like(p.B1.T)])
        eye = np.eye(n)
        z = np.zeros((n, n))
        self._P = np.block([[z, eye], [z, eye]])

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Direct bilinear form of L(X)."""
        M = self.K0.full @ self._E @ (self._S1 @ X) @ self._P
        return X @ self._Ac_full + self._Ac_full.T @ X - M - M.T

    def apply_blocks(self, chi1: np.ndarray, chi: np.ndarray,
                     chi2: np.ndarray) -> tuple:
        """Block-triangular form acting on (chi1, chi, chi2)."""
        L11 = chi1 @ self.Ac1 + self.Ac1.T @ chi1
        L12 = (chi @ self.Ac2 + self.sylvester_shift @ chi
               + chi1 @ self.Ac0 - self.P1c @ chi1)
        both = chi1 + chi
        L22 = (chi2 @ self.Ac2 + self.Ac2.T @ chi2
               + chi.T @ self.Ac0 + self.Ac0.T @ chi
               - self.P2c @ both - both.T @ self.P2c.T)
        return L11, L12, L22

    def apply_blocks_full(self, X: np.ndarray) -> np.ndarray:
        n = self.n
        L11, L12, L22 = self.apply_blocks(X[:n, :n], X[:n, n:], X[n:, n:])
        return np.block([[L11, L12], [L12.T, L22]])

    def solve(self, r: np.ndarray) -> np.ndarray:
        """Back-substitute the block-triangular system L(X) = r."""
        n = self.n
        r11, r12, r22 = r[:n, :n], r[:n, n:], r[n:, n:]
        try:
            chi1 = sla.solve_continuous_lyapunov(self.Ac1.T, r11)
            rhs12 = r12 - (chi1 @ self.Ac0 - self.P1c @ chi1)
            chi = sla.solve_sylvester(self.sylvester_shift, self.Ac2, rhs12)
            both = chi1 + chi
            rhs22 = r22 - (chi.T @ self.Ac0 + self.Ac0.T @ chi
                           - self.P2c @ both - both.T @ self.P2c.T)
            chi2 = sla.solve_continuous_lyapunov(self.Ac2.T, rhs22)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise OperatorSingular(f"block-triangular solve failed: {exc}") from exc
        chi1 = 0.5 * (chi1 + chi1.T)
        chi2 = 0.5 * (chi2 + chi2.T)
        return np.block([[chi1, chi], [chi.T, chi2]])

    def as_matrix(self) -> np.ndarray:
        """Dense matrix of the direct form on the symmetric-matrix coordinates."""
        N = 2 * self.n
        idx = np.triu_indices(N)
        cols = []
        for i, j in zip(*idx):
            e = np.zeros((N, N))
            e[i, j] = 1.0
            e[j, i] = 1.0
            cols.append(self.apply(e)[idx])
        return np.column_stack(cols)


def build_operator(K0: NashValue, p: GameParams,
                   tol: Tolerances = DEFAULT) -> OperatorL:
    """Construct L(K0, .) and verify its two representations agree.

    Agreement is probed on a handful of deterministic random symmetric
    directions; disagreement beyond the residual tolerance raises
    InconsistentRepresentations (it would indicate an assembly bug, not a
    property of the game).
    """
    op = OperatorL(K0, p)
    rng = np.random.default_rng(0)
    N = 2 * p.n
    scale = 1.0 + float(np.linalg.norm(K0.full, "fro")) ** 2
    for _ in range(5):
        X = rng.standard_normal((N, N))
        X = X + X.T
        gap = np.linalg.norm(op.apply(X) - op.apply_blocks_full(X), "fro")
        if gap > tol.res * scale * (1.0 + np.linalg.norm(X, "fro")):
            raise InconsistentRepresentations(
                f"operator representations disagree by {gap:.3e}")
    return op


def invertibility_check(op: OperatorL, y: YSolution | None = None,
                        k1_spectrum=None,
                        tol: Tolerances = DEFAULT) -> InvertibilityVerdict:
    """Eigenvalue-sum test for invertibility and attractivity of L.

    L is invertible iff no Ac1 eigenvalue pair, no Ac2 eigenvalue pair, and no
    cross pair (Ac2 eigenvalue, eigenvalue of A1' - Y (B1+B2) B1') sums to
    zero; the branch is a stable attractor ("stable Nash") iff all those sums
    have negative real part.
    """
    eigs1 = np.asarray(k1_spectrum) if k1_spectrum is not None \
        else np.linalg.eigvals(op.Ac1)
    eigs2 = y.Ac2_spectrum if y is not None else np.linalg.eigvals(op.Ac2)
    eigsm = np.linalg.eigvals(op.sylvester_shift)
    sums = np.concatenate([
        (eigs1[:, None] + eigs1[None, :]).ravel(),
        (eigs2[:, None] + eigsm[None, :]).ravel(),
        (eigs2[:, None] + eigs2[None, :]).ravel(),
    ])
    min_abs = float(np.min(np.abs(sums)))
    max_real = float(np.max(sums.real))
    return InvertibilityVerdict(invertible=min_abs > tol.eig,
                                stable_nash=max_real < -tol.eig,
                                min_abs_sum=min_abs,
                                max_real_sum=max_real)


def first_order_rhs(K0: NashValue, p: GameParams) -> np.ndarray:
    """Explicit w-coefficient r of the residual along K(w) = K0 + w Kbar1.

    r = K0 E S2 K0 P + (.)' - K0 E S1 K0 - (.)' + K0 (E1 E' + E E1') K0 with
    E = [B2; B1+B2], E1 = [B1; 0], S1 = [B1' 0], S2 = [B2' (B1+B2)'],
    P = [[0, I], [0, I]].  Its (1,1) block vanishes identically.
    """
    n = p.n
    K = K0.full
    E = np.vstack([p.B2, p.b_sum])
    E1 = np.vstack([p.B1, np.zeros_like(p.B1)])
    S1 = np.hstack([p.B1.T, np.zeros_like(p.B1.T)])
    S2 = np.hstack([p.B2.T, p.b_sum.T])
    eye = np.eye(n)
    z = np.zeros((n, n))
    P = np.block([[z, eye], [z, eye]])
    T1 = K @ E @ (S2 @ K) @ P
    T2 = K @ E @ (S1 @ K)
    T3 = K @ E1 @ (E.T @ K)
    r = T1 + T1.T - T2 - T2.T + T3 + T3.T
    return 0.5 * (r + r.T)


def first_order_term(K0: NashValue, p: GameParams,
                     tol: Tolerances = DEFAULT) -> SeriesTerm:
    """Solve L(Kbar1) = r for the first-order series coefficient.

    Asserts the structure theorem r11 = 0 (raises R11NotZero otherwise),
    verifies the solved chi1 is zero before pinning the (1,1) block to exact
    zeros, and certifies the a-posteriori residual of the solve.
    """
    op = build_operator(K0, p, tol)
    verdict = invertibility_check(op, tol=tol)
    if not verdict.invertible:
        raise OperatorSingular(
            f"linearized operator has eigenvalue-sum {verdict.min_abs_sum:.3e}")
    r = first_order_rhs(K0, p)
    n = p.n
    scale = 1.0 + float(np.linalg.norm(K0.full, "fro")) ** 2
    r11_norm = float(np.linalg.norm(r[:n, :n], "fro"))
    if r11_norm > tol.res * scale:
        raise R11NotZero(f"structure theorem violated: ||r11|| = {r11_norm:.3e}")
    X = op.solve(r)
    chi1_norm = float(np.linalg.norm(X[:n, :n], "fro"))
    if chi1_norm > tol.res * scale:
        raise R11NotZero(f"own-state series block nonzero: {chi1_norm:.3e}")
    X[:n, :n] = 0.0
    post = np.linalg.norm(op.apply(X) - r, "fro")
    if post > tol.res * scale * 10.0:
        raise OperatorSingular(f"series solve residual {post:.3e} too large")
    return SeriesTerm(order=1, matrix=X)


def epsilon_bound(term: SeriesTerm, M: int, x0,
                  tol: Tolerances = DEFAULT) -> EpsilonBound:
    """Near-equilibrium loss estimate for the w = 0 strategies at population M.

    x0 may be a single n-vector (shared by all players) or an (M, n) array of
    per-player initial states; each player's estimate uses v = (x_i(0), z(0)).
    """
    if M < 2:
        raise ValueError("population estimate needs M >= 2")
    n = term.matrix.shape[0] // 2
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = np.tile(x0, (M, 1))
    if x0.shape != (M, n):
        raise ValueError(f"x0 must have shape ({M}, {n}), got {x0.shape}")
    z0 = x0.mean(axis=0)
    w = 1.0 / M
    vals = np.array([
        0.5 * w * float(np.concatenate([xi, z0]) @ term.matrix
                        @ np.concatenate([xi, z0]))
        for xi in x0])
    return EpsilonBound(M=M, x0=x0, value=float(vals[0]), per_player=vals)


def first_order_cost(K0: NashValue, term: SeriesTerm, w: float,
                     x1_0, z0) -> float:
    """Player-1 equilibrium cost through first order: (1/2) v'(K0 + w Kbar1)v."""
    v = np.concatenate([np.atleast_1d(np.asarray(x1_0, dtype=float)),
                        np.atleast_1d(np.asarray(z0, dtype=float))])
    return 0.5 * float(v @ (K0.full + w * term.matrix) @ v)
