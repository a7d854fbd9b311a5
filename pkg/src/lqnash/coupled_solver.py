"""Finite-population equilibrium solver.

For M symmetric players the stationary symmetric feedback equilibrium is a
symmetric 2n-by-2n matrix K(w), w = 1/M, solving the fixed-point Riccati
equation

    R(K, w) = K A(K, w) + A(K, w)' K + diag(Q, 0) - K B(w) B(w)' K = 0,

where A(K, w) is the two-block drift with the opponents' gains (themselves
read off K) folded in and B(w) the own-control matrix.  Expanding the gain
substitution gives the quartet form used throughout this module:

    A(K, w) = Atilde - E S1 K P - w E S2 K P + w E S1 K + w^2 E S2 K,

with Atilde = [[A1, A2], [0, A1+A2]], E = [B2; B1+B2], E1 = [B1; 0],
S1 = [B1' 0], S2 = [B2' (B1+B2)'], P = [[0, I], [0, I]], and
B(w) = E1 + w E.

The residual is a polynomial in (K, w), so its Frechet derivative in K is
available exactly; newton_solve assembles it directionally (no numerical
differencing) and damps steps by halving until the residual norm drops.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, NoStabilizingSolution, SingularJacobian
from .game_model import CouplingWeight, GameParams, _frozen
from .tolerances import DEFAULT, Tolerances

__all__ = [
    "ResidualMatrix",
    "SolveCertificate",
    "ClosedLoop",
    "residual",
    "newton_solve",
    "closed_loop",
    "continuation_sweep",
]


@dataclass(frozen=True)
class ResidualMatrix:
    """Symmetric residual R(K, w) with its Frobenius norm."""

    value: np.ndarray
    norm: float

    def __post_init__(self):
        object.__setattr__(self, "value", _frozen(self.value))


@dataclass(frozen=True)
class SolveCertificate:
    """Converged Newton solve: the solution, its residual, and iteration facts."""

    K: np.ndarray
    w: float
    residual_norm: float
    iterations: int
    step_norms: tuple

    def __post_init__(self):
        object.__setattr__(self, "K", _frozen(self.K))


@dataclass(frozen=True)
class ClosedLoop:
    """Equilibrium closed-loop matrix for the (x_1, z) pair and its spectrum."""

    Ac: np.ndarray
    spectrum: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Ac", _frozen(self.Ac))
        object.__setattr__(self, "spectrum", np.sort_complex(self.spectrum))


def _pieces(p: GameParams):
    n = p.n
    Z = np.zeros((n, n))
    Atilde = np.block([[p.A1, p.A2], [Z, p.A1 + p.A2]])
    E = np.vstack([p.B2, p.b_sum])
    E1 = np.vstack([p.B1, np.zeros_like(p.B1)])
    S1 = np.hstack([p.B1.T, np.zeros_like(p.B1.T)])
    S2 = np.hstack([p.B2.T, p.b_sum.T])
    eye = np.eye(n)
    P = np.block([[Z, eye], [Z, eye]])
    return Atilde, E, E1, S1, S2, P


def _as_w(w) -> float:
    return float(getattr(w, "w", w))


def drift_matrix(K: np.ndarray, w, p: GameParams) -> np.ndarray:
    """A(K, w): two-block drift with opponents' K-induced gains substituted."""
    w = _as_w(w)
    Atilde, E, _, S1, S2, P = _pieces(p)
    G1 = S1 @ K
    G2 = S2 @ K
    return (Atilde - E @ G1 @ P - w * (E @ G2 @ P)
            + w * (E @ G1) + w * w * (E @ G2))


def input_matrix(w, p: GameParams) -> np.ndarray:
    """B(w) = [B1 + w B2; w (B1+B2)], player 1's own control channel."""
    w = _as_w(w)
    return np.vstack([p.B1 + w * p.B2, w * p.b_sum])


def residual(K: np.ndarray, w, p: GameParams) -> ResidualMatrix:
    """Evaluate R(K, w); R(0, w) = diag(Q, 0) exactly."""
    w = _as_w(w)
    K = np.asarray(getattr(K, "full", K), dtype=float)
    A = drift_matrix(K, w, p)
    B = input_matrix(w, p)
    Qt = np.zeros((2 * p.n, 2 * p.n))
    Qt[:p.n, :p.n] = p.Q
    KB = K @ B
    R = K @ A + A.T @ K + Qt - KB @ KB.T
    R = 0.5 * (R + R.T)
    return ResidualMatrix(value=R, norm=float(np.linalg.norm(R, "fro")))


def frechet_derivative(K: np.ndarray, w, p: GameParams, X: np.ndarray) -> np.ndarray:
    """Exact directional derivative of R at (K, w) along the symmetric X."""
    w = _as_w(w)
    _, E, _, S1, S2, P = _pieces(p)
    A = drift_matrix(K, w, p)
    B = input_matrix(w, p)
    # derivative of A(K, w) in K along X
    dA = (-E @ (S1 @ X) @ P - w * (E @ (S2 @ X) @ P)
          + w * (E @ (S1 @ X)) + w * w * (E @ (S2 @ X)))
    BBt = B @ B.T
    D = (X @ A + A.T @ X + K @ dA + dA.T @ K
         - X @ BBt @ K - K @ BBt @ X)
    return 0.5 * (D + D.T)


def _sym_basis(N: int):
    basis = []
    for i in range(N):
        for j in range(i, N):
            e = np.zeros((N, N))
            e[i, j] = 1.0
            e[j, i] = 1.0
            basis.append(e)
    return basis


def _vech(S: np.ndarray) -> np.ndarray:
    idx = np.triu_indices(S.shape[0])
    return S[idx]


def newton_solve(p: GameParams, w, K_init: np.ndarray | None = None,
                 tol: Tolerances = DEFAULT) -> SolveCertificate:
    """Damped Newton iteration for R(K, w) = 0 over symmetric K.

    The Jacobian is the exact Frechet derivative restricted to the symmetric
    subspace (assembled column-by-column from the bilinear expansion, never by
    finite differencing).  Steps are halved until the residual norm decreases;
    convergence requires ||R||_F <= tol.newton * (1 + ||K||_F) within
    tol.newton_max_iter iterations.

    When K_init is omitted the first-order seed K0 + w*Kbar1 is built from the
    best stable limiting branch (raises NoStabilizingSolution if none exists).
    """
    w = _as_w(w)
    if K_init is None:
        K_init = default_initial_guess(p, w, tol)
    K = np.asarray(getattr(K_init, "full", K_init), dtype=float)
    K = 0.5 * (K + K.T)
    N = 2 * p.n
    basis = _sym_basis(N)
    step_norms = []
    R = residual(K, w, p)
    for it in range(tol.newton_max_iter):
        if R.norm <= tol.newton * (1.0 + np.linalg.norm(K, "fro")):
            return SolveCertificate(K=K, w=w, residual_norm=R.norm,
                                    iterations=it, step_norms=tuple(step_norms))
        J = np.column_stack([_vech(frechet_derivative(K, w, p, e)) for e in basis])
        try:
            coeff = np.linalg.solve(J, -_vech(R.value))
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(f"Newton Jacobian is singular at w={w}") from exc
        if not np.all(np.isfinite(coeff)):
            raise SingularJacobian(f"Newton Jacobian solve overflowed at w={w}")
        X = sum(c * e for c, e in zip(coeff, basis))
        alpha = 1.0
        while alpha > 1e-13:
            K_new = K + alpha * X
            R_new = residual(K_new, w, p)
            if R_new.norm < R.norm:
                break
            alpha *= 0.5
        else:
            raise NoConvergence(
                f"line search stalled at iteration {it}, ||R||={R.norm:.3e}")
        step_norms.append(float(alpha * np.linalg.norm(X, "fro")))
        K, R = K_new, R_new
    if R.norm <= tol.newton * (1.0 + np.linalg.norm(K, "fro")):
        return SolveCertificate(K=K, w=w, residual_norm=R.norm,
                                iterations=tol.newton_max_iter,
                                step_norms=tuple(step_norms))
    raise NoConvergence(
        f"no convergence in {tol.newton_max_iter} iterations, ||R||={R.norm:.3e}")


def default_initial_guess(p: GameParams, w: float, tol: Tolerances = DEFAULT):
    """K0 + w*Kbar1 built from the best stable-attractor limiting branch."""
    from . import perturbation, spectral_riccati

    branches = spectral_riccati.enumerate_y_solutions(p, tol)
    usable = [b for b in branches if b.stabilizing and b.stable_nash]
    if not usable:
        usable = [b for b in branches if b.stabilizing]
    if not usable:
        raise NoStabilizingSolution("no stabilizing limiting branch to continue from")
    branch = usable[0]
    cs = spectral_riccati.solve_classical_are(p, tol)
    K2 = spectral_riccati.solve_k2(p, cs.K1, branch, tol)
    K0 = spectral_riccati.assemble_K0(cs, branch, K2, tol)
    term = perturbation.first_order_term(K0, p, tol)
    return K0.full + w * term.matrix


def closed_loop(K: np.ndarray, w, p: GameParams) -> ClosedLoop:
    """Equilibrium closed loop Ac(w) = A(K, w) - B(w) B(w)' K.

    This is the drift that governs every (x_i, z) pair once player 1's optimal
    feedback is folded in; at w = 0 it reduces to the block-triangular
    [[Ac1, Ac0], [0, Ac2]].
    """
    w = _as_w(w)
    K = np.asarray(getattr(K, "full", K), dtype=float)
    A = drift_matrix(K, w, p)
    B = input_matrix(w, p)
    Ac = A - B @ (B.T @ K)
    return ClosedLoop(Ac=Ac, spectrum=np.linalg.eigvals(Ac))


def continuation_sweep(p: GameParams, M_list, K_start: np.ndarray,
                       tol: Tolerances = DEFAULT) -> list[SolveCertificate]:
    """Solve K(1/M) along a descending ladder of player counts.

    M_list is processed largest-M first (closest to the w = 0 seed); each
    solve warm-starts from the previous solution.  K_start seeds the first
    solve (typically K0 + w*Kbar1 at the largest M).
    """
    Ms = sorted({int(M) for M in M_list}, reverse=True)
    if any(M < 2 for M in Ms):
        raise ValueError("player counts must be >= 2")
    certs = []
    K_prev = np.asarray(getattr(K_start, "full", K_start), dtype=float)
    for M in Ms:
        cert = newton_solve(p, CouplingWeight.from_players(M), K_prev, tol)
        certs.append(cert)
        K_prev = cert.K
    return certs
