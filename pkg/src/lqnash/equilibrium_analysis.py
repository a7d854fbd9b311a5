"""Equilibrium quality checks: classification, deviation gaps, dynamic stability.

Three independent ways of interrogating a candidate equilibrium:

* classify —— static flags (stabilizing / linearization invertible / stable
  attractor) plus the closed-loop spectrum, bundled per branch;
* best_response_gap —— the realized loss of a player who unilaterally swaps
  the prescribed feedback for an exact LQR best response against everyone
  else's strategies (this is the quantity an epsilon-Nash certificate bounds);
* finite_horizon_path —— backward integration of the finite-horizon Riccati
  system at w = 0, used to decide which algebraic branch the dynamic problem
  actually selects as the horizon grows.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (
    BestResponseAREFailure,
    FiniteEscapeTime,
    NotPositiveSemidefinite,
    UnstableClosedLoop,
)
from .game_model import (
    CouplingWeight,
    FeedbackGains,
    GameParams,
    _frozen,
    augmented_dynamics,
)
from .perturbation import EpsilonBound, SeriesTerm, epsilon_bound
from .spectral_riccati import NashValue, YSolution
from .tolerances import DEFAULT, Tolerances

__all__ = [
    "EquilibriumReport",
    "BestResponseReport",
    "FiniteHorizonSpec",
    "FiniteHorizonPath",
    "ConvergenceVerdict",
    "classify",
    "best_response_gap",
    "finite_horizon_path",
    "convergence_check",
]


@dataclass(frozen=True)
class EquilibriumReport:
    """Branch-level summary of a limiting equilibrium candidate."""

    stabilizing: bool
    invertible: bool
    stable_nash: bool
    closed_loop_spectrum: np.ndarray
    branch_sign: int | None
    epsilon: EpsilonBound | None

    def __post_init__(self):
        object.__setattr__(self, "closed_loop_spectrum",
                           np.sort_complex(self.closed_loop_spectrum))


@dataclass(frozen=True)
class BestResponseReport:
    """Per-player deviation gaps against a fixed symmetric profile."""

    gaps: np.ndarray
    profile_values: np.ndarray
    best_response_values: np.ndarray
    K_best: np.ndarray

    def __post_init__(self):
        for name in ("gaps", "profile_values", "best_response_values", "K_best"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True)
class FiniteHorizonSpec:
    """Terminal data and horizon for the backward Riccati integration."""

    Qf: np.ndarray
    tf: float
    steps: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "Qf", _frozen(self.Qf))
        if self.tf <= 0:
            raise ValueError("horizon must be positive")
        if self.steps is not None and self.steps < 1:
            raise ValueError("need at least one integration step")


@dataclass(frozen=True)
class FiniteHorizonPath:
    """Sampled backward solution; arrays are indexed by ascending time."""

    times: np.ndarray
    K1: np.ndarray
    Y: np.ndarray
    K2: np.ndarray

    def __post_init__(self):
        for name in ("times", "K1", "Y", "K2"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def initial(self) -> tuple:
        """(K1, Y, K2) at t = 0, the long-horizon end of the backward flow."""
        return self.K1[0], self.Y[0], self.K2[0]


@dataclass(frozen=True)
class ConvergenceVerdict:
    converged: bool
    k1_error: float
    y_error: float
    k2_error: float

    def __bool__(self) -> bool:
        return self.converged


def classify(p: GameParams, branch: YSolution, K0: NashValue,
             term: SeriesTerm | None = None, M: int | None = None,
             x0=None, tol: Tolerances = DEFAULT) -> EquilibriumReport:
    """Bundle the static flags for one branch.

    ``stabilizing`` requires both closed-loop blocks (own-state Ac1 and
    aggregate Ac2) to be asymptotically stable; ``invertible`` and
    ``stable_nash`` come from the eigenvalue-sum test on the linearized
    operator.  When term, M and x0 are all supplied the first-order
    epsilon estimate is attached.
    """
    from .perturbation import build_operator, invertibility_check

    ac1 = K0.ac1(p)
    ac1_eigs = np.linalg.eigvals(ac1)
    margin = tol.stab * max(1.0, float(np.linalg.norm(K0.full, "fro")))
    stabilizing = bool(branch.stabilizing
                       and float(np.max(ac1_eigs.real)) < -margin)
    op = build_operator(K0, p, tol)
    verdict = invertibility_check(op, branch, ac1_eigs, tol)
    spectrum = np.concatenate([ac1_eigs, branch.Ac2_spectrum])
    eps = None
    if term is not None and M is not None and x0 is not None:
        eps = epsilon_bound(term, M, x0, tol)
    return EquilibriumReport(stabilizing=stabilizing,
                             invertible=verdict.invertible,
                             stable_nash=verdict.stable_nash,
                             closed_loop_spectrum=spectrum,
                             branch_sign=branch.branch_sign,
                             epsilon=eps)


def best_response_gap(p: GameParams, g: FeedbackGains, M: int, x0,
                      tol: Tolerances = DEFAULT) -> BestResponseReport:
    """Exact deviation gap for each player against the symmetric profile g.

    Player i's cost under the profile is a Lyapunov value for the closed loop
    (all M players on g); the alternative is the LQR best response on the
    two-block system with everyone else held at g.  The gap J(profile) -
    J(best response) is nonnegative up to the gap tolerance; the profile g is
    eps-Nash exactly when the largest gap is below eps.
    """
    c = CouplingWeight.from_players(M)
    n = p.n
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = np.tile(x0, (M, 1))
    if x0.shape != (M, n):
        raise ValueError(f"x0 must have shape ({M}, {n}), got {x0.shape}")

    aug = augmented_dynamics(p, g, c)
    G = g.stacked()
    Acl = aug.A + aug.B @ G
    margin = tol.stab * max(1.0, float(np.linalg.norm(Acl, 2)))
    if float(np.max(np.linalg.eigvals(Acl).real)) >= -margin:
        raise UnstableClosedLoop("profile closed loop is not asymptotically stable")

    Qt = np.zeros((2 * n, 2 * n))
    Qt[:n, :n] = p.Q
    P_profile = sla.solve_continuous_lyapunov(Acl.T, -(Qt + G.T @ G))
    P_profile = 0.5 * (P_profile + P_profile.T)
    try:
        K_best = sla.solve_continuous_are(aug.A, aug.B, Qt, np.eye(p.m))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise BestResponseAREFailure(f"best-response ARE failed: {exc}") from exc

    z0 = x0.mean(axis=0)
    v = np.hstack([x0, np.tile(z0, (M, 1))])
    profile_vals = 0.5 * np.einsum("ij,jk,ik->i", v, P_profile, v)
    best_vals = 0.5 * np.einsum("ij,jk,ik->i", v, K_best, v)
    gaps = profile_vals - best_vals
    guard = tol.gap * (1.0 + float(np.max(np.sum(x0 * x0, axis=1))))
    if float(np.min(gaps)) < -guard:
        raise BestResponseAREFailure(
            f"negative deviation gap {float(np.min(gaps)):.3e}: value matrices inconsistent")
    return BestResponseReport(gaps=gaps, profile_values=profile_vals,
                              best_response_values=best_vals, K_best=K_best)


def _fh_rhs(p: GameParams, K1, Y, K2):
    """Backward-time derivatives of (K1, Y, K2) at w = 0 (tau = tf - t)."""
    B1B1t = p.B1 @ p.B1.T
    dK1 = K1 @ p.A1 + p.A1.T @ K1 + p.Q - K1 @ B1B1t @ K1
    dY = Y @ (p.A1 + p.A2) + p.A1.T @ Y - Y @ p.b_sum @ p.B1.T @ Y + p.Q
    K = Y - K1
    Ac1 = p.A1 - B1B1t @ K1
    Ac2 = p.A1 + p.A2 - p.b_sum @ p.B1.T @ Y
    Ac0 = Ac2 - Ac1
    dK2 = K2 @ Ac2 + Ac2.T @ K2 + K.T @ Ac0 + Ac0.T @ K + K.T @ B1B1t @ K
    return dK1, dY, dK2


def finite_horizon_path(p: GameParams, spec: FiniteHorizonSpec,
                        tol: Tolerances = DEFAULT) -> FiniteHorizonPath:
    """Integrate the w = 0 finite-horizon Riccati system backward from tf.

    Terminal data: K1(tf) = Qf, Y(tf) = Qf (so the cross block K = Y - K1
    vanishes at the horizon) and K2(tf) = 0.  Fixed-step classical RK4 on the
    stacked system; a blowup beyond the overflow guard raises FiniteEscapeTime
    carrying the time at which the norm was exceeded — Riccati flows can
    legitimately escape in finite time, this is a reported outcome rather
    than a numerical bug.
    """
    n = p.n
    Qf = np.asarray(spec.Qf, dtype=float)
    if Qf.shape != (n, n):
        raise ValueError(f"terminal weight has shape {Qf.shape}, expected {(n, n)}")
    scale = max(1.0, float(np.linalg.norm(Qf, 2)))
    if np.linalg.norm(Qf - Qf.T, 2) > tol.sym * scale:
        raise NotPositiveSemidefinite("terminal weight must be symmetric")
    Qf = 0.5 * (Qf + Qf.T)
    if np.linalg.eigvalsh(Qf)[0] < -tol.psd * scale:
        raise NotPositiveSemidefinite("terminal weight must be positive semidefinite")

    steps = spec.steps if spec.steps is not None else tol.fh_steps
    h = spec.tf / steps
    K1 = Qf.copy()
    Y = Qf.copy()
    K2 = np.zeros((n, n))
    out_K1 = np.empty((steps + 1, n, n))
    out_Y = np.empty((steps + 1, n, n))
    out_K2 = np.empty((steps + 1, n, n))
    out_K1[0], out_Y[0], out_K2[0] = K1, Y, K2

    for k in range(steps):
        a1, b1, c1 = _fh_rhs(p, K1, Y, K2)
        a2, b2, c2 = _fh_rhs(p, K1 + 0.5 * h * a1, Y + 0.5 * h * b1, K2 + 0.5 * h * c1)
        a3, b3, c3 = _fh_rhs(p, K1 + 0.5 * h * a2, Y + 0.5 * h * b2, K2 + 0.5 * h * c2)
        a4, b4, c4 = _fh_rhs(p, K1 + h * a3, Y + h * b3, K2 + h * c3)
        K1 = K1 + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
        Y = Y + (h / 6.0) * (b1 + 2 * b2 + 2 * b3 + b4)
        K2 = K2 + (h / 6.0) * (c1 + 2 * c2 + 2 * c3 + c4)
        biggest = max(np.abs(K1).max(), np.abs(Y).max(), np.abs(K2).max())
        if not np.isfinite(biggest) or biggest > tol.overflow:
            raise FiniteEscapeTime(
                f"backward Riccati flow escaped at t = {spec.tf - (k + 1) * h:.6g}",
                escape_time=spec.tf - (k + 1) * h)
        out_K1[k + 1], out_Y[k + 1], out_K2[k + 1] = K1, Y, K2

    # stored backward (tau ascending): flip to ascending t
    times = spec.tf - h * np.arange(steps + 1)
    order = np.argsort(times)
    return FiniteHorizonPath(times=times[order], K1=out_K1[order],
                             Y=out_Y[order], K2=out_K2[order])


def convergence_check(path: FiniteHorizonPath, K0: NashValue,
                      tol: float = 1e-6) -> ConvergenceVerdict:
    """Did the backward flow settle on the branch encoded by K0?

    Compares (K1, Y, K2) at t = 0 against the algebraic blocks; true when
    every block matches within tol (absolute, Frobenius).
    """
    K1_0, Y_0, K2_0 = path.initial
    e1 = float(np.linalg.norm(K1_0 - K0.K1, "fro"))
    ey = float(np.linalg.norm(Y_0 - K0.Y, "fro"))
    e2 = float(np.linalg.norm(K2_0 - K0.K2, "fro"))
    return ConvergenceVerdict(converged=max(e1, ey, e2) <= tol,
                              k1_error=e1, y_error=ey, k2_error=e2)
