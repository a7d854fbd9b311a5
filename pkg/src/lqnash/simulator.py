"""Closed-loop trajectory integration and cost evaluation.

Both the full M-player system and its exact two-block (own state, average)
reduction are linear and autonomous once the feedback is fixed, so the RK4
step is a fixed matrix polynomial applied repeatedly.  Using the same
propagator construction on both representations keeps the full-vs-reduced
comparison a pure roundoff question, which is what the reduction-exactness
tests rely on.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .coupled_solver import closed_loop
from .errors import Divergence, StepTooLarge
from .game_model import CouplingWeight, FeedbackGains, GameParams, _frozen, extract_gains

__all__ = [
    "Trajectory",
    "simulate_full",
    "simulate_reduced",
    "evaluate_cost",
]


@dataclass(frozen=True)
class Trajectory:
    """Sampled closed-loop run.

    mode "full": states (S+1, M, n) for the M players, controls (S+1, M, m),
    costs (S+1, M) running per-player integrals.  mode "reduced": states
    (S+1, 2, n) holding the tracked player and the population average,
    controls and costs for the tracked player only.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    costs: np.ndarray
    mode: str

    def __post_init__(self):
        for name in ("times", "states", "controls", "costs"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def x1(self) -> np.ndarray:
        return self.states[:, 0, :]

    @property
    def z(self) -> np.ndarray:
        """Population average; stored explicitly in reduced mode."""
        if self.mode == "reduced":
            return self.states[:, 1, :]
        return self.states.mean(axis=1)

    def to_csv(self) -> str:
        """Flat table with a header row, numbers at full precision."""
        n = self.states.shape[2]
        m = self.controls.shape[2]
        lines = []
        if self.mode == "full":
            cols = (["time", "player"] + [f"x{j}" for j in range(n)]
                    + [f"u{j}" for j in range(m)] + ["cost"])
            lines.append(",".join(cols))
            for k, t in enumerate(self.times):
                for i in range(self.states.shape[1]):
                    row = [f"{t:.17g}", str(i)]
                    row += [f"{v:.17g}" for v in self.states[k, i]]
                    row += [f"{v:.17g}" for v in self.controls[k, i]]
                    row.append(f"{self.costs[k, i]:.17g}")
                    lines.append(",".join(row))
        else:
            cols = (["time"] + [f"x{j}" for j in range(n)]
                    + [f"z{j}" for j in range(n)]
                    + [f"u{j}" for j in range(m)] + ["cost"])
            lines.append(",".join(cols))
            for k, t in enumerate(self.times):
                row = [f"{t:.17g}"]
                row += [f"{v:.17g}" for v in self.states[k, 0]]
                row += [f"{v:.17g}" for v in self.states[k, 1]]
                row += [f"{v:.17g}" for v in self.controls[k, 0]]
                row.append(f"{self.costs[k, 0]:.17g}")
                lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def _grid(T: float, dt: float):
    if T <= 0 or dt <= 0:
        raise ValueError("horizon and step must be positive")
    steps = int(round(T / dt))
    steps = max(steps, 1)
    return steps, np.linspace(0.0, steps * dt, steps + 1)


def _check_step(D_spectrum, dt: float, tol) -> None:
    rho = float(np.max(np.abs(D_spectrum))) if len(D_spectrum) else 0.0
    if dt * rho > tol.step_radius:
        raise StepTooLarge(
            f"dt * spectral radius = {dt * rho:.3e} exceeds {tol.step_radius}; "
            f"use dt <= {tol.step_radius / rho:.3e}")


def _rk4_propagator(D: np.ndarray, dt: float) -> np.ndarray:
    """One-step RK4 matrix for dx/dt = Dx (degree-4 Taylor polynomial)."""
    P = np.eye(D.shape[0])
    out = P.copy()
    for k in range(1, 5):
        P = P @ D * (dt / k)
        out += P
    return out


def _march(Phi: np.ndarray, v0: np.ndarray, steps: int, dt: float, tol):
    out = np.empty((steps + 1, v0.size))
    out[0] = v0
    v = v0
    for k in range(steps):
        v = Phi @ v
        if not np.all(np.isfinite(v)) or float(np.max(np.abs(v))) > tol.overflow:
            raise Divergence(f"state norm exceeded overflow guard at t = {(k + 1) * dt:.6g}",
                             blowup_time=(k + 1) * dt)
        out[k + 1] = v
    return out


def _running_cost(times, states, controls, Q):
    # integrand per player: 1/2 (x'Qx + u'u), shape (S+1, players)
    quad = 0.5 * (np.einsum("kin,nm,kim->ki", states, Q, states)
                  + np.einsum("kim,kim->ki", controls, controls))
    return cumulative_simpson(quad, x=times, axis=0, initial=0.0), quad


def simulate_full(p: GameParams, M: int, g: FeedbackGains, x0_all, T: float,
                  dt: float, tol=None) -> Trajectory:
    """Integrate all M players under the symmetric feedback profile.

    The stacked drift is block I (x) (A1 + B1 L1) plus a rank-one-in-players
    coupling through the average; its spectrum is the union of the decoupled
    block's and the coupled block's, which is what the step-safety check uses.
    """
    from .tolerances import DEFAULT
    tol = DEFAULT if tol is None else tol
    n, m = p.n, p.m
    x0_all = np.asarray(x0_all, dtype=float)
    if x0_all.ndim == 1:
        x0_all = np.tile(x0_all, (M, 1))
    if x0_all.shape != (M, n):
        raise ValueError(f"x0_all must have shape ({M}, {n}), got {x0_all.shape}")

    own = p.A1 + p.B1 @ g.L1
    # every path the average takes into one player's dynamics
    C = p.A2 + p.B1 @ g.L2 + p.B2 @ (g.L1 + g.L2)
    spectrum = np.concatenate([np.linalg.eigvals(own), np.linalg.eigvals(own + C)])
    steps, times = _grid(T, dt)
    _check_step(spectrum, dt, tol)

    D = np.kron(np.eye(M), own) + np.kron(np.full((M, M), 1.0 / M), C)
    Phi = _rk4_propagator(D, dt)
    flat = _march(Phi, x0_all.ravel(), steps, dt, tol)
    states = flat.reshape(steps + 1, M, n)
    zs = states.mean(axis=1)
    controls = (np.einsum("mn,kin->kim", g.L1, states)
                + np.einsum("mn,kn->km", g.L2, zs)[:, None, :])
    costs, _ = _running_cost(times, states, controls, p.Q)
    return Trajectory(times=times, states=states, controls=controls,
                      costs=costs, mode="full")


def simulate_reduced(p: GameParams, K, w, x1_0, z0, T: float, dt: float,
                     tol=None) -> Trajectory:
    """Integrate the exact (tracked player, average) two-block reduction.

    K may be the symmetric 2n-by-2n value matrix from newton_solve or any
    object exposing .full (the limiting block value); w is a CouplingWeight
    or a bare float, with w = 0 giving the block-triangular limit system.
    """
    from .tolerances import DEFAULT
    tol = DEFAULT if tol is None else tol
    n = p.n
    x1_0 = np.asarray(x1_0, dtype=float).reshape(n)
    z0 = np.asarray(z0, dtype=float).reshape(n)
    c = w if isinstance(w, CouplingWeight) else CouplingWeight(w=float(w))
    loop = closed_loop(K, c, p)
    steps, times = _grid(T, dt)
    _check_step(loop.spectrum, dt, tol)

    Phi = _rk4_propagator(loop.Ac, dt)
    flat = _march(Phi, np.concatenate([x1_0, z0]), steps, dt, tol)
    states = flat.reshape(steps + 1, 2, n)
    g = extract_gains(K, p, c)
    controls = np.einsum("mn,kn->km", g.stacked(), flat)[:, None, :]
    costs, _ = _running_cost(times, states[:, :1, :], controls, p.Q)
    return Trajectory(times=times, states=states, controls=controls,
                      costs=costs, mode="reduced")


def evaluate_cost(traj: Trajectory, p: GameParams, fh=None) -> np.ndarray:
    """Per-player quadrature cost, plus the terminal term when fh is given.

    Recomputes the Simpson integral from the stored states and controls (it
    does not just read the running column), so it doubles as a consistency
    check on the trajectory itself.
    """
    players = traj.states[:, :1, :] if traj.mode == "reduced" else traj.states
    quad = 0.5 * (np.einsum("kin,nm,kim->ki", players, p.Q, players)
                  + np.einsum("kim,kim->ki", traj.controls, traj.controls))
    J = simpson(quad, x=traj.times, axis=0)
    if fh is not None:
        xT = players[-1]
        J = J + 0.5 * np.einsum("in,nm,im->i", xT, np.asarray(fh.Qf, dtype=float), xT)
    return np.atleast_1d(J)
