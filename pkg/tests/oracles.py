"""Independent oracles for the test suite.

Everything here is coded from closed forms or textbook constructions, on
purpose NOT reusing the package's assembly routines, so that agreement
between package and oracle is a genuine two-route check:

* scalar_closed_forms   all scalar-game quantities from the quadratic formula
* residual_oracle       Riccati residual assembled from the raw game data
* two_player_solution   M = 2 feedback Nash via coupled-ARE fixed point
* reference_path        finite-horizon backward flow via adaptive RK45
* scalar_market_gain    cross-term scalar LQR gain in closed form
"""

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp


# ---------------------------------------------------------------------------
# scalar closed forms (games with n = m = 1, B1 normalized to 1)
# ---------------------------------------------------------------------------

def scalar_closed_forms(a1, a, b, q):
    """All branch quantities for the scalar game (A1=a1, A2=a, B1=1, B2=b).

    Returns None when no real aggregate branch exists (discriminant < 0).
    Branches keyed by eps = +-1:
      y      = (2 a1 + a + eps sqrt(D)) / (2 (1 + b))
      lam2   = (a - eps sqrt(D)) / 2          (aggregate closed loop)
      lam_m  = (a + eps sqrt(D)) / 2          (mirror eigenvalue)
      k2     = (k^2 - 2 k (a - b y)) / (2 lam2),  k = y - k1
    plus the own-loop pair k1 = a1 + sqrt(a1^2 + q), lam1 = -sqrt(a1^2 + q).
    """
    disc = (2.0 * a1 + a) ** 2 + 4.0 * q * (1.0 + b)
    k1 = a1 + np.sqrt(a1 ** 2 + q)
    lam1 = -np.sqrt(a1 ** 2 + q)
    out = {"k1": k1, "lam1": lam1, "disc": disc, "branches": {}}
    if disc < 0:
        return out
    root = np.sqrt(disc)
    for eps in (+1, -1):
        y = (2.0 * a1 + a + eps * root) / (2.0 * (1.0 + b))
        lam2 = (a - eps * root) / 2.0
        lam_m = (a + eps * root) / 2.0
        k = y - k1
        k2 = (k ** 2 - 2.0 * k * (a - b * y)) / (2.0 * lam2) if lam2 != 0 else np.nan
        out["branches"][eps] = {
            "y": y, "lam2": lam2, "lam_mirror": lam_m, "k": k, "k2": k2,
            "stabilizing": lam2 < 0,
            # flow attractivity: lam2 + shift < 0 with shift = a1 - y(1+b)
            # = -lam_m, so the sum collapses to -eps sqrt(D)
            "stable_nash": lam2 - lam_m < 0,
        }
    # two acceptable aggregate loops exactly when 0 < sqrt(D) < -a
    out["two_acceptable"] = 0.0 < root < -a
    # exactly one stabilizing branch: positive root product of the lam2 quadratic
    out["one_acceptable"] = a1 * (a1 + a) + q * (1.0 + b) > 0
    return out


# ---------------------------------------------------------------------------
# residual, assembled from scratch
# ---------------------------------------------------------------------------

def residual_oracle(K, w, A1, A2, B1, B2, Q):
    """||R(K, w)||_F and the residual matrix, built directly from the data.

    The two-block system for (player 1, average) under symmetric feedback
    [L1 L2] = -[(B1 + w B2)', w (B1+B2)'] K is formed entry by entry from the
    game matrices; the residual is K A + A'K + diag(Q, 0) - K B B' K.  No
    package assembly code is used.
    """
    K = np.asarray(K, dtype=float)
    A1, A2 = np.asarray(A1, float), np.asarray(A2, float)
    B1, B2 = np.asarray(B1, float), np.asarray(B2, float)
    Q = np.asarray(Q, float)
    n = A1.shape[0]
    L = -np.hstack([(B1 + w * B2).T, w * (B1 + B2).T]) @ K
    L1, L2 = L[:, :n], L[:, n:]
    mix = L1 + (1.0 - w) * L2
    # the other players' own-state channel sums to M z - x1, so their L1
    # feedback enters the x1 columns with a minus sign
    A = np.block([
        [A1 - w * B2 @ L1, A2 + B2 @ mix],
        [-w * (B1 + B2) @ L1, A1 + A2 + (B1 + B2) @ mix],
    ])
    B = np.vstack([B1 + w * B2, w * (B1 + B2)])
    Qt = np.zeros((2 * n, 2 * n))
    Qt[:n, :n] = Q
    R = K @ A + A.T @ K + Qt - K @ B @ B.T @ K
    return float(np.linalg.norm(R, "fro")), R


# ---------------------------------------------------------------------------
# M = 2 two-player feedback Nash, solved in (x1, x2) coordinates
# ---------------------------------------------------------------------------

def two_player_solution(A1, A2, B1, B2, Q, iters=400, tol=1e-13):
    """Fixed-point coupled-ARE solve of the two-player game; returns the
    value matrix of player 1 expressed in (x1, z) coordinates, comparable to
    the package's K(w = 1/2).

    Player i's stacked-state problem: drift Ahat, own input Bhat_i, state
    weight diag-embedded Q.  Exchangeability gives player 2's data as the
    swap conjugate of player 1's, so one ARE per sweep suffices.
    Returns (K_in_x1z, gain_history_delta).
    """
    A1, A2 = np.asarray(A1, float), np.asarray(A2, float)
    B1, B2 = np.asarray(B1, float), np.asarray(B2, float)
    Q = np.asarray(Q, float)
    n, m = A1.shape[0], B1.shape[1]
    S = np.block([[np.zeros((n, n)), np.eye(n)], [np.eye(n), np.zeros((n, n))]])
    Ahat = np.block([[A1 + A2 / 2, A2 / 2], [A2 / 2, A1 + A2 / 2]])
    Bhat1 = np.vstack([B1 + B2 / 2, B2 / 2])
    Bhat2 = S @ Bhat1
    Q1 = np.zeros((2 * n, 2 * n))
    Q1[:n, :n] = Q
    F2 = np.zeros((m, 2 * n))
    delta = np.inf
    for _ in range(iters):
        P1 = sla.solve_continuous_are(Ahat - Bhat2 @ F2, Bhat1, Q1, np.eye(m))
        F1 = Bhat1.T @ P1
        F2_new = F1 @ S
        delta = float(np.linalg.norm(F2_new - F2, "fro"))
        F2 = F2_new
        if delta < tol:
            break
    # (x1, x2) = W (x1, z) with x2 = 2z - x1
    W = np.block([[np.eye(n), np.zeros((n, n))], [-np.eye(n), 2 * np.eye(n)]])
    return W.T @ P1 @ W, delta


# ---------------------------------------------------------------------------
# finite-horizon reference integrator (adaptive, independent of fixed RK4)
# ---------------------------------------------------------------------------

def reference_path(A1, A2, B1, B2, Q, Qf, tf, rtol=1e-11, atol=1e-12):
    """(K1, Y, K2) at t = 0 via solve_ivp RK45 on the backward flow."""
    A1, A2 = np.asarray(A1, float), np.asarray(A2, float)
    B1, B2 = np.asarray(B1, float), np.asarray(B2, float)
    Q, Qf = np.asarray(Q, float), np.asarray(Qf, float)
    n = A1.shape[0]
    bs = B1 + B2
    B1B1t = B1 @ B1.T

    def rhs(_tau, vec):
        K1 = vec[:n * n].reshape(n, n)
        Y = vec[n * n:2 * n * n].reshape(n, n)
        K2 = vec[2 * n * n:].reshape(n, n)
        dK1 = K1 @ A1 + A1.T @ K1 + Q - K1 @ B1B1t @ K1
        dY = Y @ (A1 + A2) + A1.T @ Y - Y @ bs @ B1.T @ Y + Q
        K = Y - K1
        Ac1 = A1 - B1B1t @ K1
        Ac2 = A1 + A2 - bs @ B1.T @ Y
        Ac0 = Ac2 - Ac1
        dK2 = K2 @ Ac2 + Ac2.T @ K2 + K.T @ Ac0 + Ac0.T @ K + K.T @ B1B1t @ K
        return np.concatenate([dK1.ravel(), dY.ravel(), dK2.ravel()])

    v0 = np.concatenate([Qf.ravel(), Qf.ravel(), np.zeros(n * n)])
    sol = solve_ivp(rhs, (0.0, tf), v0, rtol=rtol, atol=atol, method="RK45")
    vec = sol.y[:, -1]
    return (vec[:n * n].reshape(n, n), vec[n * n:2 * n * n].reshape(n, n),
            vec[2 * n * n:].reshape(n, n))


# ---------------------------------------------------------------------------
# scalar cross-term LQR
# ---------------------------------------------------------------------------

def scalar_market_gain(a_drift, b_in, qe, se):
    """Stabilizing-gain closed form for min 1/2 int qe z^2 + 2 se z u + u^2.

    Reduction v = u + se z gives drift a_eff = a_drift - b_in se and weight
    q_eff = qe - se^2; the stabilizing value p = (a_eff + sqrt(a_eff^2 +
    q_eff b_in^2)) / b_in^2 and the gain on u is b_in p + se.
    """
    a_eff = a_drift - b_in * se
    q_eff = qe - se ** 2
    rad = a_eff ** 2 + q_eff * b_in ** 2
    if rad < 0 or b_in == 0:
        return None
    p = (a_eff + np.sqrt(rad)) / b_in ** 2
    return b_in * p + se


# ---------------------------------------------------------------------------
# misc helpers
# ---------------------------------------------------------------------------

def lyapunov_value(Acl, W, v):
    """1/2 v' P v with P solving Acl' P + P Acl + W = 0 (stable Acl)."""
    P = sla.solve_continuous_lyapunov(np.asarray(Acl).T, -np.asarray(W, float))
    v = np.asarray(v, float)
    return 0.5 * float(v @ (0.5 * (P + P.T)) @ v)


def random_matrix_game(seed, n=2, m=1):
    """Seeded desk-scale game; may or may not admit a stable branch."""
    rng = np.random.default_rng(seed)
    A1 = 0.8 * rng.normal(size=(n, n)) - 1.2 * np.eye(n)
    A2 = 0.5 * rng.normal(size=(n, n))
    B1 = rng.normal(size=(n, m))
    B2 = 0.4 * rng.normal(size=(n, m))
    root = rng.normal(size=(n, n)) * 0.8
    Q = root.T @ root + 0.1 * np.eye(n)
    return A1, A2, B1, B2, Q
