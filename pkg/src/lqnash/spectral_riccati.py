"""Spectral construction of the limiting (w = 0) equilibrium value blocks.

At w = 0 the symmetric-feedback Riccati system decouples into three pieces,
solved here in order:

1. the classical ARE  0 = K1 A1 + A1' K1 + Q - K1 B1 B1' K1  for the own-state
   block (solved from the stable invariant subspace of its Hamiltonian);
2. a generalized, generally nonsymmetric Riccati equation
   0 = Y (A1 + A2) + A1' Y - Y (B1+B2) B1' Y + Q  for Y = K1 + K, whose real
   solution set is enumerated from n-dimensional invariant subspaces of the
   perturbed Hamiltonian H = [[A1+A2, -(B1+B2) B1'], [-Q, -A1']]; each
   conjugation-closed eigenvalue subset with an invertible top block yields one
   solution branch Y = V U^{-1};
3. a Lyapunov equation for the aggregate block K2.

Branch bookkeeping matters: several Y branches may stabilize the aggregate
dynamics Ac2 = A1 + A2 - (B1+B2) B1' Y, and only some of them give a
dynamically stable ("attracting") equilibrium.  Every branch is reported with
its spectrum split and flags; nothing is selected silently.
"""

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack
from scipy.optimize import linear_sum_assignment

from .errors import (
    AsymmetryTooLarge,
    BranchCapExceeded,
    NoStabilizingSolution,
    SpectrumMismatch,
    SubspaceDegenerate,
    UnstableAc2,
)
from .game_model import GameParams, _frozen
from .tolerances import DEFAULT, Tolerances

__all__ = [
    "HamiltonianPencil",
    "ClassicalSolution",
    "YSolution",
    "NashValue",
    "SpectrumSplitCertificate",
    "build_hamiltonian",
    "solve_classical_are",
    "enumerate_y_solutions",
    "verify_similarity",
    "solve_k2",
    "assemble_K0",
]

BRANCH_CAP = 8  # full subset enumeration allowed up to this state dimension


@dataclass(frozen=True)
class HamiltonianPencil:
    """The 2n-by-2n Hamiltonian-like matrix whose invariant subspaces encode Y."""

    H: np.ndarray
    n: int

    def __post_init__(self):
        object.__setattr__(self, "H", _frozen(self.H))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.H, 2))


@dataclass(frozen=True)
class ClassicalSolution:
    """Stabilizing solution of the own-state ARE with its closed-loop data."""

    K1: np.ndarray
    Ac1: np.ndarray
    spectrum: np.ndarray
    residual_norm: float

    def __post_init__(self):
        for name in ("K1", "Ac1"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        object.__setattr__(self, "spectrum",
                           np.sort_complex(np.asarray(self.spectrum)))


@dataclass(frozen=True)
class YSolution:
    """One solution branch of the generalized aggregate Riccati equation.

    mirror_spectrum holds the eigenvalues of -(A1' - Y (B1+B2) B1'), the
    complement of the Ac2 spectrum inside spectrum(H).  stable_nash records
    whether every pairwise sum of an Ac2 eigenvalue and an eigenvalue of
    A1' - Y (B1+B2) B1' has negative real part, i.e. whether the branch is an
    attractor of the backward Riccati flow.
    """

    Y: np.ndarray
    Ac2: np.ndarray
    Ac2_spectrum: np.ndarray
    mirror_spectrum: np.ndarray
    stabilizing: bool
    stable_nash: bool
    branch_sign: int | None
    residual_norm: float
    cond_U: float

    def __post_init__(self):
        for name in ("Y", "Ac2"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        for name in ("Ac2_spectrum", "mirror_spectrum"):
            object.__setattr__(self, name,
                               np.sort_complex(np.asarray(getattr(self, name))))

    @classmethod
    def from_matrix(cls, Y, p: GameParams, tol: Tolerances = DEFAULT,
                    branch_sign: int | None = None) -> "YSolution":
        """Build a branch record from a candidate Y matrix (no gating)."""
        Y = np.asarray(Y, dtype=float)
        return _make_y_solution(Y, p, tol, branch_sign=branch_sign,
                                cond_U=float("nan"))


@dataclass(frozen=True)
class SpectrumSplitCertificate:
    """Matching between spectrum(H) and the union of the two split spectra."""

    hamiltonian_spectrum: np.ndarray
    split_spectrum: np.ndarray
    pairing: np.ndarray
    max_mismatch: float


@dataclass(frozen=True)
class NashValue:
    """Block value matrix K0 = [[K1, K], [K', K2]] of the limiting equilibrium."""

    K1: np.ndarray
    K: np.ndarray
    K2: np.ndarray
    full: np.ndarray

    def __post_init__(self):
        for name in ("K1", "K", "K2", "full"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def Y(self) -> np.ndarray:
        return self.K1 + self.K

    def ac1(self, p: GameParams) -> np.ndarray:
        """Own-state closed loop A1 - B1 B1' K1."""
        return p.A1 - p.B1 @ p.B1.T @ self.K1

    def ac2(self, p: GameParams) -> np.ndarray:
        """Aggregate closed loop A1 + A2 - (B1+B2) B1' (K1 + K)."""
        return p.A1 + p.A2 - p.b_sum @ p.B1.T @ self.Y

    def ac0(self, p: GameParams) -> np.ndarray:
        """Cross block A2 - B2 B1' (K1+K) - B1 B1' K; equals ac2 - ac1."""
        return p.A2 - p.B2 @ p.B1.T @ self.Y - p.B1 @ p.B1.T @ self.K


# ---------------------------------------------------------------------------
# Hamiltonian assembly and invariant-subspace machinery
# ---------------------------------------------------------------------------

def build_hamiltonian(p: GameParams) -> HamiltonianPencil:
    """H = [[A1+A2, -(B1+B2) B1'], [-Q, -A1']]; its n-dim invariant subspaces
    [U; V] with invertible U give exactly the solutions Y = V U^{-1}."""
    H = np.block([
        [p.A1 + p.A2, -p.b_sum @ p.B1.T],
        [-p.Q, -p.A1.T],
    ])
    return HamiltonianPencil(H=H, n=p.n)


def _schur_blocks(T: np.ndarray):
    """Diagonal block layout of a real Schur form: list of (start, size, eigs)."""
    N = T.shape[0]
    blocks = []
    i = 0
    while i < N:
        if i + 1 < N and T[i + 1, i] != 0.0:
            eigs = np.linalg.eigvals(T[i:i + 2, i:i + 2])
            blocks.append((i, 2, eigs))
            i += 2
        else:
            blocks.append((i, 1, np.array([complex(T[i, i])])))
            i += 1
    return blocks


def _reorder_front(T: np.ndarray, Z: np.ndarray, sizes, selected):
    """Move the selected Schur blocks (by index into sizes) to the top left.

    Returns the reordered (T, Z) or None when LAPACK reports a failed swap
    (nearly confluent eigenvalues), in which case the subset is skipped.
    """
    t = np.array(T, order="F")
    q = np.array(Z, order="F")
    order = list(range(len(sizes)))
    target_row = 0
    for rank, sel in enumerate(sorted(selected)):
        j = order.index(sel)
        start = sum(sizes[b] for b in order[:j])
        if start != target_row:
            t, q, info = lapack.dtrexc(t, q, start + 1, target_row + 1)
            if info != 0:
                return None
            order.insert(rank, order.pop(j))
        else:
            order.insert(rank, order.pop(j))
        target_row += sizes[sel]
    return t, q


def _subspace_solution(Zr: np.ndarray, n: int, cond_cap: float):
    """Y = V U^{-1} from the leading n Schur vectors; None if U is too singular."""
    U = Zr[:n, :n]
    V = Zr[n:, :n]
    cond = np.linalg.cond(U)
    if not np.isfinite(cond) or cond > cond_cap:
        return None
    Y = np.linalg.solve(U.T, V.T).T
    return Y, float(cond)


def _spectral_abscissa(A: np.ndarray) -> float:
    return float(np.max(np.linalg.eigvals(A).real))


def _aggregate_residual(Y: np.ndarray, p: GameParams) -> float:
    R = Y @ (p.A1 + p.A2) + p.A1.T @ Y - Y @ p.b_sum @ p.B1.T @ Y + p.Q
    return float(np.linalg.norm(R, "fro"))


def _scalar_branch_sign(p: GameParams, Y: np.ndarray) -> int | None:
    if p.n != 1 or p.m != 1:
        return None
    a1, a = p.A1[0, 0], p.A2[0, 0]
    bs = p.b_sum[0, 0] * p.B1[0, 0]
    if bs == 0.0:
        return None  # aggregate equation is linear in Y, no +/- branch pair
    lhs = 2.0 * bs * Y[0, 0] - (2.0 * a1 + a)
    return 1 if lhs >= 0 else -1


def _make_y_solution(Y, p, tol, branch_sign, cond_U) -> YSolution:
    margin = tol.stab * max(1.0, np.linalg.norm(build_hamiltonian(p).H, 2))
    Ac2 = p.A1 + p.A2 - p.b_sum @ p.B1.T @ Y
    mirror = -(p.A1.T - Y @ p.b_sum @ p.B1.T)
    ac2_eigs = np.linalg.eigvals(Ac2)
    mirror_eigs = np.linalg.eigvals(mirror)
    stabilizing = float(np.max(ac2_eigs.real)) < -margin
    # attractivity of the branch under the Riccati flow: every cross sum
    # lambda(Ac2) + lambda(A1' - Y (B1+B2) B1') must sit in the open left plane
    stable_nash = float(np.max(ac2_eigs.real) + np.max((-mirror_eigs).real)) < -margin
    if branch_sign is None:
        branch_sign = _scalar_branch_sign(p, Y)
    return YSolution(
        Y=Y, Ac2=Ac2, Ac2_spectrum=ac2_eigs, mirror_spectrum=mirror_eigs,
        stabilizing=stabilizing, stable_nash=stable_nash,
        branch_sign=branch_sign,
        residual_norm=_aggregate_residual(Y, p), cond_U=cond_U)


# ---------------------------------------------------------------------------
# Classical own-state ARE
# ---------------------------------------------------------------------------

def solve_classical_are(p: GameParams, tol: Tolerances = DEFAULT) -> ClassicalSolution:
    """Stabilizing K1 from the stable subspace of the classical Hamiltonian.

    Raises NoStabilizingSolution when the ordered Schur form does not expose an
    n-dimensional strictly stable subspace with an invertible top block, or
    when the assembled K1 fails its residual or definiteness certificates.
    """
    n = p.n
    Hc = np.block([[p.A1, -p.B1 @ p.B1.T], [-p.Q, -p.A1.T]])
    T, Z, sdim = sla.schur(Hc, output="real", sort="lhp")
    if sdim != n:
        raise NoStabilizingSolution(
            f"stable subspace has dimension {sdim}, expected {n}")
    picked = _subspace_solution(Z, n, tol.cond)
    if picked is None:
        raise NoStabilizingSolution("stable subspace has a singular top block")
    K1, _ = picked
    K1 = 0.5 * (K1 + K1.T)
    res = K1 @ p.A1 + p.A1.T @ K1 + p.Q - K1 @ p.B1 @ p.B1.T @ K1
    res_norm = float(np.linalg.norm(res, "fro"))
    if res_norm > tol.res * (1.0 + np.linalg.norm(K1, "fro") ** 2):
        raise NoStabilizingSolution(f"ARE residual {res_norm:.3e} too large")
    scale = max(1.0, float(np.linalg.norm(K1, 2)))
    if n and np.linalg.eigvalsh(K1)[0] < -tol.psd * scale:
        raise NoStabilizingSolution("stabilizing solution is not positive semidefinite")
    Ac1 = p.A1 - p.B1 @ p.B1.T @ K1
    return ClassicalSolution(K1=K1, Ac1=Ac1,
                             spectrum=np.linalg.eigvals(Ac1),
                             residual_norm=res_norm)


# ---------------------------------------------------------------------------
# Branch enumeration for the aggregate equation
# ---------------------------------------------------------------------------

def enumerate_y_solutions(p: GameParams, tol: Tolerances = DEFAULT,
                          full: bool | None = None) -> list[YSolution]:
    """All real solution branches Y = V U^{-1} of the aggregate Riccati equation.

    Every conjugation-closed n-subset of spectrum(H) is realized by reordering
    the real Schur form of H (complex pairs move as single 2x2 blocks).
    Subsets whose top block U is numerically singular (cond > tol.cond) or
    whose residual certificate fails are dropped; if no subset at all has an
    invertible top block, SubspaceDegenerate is raised.

    Branches are sorted stabilizing-first, then by the spectral abscissa of
    Ac2 ascending.  With ``full=False`` (forced for n > 8) only the principal
    branch — the n eigenvalues of smallest real part — is constructed.
    """
    n = p.n
    if full is None:
        full = n <= BRANCH_CAP
    if full and n > BRANCH_CAP:
        raise BranchCapExceeded(
            f"full enumeration requested for n={n} > cap {BRANCH_CAP}")

    pencil = build_hamiltonian(p)
    T, Z = sla.schur(pencil.H, output="real")
    blocks = _schur_blocks(T)
    sizes = [b[1] for b in blocks]

    if full:
        subsets = [s for r in range(len(blocks) + 1)
                   for s in itertools.combinations(range(len(blocks)), r)
                   if sum(sizes[i] for i in s) == n]
    else:
        principal = _principal_subset(blocks, n)
        subsets = [principal] if principal is not None else []

    found: list[YSolution] = []
    had_candidate = False
    for subset in subsets:
        reordered = _reorder_front(T, Z, sizes, subset)
        if reordered is None:
            continue
        picked = _subspace_solution(reordered[1], n, tol.cond)
        if picked is None:
            continue
        had_candidate = True
        Y, cond = picked
        sol = _make_y_solution(Y, p, tol, branch_sign=None, cond_U=cond)
        if sol.residual_norm > tol.res * (1.0 + np.linalg.norm(Y, "fro") ** 2):
            continue
        if any(np.linalg.norm(sol.Y - other.Y, "fro")
               <= 1e-9 * (1.0 + np.linalg.norm(other.Y, "fro"))
               for other in found):
            continue
        found.append(sol)

    if subsets and not had_candidate:
        raise SubspaceDegenerate(
            "every invariant-subspace candidate has a singular top block")

    def sort_key(sol: YSolution):
        eigs = sol.Ac2_spectrum
        return (not sol.stabilizing,
                float(np.max(eigs.real)),
                tuple(np.round(eigs.real, 9)),
                tuple(np.round(eigs.imag, 9)))

    return sorted(found, key=sort_key)


def _principal_subset(blocks, n):
    """Block subset of total size n minimizing the summed real parts (knapsack)."""
    best = {0: (0.0, ())}
    for idx, (_, size, eigs) in enumerate(blocks):
        weight = float(np.sum(eigs.real))
        for used in sorted(best.keys(), reverse=True):
            total = used + size
            if total > n:
                continue
            cand = (best[used][0] + weight, best[used][1] + (idx,))
            if total not in best or cand < best[total]:
                best[total] = cand
    return best[n][1] if n in best else None


def verify_similarity(h: HamiltonianPencil, y: YSolution,
                      tol: Tolerances = DEFAULT) -> SpectrumSplitCertificate:
    """Certify spectrum(H) = spectrum(Ac2) U mirror_spectrum as multisets.

    The two complex multisets are matched by minimum-cost assignment; if the
    worst matched distance exceeds the eigenvalue tolerance the branch record
    is inconsistent with H and SpectrumMismatch is raised.
    """
    h_eigs = np.linalg.eigvals(h.H)
    split = np.concatenate([y.Ac2_spectrum, y.mirror_spectrum])
    cost = np.abs(h_eigs[:, None] - split[None, :])
    rows, cols = linear_sum_assignment(cost)
    worst = float(cost[rows, cols].max()) if len(rows) else 0.0
    limit = tol.eig * (1.0 + h.norm)
    if worst > limit:
        raise SpectrumMismatch(
            f"spectrum split mismatch {worst:.3e} exceeds {limit:.3e}")
    pairing = np.stack([rows, cols], axis=1)
    return SpectrumSplitCertificate(hamiltonian_spectrum=h_eigs,
                                    split_spectrum=split,
                                    pairing=pairing,
                                    max_mismatch=worst)


# ---------------------------------------------------------------------------
# Aggregate block and assembly
# ---------------------------------------------------------------------------

def solve_k2(p: GameParams, K1: np.ndarray, y: YSolution,
             tol: Tolerances = DEFAULT) -> np.ndarray:
    """Aggregate-block K2 from the Lyapunov equation

        K2 Ac2 + Ac2' K2 + K' Ac0 + Ac0' K + K' B1 B1' K = 0,   K = Y - K1.

    Requires an asymptotically stable Ac2 (raises UnstableAc2 otherwise); the
    quadratic K' B1 B1' K term is part of the steady-state balance and is kept.
    """
    K1 = np.asarray(getattr(K1, "K1", K1), dtype=float)
    Y = y.Y
    K = Y - K1
    Ac2 = y.Ac2
    margin = tol.stab * max(1.0, np.linalg.norm(build_hamiltonian(p).H, 2))
    if _spectral_abscissa(Ac2) >= -margin:
        raise UnstableAc2("aggregate closed loop is not asymptotically stable")
    Ac1 = p.A1 - p.B1 @ p.B1.T @ K1
    Ac0 = Ac2 - Ac1
    C = K.T @ Ac0 + Ac0.T @ K + K.T @ p.B1 @ p.B1.T @ K
    K2 = sla.solve_continuous_lyapunov(Ac2.T, -C)
    K2 = 0.5 * (K2 + K2.T)
    res = K2 @ Ac2 + Ac2.T @ K2 + C
    res_norm = float(np.linalg.norm(res, "fro"))
    if res_norm > tol.res * (1.0 + np.linalg.norm(K2, "fro") ** 2):
        raise UnstableAc2(f"Lyapunov residual {res_norm:.3e} too large")
    return K2


def assemble_K0(k1, y, k2, tol: Tolerances = DEFAULT) -> NashValue:
    """Stack the certified blocks into the symmetric 2n-by-2n value matrix.

    Accepts raw matrices or the ClassicalSolution / YSolution wrappers.
    Raises AsymmetryTooLarge when a diagonal block is asymmetric beyond the
    residual tolerance (they are symmetrized afterwards).
    """
    K1 = np.asarray(getattr(k1, "K1", k1), dtype=float)
    Y = np.asarray(getattr(y, "Y", y), dtype=float)
    K2 = np.asarray(getattr(k2, "K2", k2), dtype=float)
    for name, blk in (("K1", K1), ("K2", K2)):
        asym = np.linalg.norm(blk - blk.T, "fro")
        if asym > tol.res * (1.0 + np.linalg.norm(blk, "fro")):
            raise AsymmetryTooLarge(f"{name} asymmetry {asym:.3e} beyond tolerance")
    K1 = 0.5 * (K1 + K1.T)
    K2 = 0.5 * (K2 + K2.T)
    K = Y - K1
    full = np.block([[K1, K], [K.T, K2]])
    return NashValue(K1=K1, K=K, K2=K2, full=full)
