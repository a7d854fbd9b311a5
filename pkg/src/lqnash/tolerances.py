"""Numerical thresholds shared by the solver modules.

All comparisons in the library run through a single Tolerances instance so
that CLI overrides apply uniformly.  Scale-dependent thresholds take the
relevant matrix norm as an argument instead of baking in a problem size.
"""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    # relative symmetry / positive-semidefiniteness slack for cost matrices
    sym: float = 1e-10
    psd: float = 1e-10
    # residual certificates for algebraic equations (scaled by 1 + ||K||^2)
    res: float = 1e-9
    # eigenvalue matching / invertibility clearance
    eig: float = 1e-7
    # condition-number cap for invariant-subspace bases
    cond: float = 1e10
    # stability margin, scaled by the Hamiltonian norm
    stab: float = 1e-9
    # Newton stop threshold (scaled by 1 + ||K||_F) and iteration cap
    newton: float = 1e-10
    newton_max_iter: int = 50
    # best-response gap certificate, scaled by 1 + ||x0||^2
    gap: float = 1e-8
    # backward Riccati integration: steps = ceil(tf / (tf/fh_steps)) by default
    fh_steps: int = 4000
    # simulator guards
    step_radius: float = 0.1
    overflow: float = 1e12

    def with_overrides(self, **kw) -> "Tolerances":
        """Return a copy with the given fields replaced; unknown names raise."""
        for name in kw:
            if not hasattr(self, name):
                raise ValueError(f"unknown tolerance {name!r}")
        return replace(self, **kw)


DEFAULT = Tolerances()
