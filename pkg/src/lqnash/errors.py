"""Exception types raised across the solver stack."""


class LqnashError(Exception):
    """Base class for all library-specific failures."""


# --- game construction -------------------------------------------------------

class DimensionMismatch(LqnashError):
    pass


class AsymmetricCost(LqnashError):
    pass


class NotPositiveSemidefinite(LqnashError):
    pass


# --- spectral / algebraic Riccati machinery ----------------------------------

class NoStabilizingSolution(LqnashError):
    pass


class SubspaceDegenerate(LqnashError):
    pass


class BranchCapExceeded(LqnashError):
    pass


class SpectrumMismatch(LqnashError):
    pass


class UnstableAc2(LqnashError):
    pass


class AsymmetryTooLarge(LqnashError):
    pass


# --- coupled finite-M solver --------------------------------------------------

class NoConvergence(LqnashError):
    pass


class SingularJacobian(LqnashError):
    pass


# --- perturbation operator ----------------------------------------------------

class InconsistentRepresentations(LqnashError):
    pass


class OperatorSingular(LqnashError):
    pass


class R11NotZero(LqnashError):
    pass


# --- equilibrium analysis -----------------------------------------------------

class UnstableClosedLoop(LqnashError):
    pass


class BestResponseAREFailure(LqnashError):
    pass


class FiniteEscapeTime(LqnashError):
    """Backward Riccati flow left the admissible region before reaching t=0."""

    def __init__(self, message, escape_time=None):
        super().__init__(message)
        self.escape_time = escape_time


# --- inverse (market) construction ---------------------------------------------

class SeZeroInfeasible(LqnashError):
    pass


class MarketLQRUnsolvable(LqnashError):
    pass


# --- simulation ----------------------------------------------------------------

class StepTooLarge(LqnashError):
    pass


class Divergence(LqnashError):
    """State norm exceeded the overflow guard during integration."""

    def __init__(self, message, blowup_time=None):
        super().__init__(message)
        self.blowup_time = blowup_time
