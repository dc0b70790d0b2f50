"""Exception hierarchy shared by every diracmech module."""


class DiracMechError(Exception):
    """Base class for all library errors."""


class DomainError(DiracMechError, ValueError):
    """A field evaluated to a non-finite value."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ShapeError(DiracMechError, ValueError):
    pass


class RankError(DiracMechError, ValueError):
    pass


class ConfigError(DiracMechError, ValueError):
    pass


class InconsistentState(DiracMechError, ValueError):
    """An initial condition violates a (primary or secondary) constraint."""


LINEAR_VELOCITY_HINT = (
    "the Lagrangian is degenerate beyond the weakly degenerate Chaplygin class; "
    "run hamilton_jacobi.linear_velocity_diagnostic(L, samples) to check whether "
    "L is linear in velocity, in which case the dynamics is first order on Q"
)


class SingularKKT(DiracMechError, ArithmeticError):
    """The saddle-point matrix [[M, -w^T], [w, 0]] is not invertible."""

    def __init__(self, sigma_min, step=None, detail=""):
        where = "" if step is None else f" at step {step}"
        msg = f"singular KKT matrix{where} (smallest singular value {sigma_min:.3e}); "
        if detail:
            msg += detail + "; "
        super().__init__(msg + LINEAR_VELOCITY_HINT)
        self.sigma_min = sigma_min
        self.step = step


class BlowUp(DiracMechError, ArithmeticError):
    def __init__(self, step, norm):
        super().__init__(f"state norm {norm:.3e} exceeded the blow-up bound at step {step}")
        self.step = step
        self.norm = norm


class NotChaplygin(DiracMechError, ValueError):
    pass


class SingularReducedLegendre(DiracMechError, ArithmeticError):
    pass


class SingularAlmostSymplectic(DiracMechError, ArithmeticError):
    pass
