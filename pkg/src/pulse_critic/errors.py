"""Exception hierarchy shared by all pulse_critic modules."""


class PulseCriticError(Exception):
    """Base class for every error raised by this package."""


class InvalidSupport(PulseCriticError):
    pass


class RootSolveFailure(PulseCriticError):
    def __init__(self, s_worst, residual):
        self.s_worst = float(s_worst)
        self.residual = float(residual)
        super().__init__(
            f"Newton solve for phi1 failed: worst residual {residual:.3e} at s={s_worst:.6f}"
        )


class DegenerateJacobian(PulseCriticError):
    def __init__(self, s):
        self.s = float(s)
        super().__init__(f"dF/dphi1 <= 0 at s={s:.6f}")


class ResolutionError(PulseCriticError):
    pass


class HyperbolicityLoss(PulseCriticError):
    def __init__(self, t, r, value=None):
        self.t = float(t)
        self.r = float(r)
        self.value = value
        super().__init__(f"1 + phit^p fell below the hyperbolicity floor at t={t:.6f}, r={r:.6f}")


class NumericalBreakdown(PulseCriticError):
    def __init__(self, t):
        self.t = float(t)
        super().__init__(f"non-finite values in the solution at t={t:.6f}")


class HistoryGap(PulseCriticError):
    pass


class FoliationDegenerate(PulseCriticError):
    def __init__(self, t, r):
        self.t = float(t)
        self.r = float(r)
        super().__init__(f"d_r u >= 0 at t={t:.6f}, r={r:.6f}")


class FitDomainError(PulseCriticError):
    pass


class MixedSweepError(PulseCriticError):
    pass


class NotSmoothError(PulseCriticError):
    pass


class ConfigError(PulseCriticError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
