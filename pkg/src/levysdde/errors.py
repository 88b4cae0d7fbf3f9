"""Exception types raised across the package."""


class LevySDDEError(Exception):
    pass


class QuadratureError(LevySDDEError):
    """Adaptive quadrature did not reach its tolerance.

    ``residual`` is the integrator's own error estimate.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual estimate {residual:.3g})")
        self.residual = residual


class DivergenceError(LevySDDEError):
    """A delay integral over an unbounded tail does not converge."""


class ConsistencyError(LevySDDEError):
    """A path does not join the history it is appended to."""


class BlowUpError(LevySDDEError):
    """The state left the configured bound.

    Raised instead of returning a non-finite trajectory.
    """

    def __init__(self, time, value, bound):
        super().__init__(f"|x| = {value:.3g} exceeded blow-up bound {bound:.3g} at t = {time:.6g}")
        self.time = time
        self.value = value
        self.bound = bound


class ConfigError(LevySDDEError):
    """Configuration could not be parsed or failed validation.

    ``problems`` lists every violation found, not just the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
