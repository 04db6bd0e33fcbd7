"""Exception hierarchy shared by every module of the package."""


class ZetaSpiralError(Exception):
    """Base class for all package errors."""


# evaluation
class PoleAtOne(ZetaSpiralError):
    pass


class PrecisionExhausted(ZetaSpiralError):
    pass


class PoleEncountered(ZetaSpiralError):
    def __init__(self, step, value=None):
        super().__init__(f"pole of zeta reached at iteration {step}")
        self.step = step
        self.value = value


class OverflowEscape(ZetaSpiralError):
    def __init__(self, step, value=None):
        super().__init__(f"iterate left the escape disk at iteration {step}")
        self.step = step
        self.value = value


class GammaPole(ZetaSpiralError):
    pass


# root finding
class NoJunctionFound(ZetaSpiralError):
    pass


class NoConvergence(ZetaSpiralError):
    def __init__(self, iterations, last_residual):
        super().__init__(
            f"Newton iteration did not converge after {iterations} steps "
            f"(last residual {float(last_residual):.3e})"
        )
        self.iterations = iterations
        self.last_residual = last_residual


class DerivativeVanished(ZetaSpiralError):
    pass


class NoSignChange(ZetaSpiralError):
    pass


# orbits
class SolverFailed(ZetaSpiralError):
    def __init__(self, step, cause=None):
        super().__init__(f"preimage solve failed at branch step {step}: {cause}")
        self.step = step
        self.cause = cause


class WrongBasin(ZetaSpiralError):
    def __init__(self, step):
        super().__init__(f"branch element {step} moved away from its anchor")
        self.step = step


# fitting
class ZeroRadius(ZetaSpiralError):
    pass


class DegenerateAbscissa(ZetaSpiralError):
    pass


class VerticalLine(ZetaSpiralError):
    pass


# rendering / pipeline
class DimensionMismatch(ZetaSpiralError):
    pass


class ParseError(ZetaSpiralError):
    def __init__(self, line, text=""):
        super().__init__(f"cannot parse line {line}: {text!r}")
        self.line = line


class MissingInput(ZetaSpiralError):
    pass


class StaleInput(ZetaSpiralError):
    pass


class ChecksumMismatch(ZetaSpiralError):
    pass
