"""Exception hierarchy shared across roofbench."""


class RoofbenchError(Exception):
    pass


class DimensionError(RoofbenchError, ValueError):
    """Argument shapes or variable counts disagree."""


class PreconditionError(RoofbenchError, ValueError):
    """An input violates a documented precondition (non-member point, non-unitary matrix, ...)."""


class SingularityError(RoofbenchError):
    """Jacobian rank is inconsistent with a nonsingular variety of the expected dimension."""


class InfeasibleError(RoofbenchError):
    """No decomposition reaching the target was found; the target is likely outside conv V."""


class NoSolutionError(RoofbenchError):
    """The optimality system produced no admissible solution."""


class UnsupportedScaleError(RoofbenchError):
    """Problem size exceeds what the exhaustive strategies are meant for."""


class PolynomialParseError(RoofbenchError, ValueError):
    def __init__(self, text, token, position):
        self.text = text
        self.token = token
        self.position = position
        super().__init__(f"cannot parse polynomial {text!r}: unexpected token {token!r} at offset {position}")


class DegenerateInputError(RoofbenchError, ValueError):
    """Contact points coincide, so the tangency matrix is not defined."""


class ConventionError(RoofbenchError, TypeError):
    """Coefficient vectors from different bases or normalization conventions were combined."""
