class OcstabError(Exception):
    pass


class FeasibilityError(OcstabError):
    """A control lies outside its admissible set beyond tolerance."""


class StepSingular(OcstabError):
    def __init__(self, node: int, message: str = ""):
        self.node = node
        super().__init__(message or f"singular trapezoidal step matrix at node {node}")


class NonConvergence(OcstabError):
    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class NotOptimal(OcstabError):
    """The supplied pair fails the optimality certificate."""


class OutsideRegion(OcstabError):
    pass


class ProblemFileError(OcstabError):
    """Malformed or invalid problem file; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
