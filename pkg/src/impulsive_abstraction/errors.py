"""Exception types shared across the package."""


class StructureError(ValueError):
    """Dimension mismatch or an argument outside its admissible range."""


class NoAsfCaseError(ValueError):
    """The sign pattern of (kappa_c, kappa_d) matches no simulation-function case."""


class ConstructionError(RuntimeError):
    """A certified construction step cannot be carried out (e.g. contraction lost)."""


class SmallGainError(RuntimeError):
    """The small-gain cycle condition does not hold."""

    def __init__(self, message, cycle=None, product=None):
        super().__init__(message)
        self.cycle = cycle
        self.product = product


class OutOfDomainError(ValueError):
    """A concrete point lies outside the quantized domain."""


class UnsafeRegionError(RuntimeError):
    """Controller refinement was asked for a state outside the winning set."""
