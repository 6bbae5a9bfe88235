"""Exception hierarchy.

Every numerical failure raised by the library derives from :class:`RuelleError`;
the CLI turns these into JSON error records keyed by the class name.
"""


class RuelleError(Exception):
    """Base class for all library errors."""

    @property
    def code(self):
        return type(self).__name__


# lattice
class NotHyperbolic(RuelleError):
    pass


class SingularMatrix(RuelleError):
    pass


class DegenerateFixedEquation(RuelleError):
    pass


class OverflowRisk(RuelleError):
    pass


# analytic_maps
class NewtonDiverged(RuelleError):
    def __init__(self, message, seed_index=None, seed=None):
        super().__init__(message)
        self.seed_index = seed_index
        self.seed = seed


class CountMismatch(RuelleError):
    pass


# koopman
class GridTooSmall(RuelleError):
    pass


class AliasingSuspect(RuelleError):
    pass


class WeightOverflow(RuelleError):
    pass


class EigenNoConverge(RuelleError):
    pass


class PeriodTooDeep(RuelleError):
    pass


# perturb
class NotInGenericSet(RuelleError):
    pass


class DiagonalMatrix(RuelleError):
    pass


class DetDriftDetected(RuelleError):
    pass


# transfer
class EigenvalueOneNotSimple(RuelleError):
    pass
