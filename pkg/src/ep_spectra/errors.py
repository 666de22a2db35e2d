"""Exception hierarchy.

Domain/precondition violations raise plain ``ValueError``.  Everything
below :class:`NumericalFailure` signals that the numbers themselves did not
cooperate (singular systems, non-convergence, missing coalescence) and maps
to exit code 3 in the command-line front end.
"""


class EPSpectraError(Exception):
    """Base class for all package-specific errors."""


class NumericalFailure(EPSpectraError):
    """A computation could not be completed to the requested accuracy."""


class SingularMatrix(NumericalFailure):
    pass


class NoConvergence(NumericalFailure):
    pass


class NoCoalescence(NumericalFailure):
    """No eigenvalue coalescence was found along a parameter sweep."""


class NotAnEP(NumericalFailure):
    """The matrix is not a single Jordan block at the requested eigenvalue."""


class ChainBreakdown(NumericalFailure):
    """A Jordan-chain least-squares solve was inconsistent."""


class SeriesDiverges(NumericalFailure):
    pass


class RootFindingFailure(NumericalFailure):
    pass


class InsufficientConvergence(NumericalFailure):
    pass


class DegenerateSpectrum(NumericalFailure):
    """Energy gaps too small for the chain-coefficient recurrences."""


class DegenerateClosure(NumericalFailure):
    pass


class DegenerateData(NumericalFailure):
    """Input data cannot support a fit (e.g. all displacements zero)."""
