"""Exception hierarchy shared by all quasiperc modules."""


class QuasipercError(Exception):
    """Base class for every error raised by quasiperc."""


class InvalidBasisError(QuasipercError, ValueError):
    pass


class DegenerateBasisError(QuasipercError, ValueError):
    pass


class SingularGridError(QuasipercError):
    """Three grid lines meet at (numerically) one point.

    ``lines`` holds the three ``(family, index)`` pairs involved.
    """

    def __init__(self, lines, point=None):
        self.lines = tuple(lines)
        self.point = point
        names = ", ".join(f"({f}, {k})" for f, k in self.lines)
        super().__init__(f"singular multigrid: lines {names} are concurrent; perturb the offsets")


class DegenerateBandError(QuasipercError, ValueError):
    pass


class InvalidPatchError(QuasipercError, ValueError):
    pass


class WrongFamilyError(QuasipercError, ValueError):
    pass


class UnsupportedRuleError(QuasipercError):
    pass


class InvalidInputError(QuasipercError, ValueError):
    pass


class IndeterminateError(QuasipercError):
    """The query needs tiles beyond the patch; enlarge the patch."""


class MarginError(IndeterminateError):
    pass
