"""Exception hierarchy shared by every module."""


class RpmixlError(Exception):
    """Base class for all library errors."""


class SpecSyntaxError(RpmixlError):
    """The model document could not be parsed at all."""


class SpecError(RpmixlError):
    """The model document parsed but violates a semantic rule.

    ``path`` is the key path of the offending element, e.g. ``utilities[3].alt``.
    """

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class DataError(RpmixlError):
    """Invalid input data. ``row`` is 1-based over data rows (header excluded)."""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class DrawError(RpmixlError):
    pass


class EstimationError(RpmixlError):
    pass


class SingularCovarianceError(EstimationError):
    """Neither the Hessian nor the BHHH matrix could be inverted.

    ``direction`` is the unit vector spanning the near-null space, keyed by
    parameter name when names are known.
    """

    def __init__(self, message, direction):
        self.direction = direction
        super().__init__(message)


class DegenerateDistributionError(RpmixlError):
    """A random coefficient with zero scale collapses to a point mass.

    ``share`` carries the implied share above zero (0.0 or 1.0, 0.5 at mean 0).
    """

    def __init__(self, message, share):
        self.share = share
        super().__init__(message)
