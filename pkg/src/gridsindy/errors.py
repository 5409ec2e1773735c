"""Exception hierarchy.  The CLI maps DataError to exit code 1 and
ConfigError to exit code 2."""


class GridSindyError(Exception):
    pass


class DataError(GridSindyError, ValueError):
    """Input data is unusable (non-finite values, empty input, bad shapes)."""


class FormatError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class SingularityError(DataError):
    """Rank-deficient design with no ridge regularization."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = list(columns)


class ConfigError(GridSindyError, ValueError):
    """Invalid configuration or parameter combination."""


class SelectionError(GridSindyError):
    pass
