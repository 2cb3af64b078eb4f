"""Exception hierarchy shared by every module.

Each class carries the CLI exit code it maps to.
"""


class MixdiscError(Exception):
    exit_code = 1
    code = "error"


class DataValidationError(MixdiscError, ValueError):
    """Malformed input data: bad CSV row, non-binary indicator, unknown label."""

    exit_code = 3
    code = "data"

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ParameterError(MixdiscError, ValueError):
    """Tuning parameter outside its admissible range."""

    exit_code = 2
    code = "usage"


class SingularSubmatrix(MixdiscError, ArithmeticError):
    """A covariance submatrix is singular or too ill-conditioned to invert."""

    exit_code = 4
    code = "numerical"

    def __init__(self, subset, cell=None, cond=None):
        self.subset = tuple(subset)
        self.cell = cell
        self.cond = cond
        where = f"cell m={cell}, " if cell is not None else ""
        detail = f" (condition number {cond:.3g})" if cond is not None else ""
        super().__init__(f"singular covariance submatrix: {where}K={set(self.subset)}{detail}")


class UndefinedCell(MixdiscError, ArithmeticError):
    """The classification rule needs a cell probability that is zero."""

    exit_code = 4
    code = "numerical"

    def __init__(self, cell, groups=()):
        self.cell = cell
        self.groups = tuple(groups)
        super().__init__(f"cell m={cell} has zero estimated probability for groups {list(self.groups)}")
