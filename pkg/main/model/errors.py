"""
kworst/main/model/errors.py

The errors raised by the package. All of them are `ValueError`s, so callers
that only care about bad input can keep catching that.

Errors:
* ParseError: A malformed cell in an input file.
* InsufficientDataError: Too few observations for the requested computation.
* ShapeError: Mismatched vector / matrix dimensions or asset sets.
* DegenerateRowError: A constant agency row that can't be feature scaled.
* UndefinedCorrelationError: A correlation with a zero-variance row.
* InvalidArgumentError: An argument outside its admissible range.
* InputError: A matrix that isn't positive semidefinite within tolerance.
* InfeasibleError: Targets that no portfolio can reach.
* ConfigError: A run configuration that can't be used.
* SolverFailedError: A portfolio solve that did not end optimally.
"""


class ParseError(ValueError):
    """
    A malformed cell in an input file.

    Arguments:
    * message (`str`): What was wrong with the cell.
    * row (optional `int`): The 1-based data row of the cell.
    * column (optional `str`): The column name of the cell.
    """

    def __init__(self, message: str, *, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f'row {row}')
        if column is not None:
            where.append(f'column {column!r}')
        if where:
            message = f'{message} (at {", ".join(where)})'
        super().__init__(message)


class InsufficientDataError(ValueError):
    """Too few observations for the requested computation."""


class ShapeError(ValueError):
    """Mismatched vector / matrix dimensions or asset sets."""


class DegenerateRowError(ValueError):
    """A constant agency row that can't be feature scaled."""


class UndefinedCorrelationError(ValueError):
    """A correlation distance asked of a zero-variance row."""


class InvalidArgumentError(ValueError):
    """An argument outside of its admissible range."""


class InputError(ValueError):
    """A matrix that isn't positive semidefinite within tolerance."""


class InfeasibleError(ValueError):
    """Return / score targets that no portfolio on the simplex can reach."""


class ConfigError(ValueError):
    """A run configuration that can't be used."""


class SolverFailedError(ValueError):
    """
    A portfolio solve that did not end optimally. Strategies that have to
    return weights raise it; the solver itself only reports a status.

    Arguments:
    * message (`str`): What was being solved.
    * status (`Any`): The `SolverStatus` the solve ended with.
    """

    def __init__(self, message: str, status):
        self.status = status
        super().__init__(f'{message} ended with status {status.value!r}.')
