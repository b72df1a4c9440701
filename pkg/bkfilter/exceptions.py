###############################################################################
# EXCEPTIONS
###############################################################################

class BKFError(Exception):
    """
    Base class for every error raised by bkfilter.
    """
    pass

class UsageError(BKFError):
    """
    A caller passed an option or parameter outside its valid range.
    """
    pass

class DataError(BKFError):
    """
    Input data (a matrix, a file, a trace or a spec) is malformed.
    """
    pass

class NumericalError(BKFError):
    """
    A numerical routine could not complete, usually because a matrix is
    not positive definite.
    """
    pass

class InvalidFlag(UsageError):
    pass

class InvalidAlpha(UsageError, ValueError):
    pass

class InvalidParameter(UsageError, ValueError):
    pass

class ParseError(DataError):
    pass

class InvalidSpec(DataError):
    pass

class DimensionMismatch(DataError, ValueError):
    pass

class DegenerateColumn(DataError):
    pass

class NonFiniteInput(DataError):
    pass

class EmptyTrace(DataError):
    pass

class IndexOutOfRange(DataError, IndexError):
    pass

class EmptyInterval(DataError, ValueError):
    pass

class NotPositiveDefinite(NumericalError):
    pass

class SingularGram(NumericalError):
    """
    The Gram matrix of the originals and knockoffs is singular. Use the
    spike-and-slab prior or enable ridge jitter when 2p >= n.
    """
    pass

class RegularizationFailed(NumericalError):
    pass

class SeparationWarning(UserWarning):
    """
    The probit chain looks completely separated (or the response is
    constant): coefficient draws drift without bound under the flat prior.
    """
    pass

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

def exit_code_for(error):
    """
    Returns the command line exit code for an exception.

    :param Exception error:
        The exception raised by a command.
    """
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(error, (DataError, FileNotFoundError)):
        return EXIT_DATA
    if isinstance(error, UsageError):
        return EXIT_USAGE
    return 1
