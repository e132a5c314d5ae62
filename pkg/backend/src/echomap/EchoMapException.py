class EchoMapException(Exception):
    pass


class InvalidSpecException(EchoMapException, ValueError):
    """
    A slab spec, defect rectangle, band table or configuration violates its invariants.
    """
    pass


class ShapeMismatchException(EchoMapException, ValueError):
    pass


class GridException(EchoMapException, ValueError):
    """
    Raised when readings cannot be organized into a regular scan grid, or the grid
    is too small for the requested interpolation method.
    """
    pass


class OutOfExtentException(EchoMapException, ValueError):
    pass


class ZoneTooSmallException(EchoMapException):
    pass


class MissingCacheException(EchoMapException):
    pass


class NonFiniteLossException(EchoMapException, ArithmeticError):
    pass


class FingerprintMismatchException(EchoMapException):
    """
    The sequences were not normalized with the parameters stored in the model.
    """
    pass


class StageException(EchoMapException):
    """
    Wraps any failure raised while a pipeline stage runs, so that diagnostics can be
    tagged with the stage name.
    """

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class DegenerateClusteringException(EchoMapException):
    """
    Fewer distinct values than clusters. Only raised when the caller asks for it;
    otherwise the result carries a ``degenerate`` flag.
    """
    pass
