"""Exception hierarchy shared by every module."""


class PlanarCDAError(Exception):
    """Base class for all library errors."""


class ShapeError(PlanarCDAError, ValueError):
    pass


class NumericError(PlanarCDAError, ValueError):
    pass


class SingularityError(PlanarCDAError, ArithmeticError):
    pass


class EmptyInputError(PlanarCDAError, ValueError):
    pass


class PairingError(PlanarCDAError, ValueError):
    pass


class ProtocolError(PlanarCDAError, ValueError):
    pass


class ValidationError(PlanarCDAError, ValueError):
    pass
