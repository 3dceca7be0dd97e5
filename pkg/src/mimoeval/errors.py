"""Exception hierarchy shared by all modules."""


class MimoEvalError(Exception):
    """Base class for every error raised by this package."""


class NormalizationRequired(MimoEvalError):
    """A RAW channel tensor was passed where a normalized one is required."""


class BadSubset(MimoEvalError):
    """Antenna subset is malformed or references ports outside the array."""


class DegenerateUser(MimoEvalError):
    """A user row carries zero energy and cannot be normalized."""


class DegenerateChannel(MimoEvalError):
    """The whole channel tensor carries zero energy."""


class Overloaded(MimoEvalError):
    """More users than antennas (K > M)."""


class SingularGram(MimoEvalError):
    """The Gram matrix H H^H is rank deficient."""


class NonFiniteChannel(MimoEvalError):
    """Channel coefficients contain NaN or infinity."""


class GeometryError(MimoEvalError):
    """Invalid array geometry or scenario configuration."""


class GridMismatch(MimoEvalError):
    """Two fingerprint maps were built on different grids."""


class CellError(MimoEvalError):
    """An error raised while evaluating one (M, subset, subcarrier) cell.

    The original exception is chained as ``__cause__``.
    """

    def __init__(self, message, *, M=None, subset=None, subcarrier=None):
        super().__init__(message)
        self.M = M
        self.subset = subset
        self.subcarrier = subcarrier

    def __str__(self):
        base = super().__str__()
        return f"{base} (M={self.M}, subset={self.subset}, subcarrier={self.subcarrier})"


# Channel file parse errors


class ChannelFileError(MimoEvalError):
    """Base class for CTF1 parse errors."""


class BadMagic(ChannelFileError):
    """The file does not start with the CTF1 magic string."""


class MalformedHeader(ChannelFileError):
    """The JSON header is missing, undecodable, or has invalid fields."""


class TruncatedPayload(ChannelFileError):
    """Fewer coefficient bytes than the header declares."""


class DimensionOverflow(ChannelFileError):
    """Header dimensions are nonpositive or exceed the supported size."""
