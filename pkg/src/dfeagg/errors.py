"""Exception hierarchy shared by every dfeagg module."""


class DFEError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(DFEError, ValueError):
    pass


class SingularMatrixError(DFEError, ValueError):
    pass


class SamplingError(DFEError, RuntimeError):
    """Rejection sampling exhausted its retry budget (broken entropy source)."""


class UnsupportedSecurityLevel(DFEError, ValueError):
    pass


class DuplicateClientError(DFEError, KeyError):
    pass


class UnknownClientError(DFEError, KeyError):
    pass


class ParticipantMismatchError(DFEError, ValueError):
    """Ciphertext senders differ from the set the unmask vector was issued for."""


class DlogNotFoundError(DFEError, ValueError):
    """No exponent below the search bound; usually a quantization-bound misconfiguration."""


class QuantizationRangeError(DFEError, ValueError):
    pass


class ZeroFrequencyError(DFEError, ValueError):
    pass


class TrainingDivergedError(DFEError, FloatingPointError):
    pass


class MessageRangeError(DFEError, ValueError):
    pass


class EmptyClassError(DFEError, ValueError):
    pass


class WireFormatError(DFEError, ValueError):
    pass
