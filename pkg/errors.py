"""
Exceptions raised by the Floquet engine.

Coefficient problems and numerical problems are kept in separate families so
the runner can map them onto distinct exit codes.
"""


class FloquetError(Exception):
    """Base class for all engine errors"""

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        """Serializable diagnostic payload"""
        payload = {'error': type(self).__name__, 'message': str(self)}
        for key, value in self.details.items():
            if isinstance(value, complex):
                value = [value.real, value.imag]
            payload[key] = value
        return payload


class CoefficientError(FloquetError):
    """Coefficient data cannot be used as given"""


class CoefficientFormatError(CoefficientError):
    """Malformed coefficient document; `pointer` names the offending key"""

    def __init__(self, message, pointer):
        super().__init__(f"{message} (at {pointer})", pointer=pointer)
        self.pointer = pointer


class UnresolvableSign(CoefficientError):
    """The weight changes sign strictly inside a segment"""


class NumericalFailure(FloquetError):
    """A numerical procedure could not deliver a certified result"""


class IntegratorFailure(NumericalFailure):
    pass


class BoxCountUnstable(NumericalFailure):
    pass


class MaxRootsExceeded(NumericalFailure):
    pass


class SeedExhaustion(NumericalFailure):
    pass


class NotSpectral(NumericalFailure):
    pass


class NearCritical(NumericalFailure):
    pass


class CurveMissing(NumericalFailure):
    pass


class ResolventPole(NumericalFailure):
    pass


class DegenerateEigenvector(NumericalFailure):
    pass
