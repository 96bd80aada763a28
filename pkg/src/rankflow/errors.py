"""Exception hierarchy shared by every module."""


class RankflowError(Exception):
    """Base class for all errors raised by rankflow."""


class ModelError(RankflowError, ValueError):
    """Invalid or unsuitable model parameters."""


class NonPositiveSigma(ModelError):
    pass


class DimensionTooSmall(ModelError):
    pass


class UnstableModel(ModelError):
    """Some alpha_k <= 0, so the spacings have no stationary law."""


class DegenerateDrift(ModelError):
    """All drifts are equal; the centered Poincare constant is undefined."""


class DimensionMismatch(RankflowError, ValueError):
    pass


class FactorizationFailure(RankflowError, ArithmeticError):
    pass


class SingularR(RankflowError, ArithmeticError):
    pass


class EmptyWindow(RankflowError, ValueError):
    pass


class TooFewSamples(RankflowError, ValueError):
    pass


class NonDecaying(RankflowError, ValueError):
    pass


class InvalidQuery(RankflowError, ValueError):
    pass


class EpsOutOfRange(RankflowError, ValueError):
    pass


class NTooSmall(RankflowError, ValueError):
    pass


class OffSimplex(RankflowError, ValueError):
    pass


class QuadratureNotConverged(RankflowError, ArithmeticError):
    pass


class ParseError(RankflowError, ValueError):
    pass
