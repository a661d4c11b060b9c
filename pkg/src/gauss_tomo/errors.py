"""Exception hierarchy shared across the toolkit."""


class GaussTomoError(Exception):
    """Base class for all toolkit errors."""


class SingularMatrix(GaussTomoError):
    """Covariance matrix is (numerically) singular where an inverse is needed."""


class InvalidProtocol(GaussTomoError):
    """Angle protocol is malformed (zero angles, offset out of range)."""


class RaggedDataset(GaussTomoError):
    """Per-angle sample counts differ where equal counts are required."""


class Underdetermined(GaussTomoError):
    """Fewer than three quadrature angles distinct modulo pi."""


class TooFewSamples(GaussTomoError):
    """Not enough samples for the requested statistical test."""


class DegenerateVariance(GaussTomoError):
    """Sample variance is too close to zero for a meaningful fit."""


class UnknownScheme(GaussTomoError):
    """Dataset declares a measurement scheme this toolkit does not know."""


class DataFormatError(GaussTomoError):
    """Dataset or report file is corrupt or carries an unsupported version."""


class ConfigError(GaussTomoError):
    """Run configuration failed schema validation."""
