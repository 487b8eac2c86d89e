"""Exception types shared across the package."""


class PovmcastError(Exception):
    """Base class for all package errors."""


class NotHermitian(PovmcastError):
    pass


class NotPsd(PovmcastError):
    pass


class DimensionMismatch(PovmcastError):
    pass


class SizeLimitExceeded(PovmcastError):
    """An enumeration or tensor power would exceed the configured cap."""


class NegligibleProbability(PovmcastError):
    """Conditioning on an outcome whose probability is below tolerance."""


class EmptyBranch(PovmcastError):
    """Conditioning on a coarse outcome whose element is the zero operator."""


class LabelMismatch(PovmcastError):
    pass


class SizeMismatch(PovmcastError):
    pass


class NotADistribution(PovmcastError):
    pass


class NotNormalized(PovmcastError):
    """Trace or norm deviates from 1 beyond tolerance."""


class EmptySupport(PovmcastError):
    """A pruned or typical set has no members."""


class ConfigError(PovmcastError):
    """Scenario configuration failed validation."""
