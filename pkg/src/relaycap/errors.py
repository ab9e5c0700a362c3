"""Exception types shared across the package."""


class RelayCapError(Exception):
    """Base class for every error raised by this package."""


class InvalidOrder(RelayCapError):
    """H-function orders (m, n) are inconsistent with the parameter rows."""


class NonPositiveScale(RelayCapError):
    """A Gamma-argument scale entry is zero or negative."""


class EmptyContourGap(RelayCapError):
    """Left and right pole families leave no vertical strip for the contour."""


class PoleAtNonPositiveInteger(RelayCapError):
    """log-Gamma requested exactly at a pole."""


class ContourNotConverged(RelayCapError):
    """Contour quadrature failed to stabilise within its point budget."""


class ContourAbscissaTooLarge(RelayCapError):
    """No admissible contour abscissa satisfies the kernel constraint."""


class IntegrandOverflow(RelayCapError):
    """Result magnitude exceeds the double precision range."""


class DivergentIntegral(RelayCapError):
    """A moment or tail integral does not converge."""


class NormalizationError(RelayCapError):
    """A density failed its total-probability sanity check."""


class GridResolutionInsufficient(RelayCapError):
    """Convolution grid lost more probability mass than allowed."""


class RootNotBracketed(RelayCapError):
    """Cutoff root search could not bracket a sign change."""


class InsufficientSamples(RelayCapError):
    """Monte Carlo sample budget is below the supported minimum."""


class UnsupportedHForm(RelayCapError):
    """The requested model has no usable H-function representation."""


class ConfigError(RelayCapError):
    """Experiment configuration is malformed."""
