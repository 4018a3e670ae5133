"""Exception types raised by the radiallab numerical modules."""
from __future__ import annotations


class RadialLabError(Exception):
    """Base class for every error raised by radiallab."""


class DomainError(RadialLabError, ValueError):
    """An argument lies outside the domain of a formula (r = 0, X <= 0, p <= 1...)."""


class NotApplicableError(RadialLabError, ValueError):
    """A constant or operation was requested outside the regime where it is defined."""


class NotReducibleError(RadialLabError, ValueError):
    """The coefficient M cannot be normalised to +-1 (critical q or M = 0)."""


class SearchExhaustedError(RadialLabError, RuntimeError):
    """A deterministic search finished without finding a witness."""


class UnsupportedBoundError(RadialLabError, ValueError):
    """bound_check was asked for an inequality it does not implement."""


class ConfigError(RadialLabError, ValueError):
    """Integrator or scan configuration is inconsistent."""
