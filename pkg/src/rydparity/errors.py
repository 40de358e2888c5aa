"""Package exception hierarchy.

Contract violations on inputs raise plain ValueError; the classes below
mark failures the CLI maps to dedicated exit codes.
"""


class RydparityError(Exception):
    """Base class for package-specific failures."""


class ConfigError(RydparityError):
    """Invalid or incomplete run configuration (CLI exit code 2)."""


class ToleranceError(RydparityError):
    """A numerical result violated a stated tolerance (CLI exit code 3)."""


class IntegrationError(ToleranceError):
    """Propagation produced non-finite values or drifted beyond tolerance."""
