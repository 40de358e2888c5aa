"""Pulse-level simulator of a three-qubit Rydberg parity gate.

Subpackages: `opalg` (operator algebra), `model` (parameters, pulses,
Hamiltonians, collapse operators), `dynamics` (propagation and channel
extraction), `analysis` (fidelity and sweeps), `circuits` (noisy gate-level
circuit layer), `cli` (command-line front end).
"""

__version__ = "0.1.0"

from .errors import ConfigError, IntegrationError, RydparityError, ToleranceError

__all__ = [
    "__version__",
    "ConfigError",
    "IntegrationError",
    "RydparityError",
    "ToleranceError",
]
