"""Error taxonomy shared by all modules.

The CLI maps these onto exit codes: config problems -> 2, numerical
failures -> 3, property-suite violations -> 4.
"""


class InvalidInputError(ValueError):
    """Caller handed us something structurally wrong (bad grid, bad range)."""


class ConfigError(InvalidInputError):
    """Config file / override problem; message carries line numbers."""


class NumericalFailureError(RuntimeError):
    """A numerical guarantee was violated (PSD beyond tolerance, solver failure)."""


class PropertyViolationError(AssertionError):
    """A randomized property run produced a counterexample."""
