"""Exception types shared across the package.

InputError maps to CLI exit code 2 (bad configuration or malformed input),
NumericalError to exit code 3 (a numerical contract was violated at runtime).
"""


class FracafemError(Exception):
    pass


class InputError(FracafemError):
    """Invalid user input: unknown ids, malformed specs, bad arguments."""


class NumericalError(FracafemError):
    """A numerical guarantee failed: solver tolerance, non-monotone
    extrapolation input, negative error squared beyond round-off, fuel
    exhaustion in mesh closure."""
