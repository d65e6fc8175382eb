"""Exception hierarchy shared by all modules."""


class MtrlError(Exception):
    """Base class for every error raised by mtrluq."""


class SingularConversionError(MtrlError):
    """S/T conversion denominator vanishes."""


class GridMismatchError(MtrlError):
    """Two networks or results live on different frequency grids."""


class TouchstoneParseError(MtrlError):
    """Malformed Touchstone option line or data block."""


class DegenerateEigenvaluesError(MtrlError):
    """Lines are electrically indistinguishable at a frequency."""


class SingularLineError(MtrlError):
    """A line measurement has a vanishing determinant."""


class AmbiguousSignError(MtrlError):
    """Both square-root branches are equally compatible with the reflect estimate."""


class InconsistentReflectError(MtrlError):
    """Solved reflect magnitude is implausibly large."""


class DegenerateTargetError(MtrlError):
    """Target eigenvalue is not simple; perturbation formulas break down."""


class MissingNominalCalibrationError(MtrlError):
    """Inverse-model update requested without a nominal calibration."""


class CalibrationError(MtrlError):
    """Aggregated per-frequency failures.

    ``issues`` is a list of ``(frequency_index, message)`` tuples.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        head = ", ".join(f"[{i}] {m}" for i, m in self.issues[:5])
        more = "" if len(self.issues) <= 5 else f" (+{len(self.issues) - 5} more)"
        super().__init__(f"calibration failed at {len(self.issues)} frequencies: {head}{more}")


class ConfigError(MtrlError):
    """Invalid run configuration."""


class MonteCarloAbort(MtrlError):
    """Too many Monte Carlo trials failed."""
