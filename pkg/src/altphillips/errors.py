"""Exception types shared across the package."""


class AltPhillipsError(Exception):
    """Base class for all package errors."""


class DomainError(AltPhillipsError, ValueError):
    """An argument lies outside the admissible range of the formula."""


class SizeError(AltPhillipsError, ValueError):
    """A grid is too small for the requested stencil."""


class ShapeError(AltPhillipsError, ValueError):
    """Two sampled objects do not share the same geometry."""


class NonMonotoneColumnError(AltPhillipsError):
    """A column of w is not strictly increasing in x_d, so it cannot be inverted."""

    def __init__(self, column: int, message: str = ""):
        self.column = column
        super().__init__(message or f"w is not strictly increasing along column {column}")


class SingularJacobianError(AltPhillipsError, ZeroDivisionError):
    """The hodograph derivative h_d vanishes, so the inverse map is undefined."""


class StepTooLargeError(AltPhillipsError):
    """A deformation Id + t*xi has a degenerate Jacobian somewhere on the grid."""


class ManifestError(AltPhillipsError):
    """A CLI manifest failed validation; `problems` maps field paths to messages."""

    def __init__(self, problems: dict):
        self.problems = dict(problems)
        lines = [f"{k}: {v}" for k, v in sorted(self.problems.items())]
        super().__init__("invalid manifest:\n  " + "\n  ".join(lines))
