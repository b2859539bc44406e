"""Exception hierarchy shared by the solver modules."""


class SddeError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(SddeError, ValueError):
    """A numeric parameter lies outside its admissible range."""


class DomainError(SddeError, ValueError):
    """An argument is outside the domain of a function (e.g. a step size > 1)."""


class ProfileError(SddeError, ValueError):
    """A truncation profile is internally inconsistent."""


class GridAlignmentError(SddeError, ValueError):
    """A time or step size does not line up with the Brownian or simulation grid."""


class BlowUpError(SddeError, ArithmeticError):
    """A truncated Euler step produced a non-finite intermediate state."""

    def __init__(self, step, paths=(), detail=""):
        self.step = step
        self.paths = tuple(int(p) for p in paths)
        msg = f"non-finite state at step {step}"
        if self.paths:
            shown = ", ".join(str(p) for p in self.paths[:5])
            more = "" if len(self.paths) <= 5 else f" (+{len(self.paths) - 5} more)"
            msg += f" on path(s) {shown}{more}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
