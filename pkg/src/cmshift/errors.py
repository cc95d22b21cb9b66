"""Exception hierarchy; each class carries the CLI exit code it maps to."""


class CMShiftError(Exception):
    exit_code = 1


class ConfigError(CMShiftError):
    exit_code = 1


class NonConvergenceError(CMShiftError):
    """Iterative solver stopped at ``max_iter`` without meeting its tolerance.

    The last iterate is kept on ``last`` so callers can inspect it.
    """

    exit_code = 2

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class ResourceCapError(CMShiftError):
    exit_code = 3


class PreconditionError(CMShiftError):
    exit_code = 4


class InadmissibleWordError(PreconditionError):
    pass


class NearPoleError(PreconditionError):
    pass
