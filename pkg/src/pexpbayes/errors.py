"""Exception hierarchy shared by all modules."""


class PexpError(Exception):
    """Base class for errors raised by pexpbayes."""


class DomainError(PexpError, ValueError):
    """An argument lies outside the admissible parameter region."""


class UnsupportedBasisError(DomainError):
    """Pointwise synthesis was requested for an abstract sequence."""


class NumericError(PexpError, ArithmeticError):
    """An iterative numerical routine failed to converge or produced non-finite output."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index

    def __reduce__(self):
        # keep the extra attribute across process boundaries
        return (type(self), (str(self), self.index))


class InfeasibleError(NumericError):
    """A Monte-Carlo estimate was requested in a regime it cannot resolve."""


class SamplerError(NumericError):
    """The Gibbs sampler hit a non-finite state; ``dump_path`` points to the state dump."""

    def __init__(self, message, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path

    def __reduce__(self):
        return (type(self), (str(self), self.dump_path))


class ConfigError(PexpError):
    """A configuration document failed schema validation."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field

    def __reduce__(self):
        return (type(self), (str(self), self.field))
