"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A component was built or called with an inconsistent configuration."""


class InputError(ValueError):
    """A runtime input (observation, weight vector) violates a precondition."""


class SamplingSupportError(ValueError):
    """The behaviour policy assigned zero probability to an executed action."""


class ProtocolError(RuntimeError):
    """An environment or scheduler was driven outside its legal sequence."""


class LogParseError(ValueError):
    """A recorded behaviour log is malformed."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ConfigValidationError(ValueError):
    """Raised by config parsing with the full list of violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {v}" for v in self.violations))
