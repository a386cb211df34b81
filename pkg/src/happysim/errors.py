"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Invalid geometry, policy tunable, generator spec or config file."""


class AddressRangeError(ValueError):
    """Physical address outside the configured capacity."""


class TraceParseError(ValueError):
    """Malformed trace line.

    Carries the 1-based line number and the offending token so drivers can
    print a diagnostic pointing at the exact spot in the file.
    """

    def __init__(self, message, lineno=None, token=None, path=None):
        self.lineno = lineno
        self.token = token
        self.path = path
        where = ""
        if path is not None:
                where = f"{path}: "
        if lineno is not None:
            where += f"line {lineno}: "
        super().__init__(f"{where}{message}")


class UsageError(ValueError):
    """API misuse, e.g. scoring a run against bounds from another trace."""
