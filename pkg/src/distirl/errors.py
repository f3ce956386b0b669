class ConfigurationError(ValueError):
    """Invalid construction parameters or config documents."""


class DemoParseError(ValueError):
    """A demonstration file record could not be parsed or validated."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""
