class FormatError(ValueError):
    """A serialized artifact has the wrong format tag or an unsupported version."""


class ConvergenceError(RuntimeError):
    """Source training finished below the required accuracy."""

    def __init__(self, accuracy: float, threshold: float):
        self.accuracy = accuracy
        self.threshold = threshold
        super().__init__(
            f"Source training reached {accuracy:.1%} training accuracy, below the required {threshold:.1%}"
        )


class ConfigError(ValueError):
    """Experiment configuration failed validation."""
