"""Exception types shared across the toolkit."""


class ContractViolationError(ValueError):
    """An operation was called with arguments violating its contract."""


class ConfigurationError(ValueError):
    """Invalid attack, zoo, or experiment configuration."""


class MisclassifiedInputError(RuntimeError):
    """The protocol requires a correctly classified starting image."""


class GenerationError(RuntimeError):
    """Instance generation could not satisfy its constraints within the retry cap."""


class EmptyPairingError(RuntimeError):
    """A paired metric was requested but no pair qualifies."""


class DegenerateSampleError(RuntimeError):
    """A statistic is undefined for this sample (e.g. zero variance)."""


class BridgeError(RuntimeError):
    """Base class for scorer-bridge failures."""


class BridgeProtocolError(BridgeError):
    """Malformed or inconsistent data crossed the wire."""


class BridgeHandshakeError(BridgeError):
    """The sidecar greeting did not match the configured expectations."""


class BridgeInterruptedError(BridgeError):
    """Timeout or dropped connection mid-run; carries progress for resumption."""

    def __init__(self, message, queries_completed=0):
        super().__init__(message)
        self.queries_completed = queries_completed
