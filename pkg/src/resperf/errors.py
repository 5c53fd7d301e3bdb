"""Exception types shared across the toolkit."""


class ResperfError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ResperfError):
    """A layer configuration violates its feature ranges."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DataError(ResperfError):
    """A dataset file is malformed or contains out-of-range values."""


class SchemaMismatchError(ResperfError):
    """Feature schema or file version does not match what the consumer expects."""


class TransformError(ResperfError):
    """A data transformation was asked to do something degenerate."""


class TrainingError(ResperfError):
    """Training could not proceed (degenerate data, bad hyperparameters)."""


class DivergenceError(TrainingError):
    """Loss became non-finite during training."""

    def __init__(self, epoch, batch):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")


class ModelFileError(ResperfError):
    """A model file is corrupt, truncated, or of an unexpected version."""


class MissingModelError(ResperfError):
    """A prediction needs a (layer kind, phase) model the bundle does not hold."""

    def __init__(self, missing):
        self.missing = list(missing)
        pairs = ", ".join(f"{k}/{p}" for k, p in self.missing)
        super().__init__(f"missing phase models: {pairs}")
