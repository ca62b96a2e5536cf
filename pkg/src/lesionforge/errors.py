"""Exception types shared across the package."""


class EmptyMaskError(ValueError):
    """A mask that must contain foreground pixels is empty."""


class PhantomGenerationError(RuntimeError):
    """Phantom construction could not satisfy its constraints (e.g. lesion does not fit)."""


class ConfigurationError(ValueError):
    """A network or training configuration violates its invariants."""


class TransformError(RuntimeError):
    """A rotated/scaled lesion no longer fits its working canvas."""


class PlacementError(RuntimeError):
    """No feasible implant position found within the retry budget."""

    def __init__(self, message: str, tries: int = 0):
        super().__init__(message)
        self.tries = tries


class DatasetBuildError(RuntimeError):
    """Synthetic dataset construction failed; carries diagnostics."""


class TrainingDivergenceError(RuntimeError):
    """A loss became non-finite during optimization."""

    def __init__(self, step: int, message: str = ""):
        super().__init__(message or f"non-finite loss at step {step}")
        self.step = step


class CheckpointNotFoundError(FileNotFoundError):
    """Requested checkpoint id does not exist in the store."""
