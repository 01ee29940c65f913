"""Exception types shared across the package."""


class SynswitchError(Exception):
    """Base class for all package errors."""


class StructuralError(SynswitchError, ValueError):
    """Shapes, dimensions or specs do not line up."""


class MisuseError(SynswitchError, ValueError):
    """An operation was applied to objects it was not built for."""


class DivergedTrainingError(SynswitchError, ArithmeticError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss


class NoMatchError(SynswitchError, LookupError):
    """A pattern filter selected nothing."""


class DataLoadError(SynswitchError, OSError):
    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason


class PersistenceError(SynswitchError):
    """Base class for file format problems."""


class FormatError(PersistenceError):
    pass


class VersionError(PersistenceError):
    pass


class ChecksumError(PersistenceError):
    pass


class ShapeError(PersistenceError, StructuralError):
    pass


class ConfigError(SynswitchError, ValueError):
    pass
