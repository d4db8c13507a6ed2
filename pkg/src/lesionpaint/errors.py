"""Exception hierarchy shared across the package."""


class LesionPaintError(Exception):
    """Base class for all package errors."""


class ParameterError(LesionPaintError, ValueError):
    pass


class ShapeError(LesionPaintError, ValueError):
    pass


class NiftiFormatError(LesionPaintError, ValueError):
    """Malformed NIfTI header. ``field`` names the offending header field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class UnsupportedDatatypeError(LesionPaintError, ValueError):
    pass


class NumericalError(LesionPaintError, ArithmeticError):
    """Non-finite values encountered during sampling."""

    def __init__(self, message: str, timestep: int | None = None, context: str | None = None):
        parts = [message]
        if timestep is not None:
            parts.append(f"t={timestep}")
        if context:
            parts.append(context)
        super().__init__(" | ".join(parts))
        self.timestep = timestep
        self.context = context


class ViewError(LesionPaintError, RuntimeError):
    pass


class TrainingError(LesionPaintError, RuntimeError):
    def __init__(self, message: str, epoch: int, batch_index: int):
        super().__init__(f"{message} (epoch={epoch}, batch={batch_index})")
        self.epoch = epoch
        self.batch_index = batch_index


class CheckpointError(LesionPaintError, ValueError):
    pass


class IngestionError(LesionPaintError, ValueError):
    pass


class SamplingError(LesionPaintError, ValueError):
    pass


class GenerationError(LesionPaintError, ValueError):
    pass


class UndefinedMetricError(LesionPaintError, ValueError):
    pass


class MaskValidationError(LesionPaintError, ValueError):
    def __init__(self, message: str, offending_voxels: int):
        super().__init__(f"{message}: {offending_voxels} offending voxel(s)")
        self.offending_voxels = offending_voxels
