"""
Exception hierarchy shared by services, repositories and the CLI
"""


class PatchRecError(Exception):
    """Base class for all library errors; ``code`` is stable and machine-parsable"""

    code = "patchrec_error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def one_line(self) -> str:
        text = self.message.replace("\n", " ").replace('"', "'")
        return f'error code={self.code} message="{text}"'


class ShapeMismatchError(PatchRecError, ValueError):
    code = "shape_mismatch"


class GridError(PatchRecError, ValueError):
    code = "degenerate_grid"


class PatchIndexError(PatchRecError, IndexError):
    code = "patch_index"


class FileFormatError(PatchRecError, ValueError):
    code = "file_format"


class ConfigurationError(PatchRecError, ValueError):
    code = "configuration"


class TrainingDataError(PatchRecError, ValueError):
    code = "training_data"


class SolverDivergenceError(PatchRecError, RuntimeError):
    code = "solver_divergence"


class InvalidDataError(PatchRecError, ValueError):
    """Non-finite samples in an image, sinogram or dictionary"""

    code = "invalid_data"
