class MetaImputeError(Exception):
    """
    Base class for all exceptions raised by metaimpute.
    """


class DimensionError(MetaImputeError, ValueError):
    """
    Operands of a tensor operation have incompatible shapes.
    """


class NumericError(MetaImputeError, ArithmeticError):
    """
    A tensor operation would divide by an exact zero.
    """


class GraphError(MetaImputeError, RuntimeError):
    """
    The computation graph was used in a way the autodiff engine does not allow,
    e.g. calling ``backward()`` on a non-scalar or calling it twice.
    """


class ConfigurationError(MetaImputeError, ValueError):
    """
    A model or training configuration is internally inconsistent.
    """


class ContractError(MetaImputeError, ValueError):
    """
    An operation received inputs that violate its preconditions,
    such as an empty matrix or an empty observation mask.
    """


class ParseError(MetaImputeError, ValueError):
    """
    A ratings or manifest file contains a line that cannot be parsed.
    """

    def __init__(self, message: str, path: str = "", line_number: int = 0) -> None:
        self.path = path
        self.line_number = line_number
        if line_number:
            message = f"{path}:{line_number}: {message}"
        super().__init__(message)


class PartitionError(MetaImputeError, ValueError):
    """
    A dataset split produced a block without any observed ratings.
    Try another seed.
    """


class SamplingError(MetaImputeError, RuntimeError):
    """
    Episode sampling kept producing empty training or test masks
    until the retry budget ran out.
    """


class NonFiniteGradientError(MetaImputeError, FloatingPointError):
    """
    An optimizer step received a NaN or infinite gradient.
    """

    def __init__(self, parameter: str) -> None:
        self.parameter = parameter
        super().__init__(f"non-finite gradient for parameter {parameter!r}")


class TrainingDivergedError(MetaImputeError, RuntimeError):
    """
    Meta-training produced a non-finite loss. The checkpoint of the last
    finite state is available as ``exc.checkpoint``.
    """

    def __init__(self, message: str, checkpoint: object = None) -> None:
        self.checkpoint = checkpoint
        super().__init__(message)


class CheckpointError(MetaImputeError, ValueError):
    """
    Base class for problems reading a checkpoint file.
    """


class CheckpointFormatError(CheckpointError):
    """
    The file is not a checkpoint, or it is truncated.
    """


class CheckpointVersionError(CheckpointError):
    """
    The checkpoint was written by an unsupported format version.
    """


class CheckpointChecksumError(CheckpointError):
    """
    The checkpoint payload does not match its trailing CRC32.
    """


class ConvergenceError(MetaImputeError, RuntimeError):
    """
    Every hyperparameter setting of a baseline fit diverged.
    """


class IncompatibleArtifactsError(MetaImputeError, ValueError):
    """
    A checkpoint and a manifest were produced with different normalization.
    """
