"""All enums used by the Edge Squeeze models."""

from enum import Enum


class LayerKind(Enum):
    """Enum with the layer kinds the architecture IR supports."""

    CONV = "conv"
    SEPARABLE_CONV = "separable_conv"
    BATCHNORM = "batchnorm"
    RELU = "relu"
    MAXPOOL = "maxpool"
    GLOBAL_AVG_POOL = "global_avg_pool"
    DENSE = "dense"
    DROPOUT = "dropout"
    SIGMOID = "sigmoid"

    def is_conv_like(self) -> bool:
        """Return if this kind carries a spatial kernel."""
        return self in (self.CONV, self.SEPARABLE_CONV)

    def is_parameterized(self) -> bool:
        """Return if this kind owns trainable parameters."""
        return self in (self.CONV, self.SEPARABLE_CONV, self.BATCHNORM, self.DENSE)


class Flow(Enum):
    """Enum with the macro stages of the module graph."""

    ENTRY = "entry"
    MIDDLE = "middle"
    EXIT = "exit"
    HEAD = "head"


class Padding(Enum):
    """Enum with supported padding modes."""

    SAME = "same"
    VALID = "valid"


class LayerRole(Enum):
    """Enum with the fire module roles a layer can be rewritten to."""

    SQUEEZE = "squeeze"
    EXPAND = "expand"


class Mode(Enum):
    """Enum with model execution modes."""

    TRAIN = "train"
    EVAL = "eval"


class Split(Enum):
    """Enum with dataset splits."""

    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class DefectClass(Enum):
    """Enum with the PCB defect classes of the annotated boards."""

    MISSING_HOLE = "missing_hole"
    MOUSE_BITE = "mouse_bite"
    OPEN_CIRCUIT = "open_circuit"
    SHORT = "short"
    SPUR = "spur"
    SPURIOUS_COPPER = "spurious_copper"

    @classmethod
    def parse(cls, val: str) -> "DefectClass":
        """Parse DefectClass from a (loosely formatted) class name."""
        if isinstance(val, DefectClass):
            return val
        normalized = str(val).strip().lower().replace(" ", "_").replace("-", "_")
        return cls(normalized)


class Probe(Enum):
    """Enum with the resource probes the telemetry sampler can read."""

    PROCESS_MEMORY = "process_memory"
    PLATFORM_POWER = "platform_power"
    PLATFORM_ACCEL = "platform_accel"


class EventType(Enum):
    """Enum with possible Events."""

    EPOCH_STARTED = "epoch_started"
    EPOCH_FINISHED = "epoch_finished"
    CHECKPOINT_SAVED = "checkpoint_saved"
    TRAINING_FINISHED = "training_finished"
    DATASET_GENERATED = "dataset_generated"
    SHUTDOWN = "application_shutdown"
