"""weightcdr: embed, extract, and above all disarm LSB steganography payloads
hidden in float32 neural-network weight tensors."""

__version__ = "0.1.0"

from .containers import (
    ContainerFormat,
    ModelContainer,
    TensorSelection,
    WeightTensor,
    load_container,
    parse_container,
    save_container,
    select_tensors,
    serialize_container,
)
from .floatbits import (
    BitWindow,
    bits_to_float,
    float_to_bits,
    max_abs_perturbation,
    read_window,
    write_window,
)
from .stego import (
    ATTACK_PRESETS,
    AttackSpec,
    CapacityReport,
    ExtractionOutcome,
    ExtractionResult,
    PayloadFrame,
    capacity,
    capacity_for,
    embed,
    extract,
)
from .cdr import (
    CdrPolicy,
    DisarmResult,
    PolicyKind,
    QuantOutput,
    QuantParams,
    apply_policy,
    cdr_flp,
    cdr_klrbp,
    cdr_qint8,
)
from .mlp import Activation, DriftReport, MlpLayer, MlpModel, drift, forward
from .analysis import (
    KNOWN_MODEL_NEURON_COUNTS,
    PerturbationReport,
    PreventionTrialReport,
    bit_error_rate,
    capacity_table,
    perturbation_report,
    prevention_trials,
)
from . import errors

__all__ = [name for name in dir() if not name.startswith("_")]
