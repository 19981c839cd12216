"""Train many submitted models as one merged hybrid on a single device.

Submitted jobs (model graph, dataset, hyper-parameters) merge into one
hybrid model whose sub-graphs stay fully isolated; a schedule policy
orders per-epoch training slices; finished sub-models are separated and
returned immediately. Training is bit-reproducible: a job's parameter
trajectory is identical whether it trains alone or inside any hybrid.
"""

from .errors import (
    AdmissionError,
    FormatError,
    GraphValidationError,
    HybridnnError,
    HyperParamError,
    MergeError,
    ShapeMismatchError,
    StateError,
    UnknownDatasetError,
    UnknownJobError,
)
from .model import HyperParams, ModelGraph, OpNode, TrainingJob, validate_graph
from .engine import backward, forward, infer_shapes, init_params, param_count, param_specs
from .optim import OptimizerState, apply_update, lr_at_epoch
from .tensor import Tensor
from .store import Batch, Dataset, DatasetStore, batches
from .schedule import (
    SchedulePlan,
    Slice,
    check_plan,
    make_plan,
    plan_fcfs,
    plan_priority,
    plan_rr,
    plan_sjf,
)
from .memory import (
    CostModelConfig,
    MemoryEstimate,
    baseline_concurrent,
    estimate_hybrid,
    estimate_model,
    reduction_percent,
    trace_memory,
)
from .unify import HybridModel, SubModel, merge, route
from .separate import load_package, package, separate
from .train import (
    Checkpoint,
    JobResult,
    Trainer,
    TrainReport,
    make_checkpoint,
    restore_checkpoint,
    train_standalone,
)
from .workspace import Workspace

__version__ = "0.1.0"

__all__ = [
    "AdmissionError",
    "FormatError",
    "GraphValidationError",
    "HybridnnError",
    "HyperParamError",
    "MergeError",
    "ShapeMismatchError",
    "StateError",
    "UnknownDatasetError",
    "UnknownJobError",
    "HyperParams",
    "ModelGraph",
    "OpNode",
    "TrainingJob",
    "validate_graph",
    "backward",
    "forward",
    "infer_shapes",
    "init_params",
    "param_count",
    "param_specs",
    "OptimizerState",
    "apply_update",
    "lr_at_epoch",
    "Tensor",
    "Batch",
    "Dataset",
    "DatasetStore",
    "batches",
    "SchedulePlan",
    "Slice",
    "check_plan",
    "make_plan",
    "plan_fcfs",
    "plan_priority",
    "plan_rr",
    "plan_sjf",
    "CostModelConfig",
    "MemoryEstimate",
    "baseline_concurrent",
    "estimate_hybrid",
    "estimate_model",
    "reduction_percent",
    "trace_memory",
    "HybridModel",
    "SubModel",
    "merge",
    "route",
    "load_package",
    "package",
    "separate",
    "Checkpoint",
    "JobResult",
    "Trainer",
    "TrainReport",
    "make_checkpoint",
    "restore_checkpoint",
    "train_standalone",
    "Workspace",
]
