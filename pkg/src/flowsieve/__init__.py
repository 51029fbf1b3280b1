"""flowsieve: dense two-step transfer flow detection in transaction logs.

Models a transaction log as two coupled sparse tensors (source ->
middle and middle -> destination transfers sharing the middle-account
and attribute modes) and greedily peels them down to the block that
maximizes a flow-anomalousness score. Ships a synthetic injection
generator, an evaluation harness, an extreme-value surprisingness
scorer, and a CLI.
"""

from .errors import (
    ConvergenceError,
    DataError,
    DegenerateFitError,
    DegenerateInputError,
    EmptyBlockError,
    FlowSieveError,
    InfeasibleSamplingError,
    MalformedInputError,
    NumericError,
)
from .estimator import DenseFlowDetector
from .evaluation import (
    CurvePoint,
    GpFit,
    f_measure,
    fauc,
    gp_fit,
    sample_flow_masses,
    surprisingness,
)
from .ingest import (
    IngestConfig,
    IngestResult,
    bin_time,
    load_transactions,
    partition_roles,
    write_transactions,
)
from .injection import (
    InjectionConfig,
    LabeledDataset,
    density_sweep,
    inject,
    random_background,
    read_truth,
    synthetic_tensor_pair,
    write_truth,
)
from .metric import (
    FiberStats,
    MetricParams,
    fiber_stats,
    fiber_weight,
    node_weight,
    score_algorithmic,
    score_exact,
)
from .peeling import DetectionResult, PeelStep, detect, peel_trace
from .tensors import (
    CoupledTensors,
    FiberKey,
    FlowBlock,
    ModeSchema,
    TransferRecord,
    build_coupled,
    build_coupled_from_columns,
    fiber_masses,
    total_block_mass,
)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "CoupledTensors",
    "CurvePoint",
    "DataError",
    "DegenerateFitError",
    "DegenerateInputError",
    "DenseFlowDetector",
    "DetectionResult",
    "EmptyBlockError",
    "FiberKey",
    "FiberStats",
    "FlowBlock",
    "FlowSieveError",
    "GpFit",
    "InfeasibleSamplingError",
    "IngestConfig",
    "IngestResult",
    "InjectionConfig",
    "LabeledDataset",
    "MalformedInputError",
    "MetricParams",
    "ModeSchema",
    "NumericError",
    "PeelStep",
    "TransferRecord",
    "bin_time",
    "build_coupled",
    "build_coupled_from_columns",
    "density_sweep",
    "detect",
    "f_measure",
    "fauc",
    "fiber_masses",
    "fiber_stats",
    "fiber_weight",
    "gp_fit",
    "inject",
    "load_transactions",
    "node_weight",
    "partition_roles",
    "peel_trace",
    "random_background",
    "read_truth",
    "sample_flow_masses",
    "score_algorithmic",
    "score_exact",
    "surprisingness",
    "synthetic_tensor_pair",
    "total_block_mass",
    "write_transactions",
    "write_truth",
]
