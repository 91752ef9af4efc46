"""Learned storage-structure advisor over deterministic engine simulators.

Pipeline: benchmark the simulated engines (`benchgen`), fit per-engine cost
models (`learner`), cluster co-accessed columns into layout candidates
(`layout`), rank engine x layout structures and apply the improvement
threshold (`advisor`), then rebuild data under the chosen structure
(`converter`).
"""
from .advisor import (
    DEFAULT_EPSILON,
    Recommendation,
    evaluate,
    generate_candidates,
    recommend,
)
from .benchgen import (
    BenchConfig,
    PerfRecord,
    insert_stream_records,
    read_perf_dir,
    read_perf_file,
    run_benchmark,
    sample_runtime,
    training_corpus,
    write_perf_files,
)
from .converter import PartitionManifest, convert, init_partition_dir, load_partition
from .core import (
    AccessOp,
    AdvisorError,
    Candidate,
    DataLayout,
    EngineKind,
    FieldRole,
    FieldSpec,
    LengthKind,
    OpType,
    StorageStructure,
    TableSchema,
    Workload,
    canonical_layout,
    dsm_layout,
    nsm_layout,
)
from .engine_sim import (
    EnginePartition,
    SimConfig,
    build_partition,
    predict_initial_state,
    run_workload,
)
from .features import (
    FEATURE_ORDER,
    FEATURE_VERSION,
    FeatureVector,
    RuntimeState,
    extract_features,
    inversions,
    randomness,
)
from .layout import recommend_layouts, recommend_layouts_query_oriented
from .learner import CostModel, TrainConfig
from .serde import ScenarioSpec, load_scenario, save_scenario

__all__ = [
    "AccessOp",
    "AdvisorError",
    "BenchConfig",
    "Candidate",
    "CostModel",
    "DEFAULT_EPSILON",
    "DataLayout",
    "EngineKind",
    "EnginePartition",
    "FEATURE_ORDER",
    "FEATURE_VERSION",
    "FeatureVector",
    "FieldRole",
    "FieldSpec",
    "LengthKind",
    "OpType",
    "PartitionManifest",
    "PerfRecord",
    "Recommendation",
    "RuntimeState",
    "ScenarioSpec",
    "SimConfig",
    "StorageStructure",
    "TableSchema",
    "TrainConfig",
    "Workload",
    "build_partition",
    "canonical_layout",
    "convert",
    "dsm_layout",
    "evaluate",
    "extract_features",
    "generate_candidates",
    "init_partition_dir",
    "inversions",
    "load_partition",
    "load_scenario",
    "nsm_layout",
    "predict_initial_state",
    "randomness",
    "read_perf_dir",
    "insert_stream_records",
    "read_perf_file",
    "recommend",
    "recommend_layouts",
    "recommend_layouts_query_oriented",
    "run_benchmark",
    "run_workload",
    "sample_runtime",
    "save_scenario",
    "training_corpus",
    "write_perf_files",
]
