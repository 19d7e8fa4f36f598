"""copydesc: descriptor pipeline for image copy detection.

The library covers the test-time retrieval chain (multi-scale fusion,
descriptor stretching, exact k-nearest-neighbor search, micro-AP style
evaluation), reproducible augmentation-corpus generation with overlay
bounding boxes, and the numeric kernels used at training time (GeM
pooling, the warmup/plateau/cosine schedule, batch-hard triplet loss,
soft cross-entropy).
"""

from .descriptors import (
    Descriptor,
    DescriptorSet,
    FusionConfig,
    MAX_FINAL_DIM,
    Role,
    euclidean_distance,
    fuse_multiscale,
    inner_product,
    l2_normalize,
    l2_normalize_rows,
)
from .exceptions import (
    BadMagicError,
    CopydescError,
    DimensionMismatchError,
    DuplicateIdError,
    DuplicatePairError,
    FormatError,
    TruncatedFileError,
    UnsupportedVersionError,
    ValidationError,
    ZeroVectorError,
)
from .io import (
    read_candidates,
    read_descriptors,
    read_descriptors_csv,
    read_truth,
    write_candidates,
    write_descriptors,
    write_descriptors_csv,
    write_truth,
)
from .metrics import (
    EvalReport,
    GroundTruth,
    evaluate,
    micro_ap,
    pr_curve,
    recall_at_precision,
    recall_at_rank,
)
from .pipeline import (
    PipelineConfig,
    load_pipeline_config,
    run_pipeline,
    selfcheck,
)
from .search import (
    CandidateList,
    ExhaustiveMatcher,
    MatchCandidate,
    distance_matrix,
    knn_search,
)
from .stretch import (
    DescriptorStretcher,
    StretchConfig,
    StretchReport,
    stretch,
    stretched_score,
)
from .trainmath import (
    ScheduleConfig,
    batch_hard_triplet,
    gem_pool,
    lr_ratio,
    schedule_rows,
    soft_cross_entropy,
)

__version__ = "0.1.0"

__all__ = [
    "BadMagicError",
    "CandidateList",
    "CopydescError",
    "Descriptor",
    "DescriptorSet",
    "DescriptorStretcher",
    "DimensionMismatchError",
    "DuplicateIdError",
    "DuplicatePairError",
    "EvalReport",
    "ExhaustiveMatcher",
    "FormatError",
    "FusionConfig",
    "GroundTruth",
    "MAX_FINAL_DIM",
    "MatchCandidate",
    "PipelineConfig",
    "Role",
    "ScheduleConfig",
    "StretchConfig",
    "StretchReport",
    "TruncatedFileError",
    "UnsupportedVersionError",
    "ValidationError",
    "ZeroVectorError",
    "batch_hard_triplet",
    "distance_matrix",
    "euclidean_distance",
    "evaluate",
    "fuse_multiscale",
    "gem_pool",
    "inner_product",
    "knn_search",
    "l2_normalize",
    "l2_normalize_rows",
    "load_pipeline_config",
    "lr_ratio",
    "micro_ap",
    "pr_curve",
    "read_candidates",
    "read_descriptors",
    "read_descriptors_csv",
    "read_truth",
    "recall_at_precision",
    "recall_at_rank",
    "run_pipeline",
    "schedule_rows",
    "selfcheck",
    "stretch",
    "stretched_score",
    "soft_cross_entropy",
    "write_candidates",
    "write_descriptors",
    "write_descriptors_csv",
    "write_truth",
    "__version__",
]
