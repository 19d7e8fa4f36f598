"""Reproducible augmentation suite: transforms, corpus generation, labels."""

from .assets import AssetLibrary, bundled_asset_root
from .config import AugmentConfig
from .corpus import (
    AugRecord,
    CorpusPlan,
    CorpusResult,
    emit_detection_labels,
    generate_corpus,
    list_sources,
    read_manifest,
)
from .rng import copy_rng, derive_seed
from .transforms import (
    CANONICAL_ORDER,
    OVERLAY_KINDS,
    Transform,
    TransformKind,
    apply_all,
    apply_transform,
    sample_copy_transforms,
    sample_transform,
)

__all__ = [
    "AssetLibrary",
    "AugmentConfig",
    "AugRecord",
    "CANONICAL_ORDER",
    "CorpusPlan",
    "CorpusResult",
    "OVERLAY_KINDS",
    "Transform",
    "TransformKind",
    "apply_all",
    "apply_transform",
    "bundled_asset_root",
    "copy_rng",
    "derive_seed",
    "emit_detection_labels",
    "generate_corpus",
    "list_sources",
    "read_manifest",
    "sample_copy_transforms",
    "sample_transform",
]
