"""Dataset curation engine for small grayscale glyph classification sets."""

from .augment import AugPipeline, AugPolicy, AugStep, Pool, apply_pipeline, build_pool, build_validation
from .dataset import (
    CapsConfig,
    CapsReport,
    Dataset,
    Lineage,
    Sample,
    export_dataset,
    load_dataset,
    merge_datasets,
    validate_caps,
)
from .dedupe import DuplicateGroup, DuplicateReport, default_threshold, find_duplicates, pairwise_distances
from .embedder import (
    EmbedderSpec,
    EmbeddingMatrix,
    embed_dataset_class,
    embed_image,
    embed_samples,
    export_embeddings,
    import_embeddings,
)
from .journal import DecisionJournal, DecisionRecord, apply_decisions
from .labels import CLASS_LABELS
from .rebalance import (
    ClassReport,
    PredictionRecord,
    QuotaPlan,
    classification_report,
    compute_quotas,
    favor_difficult,
)
from .sampler import SamplerConfig, SamplingTrace, iterative_sample

__all__ = [
    "AugPipeline",
    "AugPolicy",
    "AugStep",
    "CLASS_LABELS",
    "CapsConfig",
    "CapsReport",
    "ClassReport",
    "Dataset",
    "DecisionJournal",
    "DecisionRecord",
    "DuplicateGroup",
    "DuplicateReport",
    "EmbedderSpec",
    "EmbeddingMatrix",
    "Lineage",
    "Pool",
    "PredictionRecord",
    "QuotaPlan",
    "Sample",
    "SamplerConfig",
    "SamplingTrace",
    "apply_decisions",
    "apply_pipeline",
    "build_pool",
    "build_validation",
    "classification_report",
    "compute_quotas",
    "default_threshold",
    "embed_dataset_class",
    "embed_image",
    "embed_samples",
    "export_dataset",
    "export_embeddings",
    "favor_difficult",
    "find_duplicates",
    "import_embeddings",
    "iterative_sample",
    "load_dataset",
    "merge_datasets",
    "pairwise_distances",
    "validate_caps",
]
