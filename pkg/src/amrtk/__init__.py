"""Audio moment retrieval toolkit.

Dataset simulation by foreground/background overlay, DETR-style
set-prediction losses with optimal matching, a sliding-window similarity
baseline, and the R1 / mAP / frame-level SED evaluation protocol.
"""

from .core import (
    MANIFEST_FORMAT_VERSION,
    AudioItem,
    Candidate,
    MomentAnnotation,
    NormalizedMoment,
    ScoredSpan,
    Span,
    from_span,
    giou,
    iou,
    read_manifest,
    to_span,
    write_manifest,
)
from .embeddings import STORE_FORMAT_VERSION, EmbeddingStore, read_store, write_store

__version__ = "0.1.0"

__all__ = [
    "AudioItem",
    "Candidate",
    "EmbeddingStore",
    "MANIFEST_FORMAT_VERSION",
    "MomentAnnotation",
    "NormalizedMoment",
    "STORE_FORMAT_VERSION",
    "ScoredSpan",
    "Span",
    "from_span",
    "giou",
    "iou",
    "read_manifest",
    "read_store",
    "to_span",
    "write_manifest",
    "write_store",
    "__version__",
]
