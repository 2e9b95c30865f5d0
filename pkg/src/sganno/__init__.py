"""Scene-graph annotation toolkit: document model, recommender,
dataset formats, statistics, project store and HTTP service."""

from .model import (
    AnnotationDocument,
    AttributeValue,
    BBox,
    Cluster,
    HierarchyNode,
    Instance,
    ProjectConfig,
    Region,
    Relationship,
    Rule,
    Violation,
)
from .recommend import FeatureVector, PairKey, PriorDatabase, PriorRecord, Recommendation

__version__ = "0.1.0"

__all__ = [
    "AnnotationDocument",
    "AttributeValue",
    "BBox",
    "Cluster",
    "FeatureVector",
    "HierarchyNode",
    "Instance",
    "PairKey",
    "PriorDatabase",
    "PriorRecord",
    "ProjectConfig",
    "Recommendation",
    "Region",
    "Relationship",
    "Rule",
    "Violation",
    "__version__",
]
