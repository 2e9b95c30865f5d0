"""Error types shared across the annotation toolkit.

Every exception carries a stable machine-readable ``code`` (the class
name) so API responses and CLI diagnostics can be matched without
parsing prose.
"""

from __future__ import annotations

from typing import Any, Dict


class AnnotationToolError(Exception):
    """Base class for all toolkit errors."""

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    @property
    def code(self) -> str:
        return type(self).__name__


# --- document model -------------------------------------------------------

class DuplicateId(AnnotationToolError):
    pass


class UnknownCategory(AnnotationToolError):
    pass


class BBoxOutOfBounds(AnnotationToolError):
    pass


class UnknownAttributeValue(AnnotationToolError):
    pass


class DanglingEndpoint(AnnotationToolError):
    pass


class DanglingMember(AnnotationToolError):
    pass


class SelfLoop(AnnotationToolError):
    pass


class DuplicateTriple(AnnotationToolError):
    pass


class UnknownPredicate(AnnotationToolError):
    pass


class MixedCategories(AnnotationToolError):
    pass


class MemberAlreadyClustered(AnnotationToolError):
    pass


class EmptyMemberList(AnnotationToolError):
    pass


class UnknownEntity(AnnotationToolError):
    pass


class InvalidImage(AnnotationToolError):
    pass


# --- recommender ----------------------------------------------------------

class UnderflowWouldOccur(AnnotationToolError):
    """Attempt to remove an annotation that was never recorded."""


class EmptyLog(AnnotationToolError):
    pass


# --- file formats ---------------------------------------------------------

class ParseError(AnnotationToolError):
    """Malformed file syntax; ``details['offset']`` is the byte offset."""


class SchemaError(AnnotationToolError):
    """Missing or ill-typed field; ``details['path']`` locates it."""


class ValidationError(AnnotationToolError):
    """Semantic violations; ``details['violations']`` lists them."""


class DuplicateImageId(AnnotationToolError):
    pass


class UnknownSplitLabel(AnnotationToolError):
    pass


class IndexRangeError(AnnotationToolError):
    pass


class UnresolvedLabel(AnnotationToolError):
    pass


# --- project service ------------------------------------------------------

class MissingConfig(AnnotationToolError):
    pass


class CorruptAnnotation(AnnotationToolError):
    pass


class UnknownImage(AnnotationToolError):
    pass


class PairOutsideRegions(AnnotationToolError):
    """Advisory: the pair shares no region; callers may override."""


class StorageFailure(AnnotationToolError):
    pass
