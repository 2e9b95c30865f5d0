"""In-memory scene-graph annotation document model.

An :class:`AnnotationDocument` holds everything annotated on one image:
object instances with bounding boxes and attributes, clusters of
same-category instances, regions of interest, and directed
subject-predicate-object relationships whose endpoints may be instances
or clusters.

Documents are values: mutation helpers return a new document and never
modify their input, so a document can be handed freely between threads.
Entity lists are kept sorted by id (the normal form used for canonical
serialization), which makes structural equality meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .errors import (
    AnnotationToolError,
    BBoxOutOfBounds,
    DanglingEndpoint,
    DanglingMember,
    DuplicateId,
    DuplicateTriple,
    EmptyMemberList,
    InvalidImage,
    MemberAlreadyClustered,
    MixedCategories,
    SelfLoop,
    UnknownAttributeValue,
    UnknownCategory,
    UnknownEntity,
    UnknownPredicate,
)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, corner form (x1, y1, x2, y2), integer pixels.

    Image coordinates, origin top-left; x1 < x2 and y1 < y2.
    """

    x1: int
    y1: int
    x2: int
    y2: int

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    def is_well_formed(self) -> bool:
        return self.x1 < self.x2 and self.y1 < self.y2 and self.x1 >= 0 and self.y1 >= 0

    def fits_in_image(self, width: int, height: int) -> bool:
        return self.is_well_formed() and self.x2 <= width and self.y2 <= height

    def touches(self, other: "BBox") -> bool:
        """Closed-box intersection: shared edges and corners count."""
        return (
            self.x1 <= other.x2
            and other.x1 <= self.x2
            and self.y1 <= other.y2
            and other.y1 <= self.y2
        )

    def contains(self, other: "BBox") -> bool:
        """True when ``other`` lies fully inside (boundary included)."""
        return (
            self.x1 <= other.x1
            and self.y1 <= other.y1
            and other.x2 <= self.x2
            and other.y2 <= self.y2
        )

    def union(self, other: "BBox") -> "BBox":
        return BBox(
            min(self.x1, other.x1),
            min(self.y1, other.y1),
            max(self.x2, other.x2),
            max(self.y2, other.y2),
        )

    def as_list(self) -> List[int]:
        return [self.x1, self.y1, self.x2, self.y2]


def union_bbox(boxes: Sequence[BBox]) -> BBox:
    """Tight union of one or more boxes."""
    out = boxes[0]
    for box in boxes[1:]:
        out = out.union(box)
    return out


@dataclass(frozen=True, order=True)
class AttributeValue:
    """One enumerated attribute assignment, e.g. orientation=forward."""

    attribute: str
    value: str


@dataclass
class Instance:
    """One annotated object occurrence in one image."""

    id: str
    category: str
    bbox: BBox
    attributes: Tuple[AttributeValue, ...] = ()
    mask_ref: Optional[str] = None
    extra: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.attributes = tuple(sorted(set(self.attributes)))


@dataclass
class Cluster:
    """Group of same-category instances annotated collectively."""

    id: str
    category: str
    member_ids: Tuple[str, ...] = ()
    extra: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.member_ids = tuple(sorted(set(self.member_ids)))


@dataclass
class Region:
    """Box scoping which entity pairs are offered for annotation."""

    id: str
    bbox: BBox
    label: Optional[str] = None
    extra: Dict[str, object] = field(default_factory=dict)


@dataclass
class Relationship:
    """Directed edge; endpoints reference instance or cluster ids."""

    id: str
    subject_ref: str
    predicate: str
    object_ref: str
    extra: Dict[str, object] = field(default_factory=dict)

    def triple(self) -> Tuple[str, str, str]:
        return (self.subject_ref, self.predicate, self.object_ref)


@dataclass
class HierarchyNode:
    """Named node of a category forest; leaves carry no children."""

    name: str
    children: List["HierarchyNode"] = field(default_factory=list)


@dataclass
class Rule:
    """Condition table row: all literals must hold for the rule to fire."""

    conditions: Dict[str, bool]
    predicate: str
    priority: int


@dataclass
class ProjectConfig:
    """User-defined underlying data: vocabularies, hierarchies, rules."""

    object_categories: List[str]
    predicates: List[str]
    object_hierarchy: List[HierarchyNode] = field(default_factory=list)
    predicate_hierarchy: List[HierarchyNode] = field(default_factory=list)
    attributes: Dict[str, List[str]] = field(default_factory=dict)
    feature_order: List[str] = field(default_factory=list)
    rules: List[Rule] = field(default_factory=list)
    eq1_domain: str = "present"
    extra: Dict[str, object] = field(default_factory=dict)

    def allowed_values(self, attribute: str) -> List[str]:
        return self.attributes.get(attribute, [])


@dataclass
class AnnotationDocument:
    """Full annotation of one image."""

    image_id: str
    width: int
    height: int
    file_name: str
    instances: List[Instance] = field(default_factory=list)
    clusters: List[Cluster] = field(default_factory=list)
    regions: List[Region] = field(default_factory=list)
    relationships: List[Relationship] = field(default_factory=list)
    image_extra: Dict[str, object] = field(default_factory=dict)
    extra: Dict[str, object] = field(default_factory=dict)

    # --- lookups ---------------------------------------------------------

    def instance_map(self) -> Dict[str, Instance]:
        return {inst.id: inst for inst in self.instances}

    def cluster_map(self) -> Dict[str, Cluster]:
        return {cl.id: cl for cl in self.clusters}

    def region_map(self) -> Dict[str, Region]:
        return {reg.id: reg for reg in self.regions}

    def relationship_map(self) -> Dict[str, Relationship]:
        return {rel.id: rel for rel in self.relationships}

    def entity_ids(self) -> Set[str]:
        """Ids sharing the instance/cluster namespace."""
        return {inst.id for inst in self.instances} | {cl.id for cl in self.clusters}

    def entity_category(self, ref: str) -> str:
        inst = self.instance_map().get(ref)
        if inst is not None:
            return inst.category
        cl = self.cluster_map().get(ref)
        if cl is not None:
            return cl.category
        raise UnknownEntity(f"no instance or cluster with id {ref!r}", entity_id=ref)

    def entity_bbox(self, ref: str) -> BBox:
        """Instance box, or the tight union of a cluster's member boxes."""
        inst = self.instance_map().get(ref)
        if inst is not None:
            return inst.bbox
        cl = self.cluster_map().get(ref)
        if cl is not None:
            instances = self.instance_map()
            return union_bbox([instances[m].bbox for m in cl.member_ids])
        raise UnknownEntity(f"no instance or cluster with id {ref!r}", entity_id=ref)


def empty_document(image_id: str, width: int, height: int, file_name: str) -> AnnotationDocument:
    return AnnotationDocument(image_id=image_id, width=width, height=height, file_name=file_name)


def _sorted_by_id(items: Iterable) -> list:
    return sorted(items, key=lambda item: item.id)


# --- validation ------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    """One broken invariant, named by code and offending entity."""

    code: str
    entity_id: str
    message: str


_VIOLATION_ERRORS = {
    "DuplicateId": DuplicateId,
    "UnknownCategory": UnknownCategory,
    "BBoxOutOfBounds": BBoxOutOfBounds,
    "UnknownAttributeValue": UnknownAttributeValue,
    "DanglingEndpoint": DanglingEndpoint,
    "DanglingMember": DanglingMember,
    "SelfLoop": SelfLoop,
    "DuplicateTriple": DuplicateTriple,
    "UnknownPredicate": UnknownPredicate,
    "MixedCategories": MixedCategories,
    "MemberAlreadyClustered": MemberAlreadyClustered,
    "EmptyMemberList": EmptyMemberList,
    "InvalidImage": InvalidImage,
}


def validate(doc: AnnotationDocument, config: ProjectConfig) -> List[Violation]:
    """Check every document invariant; empty result means valid.

    Violations are data, not exceptions: callers that need to reject a
    document raise the matching error via :func:`raise_violation`.
    """
    out: List[Violation] = []

    if doc.width <= 0 or doc.height <= 0:
        out.append(Violation("InvalidImage", doc.image_id, "image dimensions must be positive"))

    categories = set(config.object_categories)
    predicates = set(config.predicates)

    # instance/cluster ids share one namespace
    seen: Set[str] = set()
    for inst in doc.instances:
        if inst.id in seen:
            out.append(Violation("DuplicateId", inst.id, f"duplicate entity id {inst.id!r}"))
        seen.add(inst.id)
        if inst.category not in categories:
            out.append(Violation("UnknownCategory", inst.id, f"category {inst.category!r} not configured"))
        if not inst.bbox.fits_in_image(doc.width, doc.height):
            out.append(Violation("BBoxOutOfBounds", inst.id, f"bbox {inst.bbox.as_list()} outside {doc.width}x{doc.height}"))
        for attr in inst.attributes:
            if attr.value not in config.allowed_values(attr.attribute):
                out.append(
                    Violation(
                        "UnknownAttributeValue",
                        inst.id,
                        f"attribute {attr.attribute!r} does not admit {attr.value!r}",
                    )
                )

    instances = doc.instance_map()
    member_owner: Dict[str, str] = {}
    for cl in doc.clusters:
        if cl.id in seen:
            out.append(Violation("DuplicateId", cl.id, f"duplicate entity id {cl.id!r}"))
        seen.add(cl.id)
        if not cl.member_ids:
            out.append(Violation("EmptyMemberList", cl.id, "cluster has no members"))
            continue
        member_categories = set()
        for member in cl.member_ids:
            inst = instances.get(member)
            if inst is None:
                out.append(Violation("DanglingMember", cl.id, f"member {member!r} does not exist"))
                continue
            member_categories.add(inst.category)
            if member in member_owner:
                out.append(
                    Violation(
                        "MemberAlreadyClustered",
                        cl.id,
                        f"member {member!r} already belongs to cluster {member_owner[member]!r}",
                    )
                )
            else:
                member_owner[member] = cl.id
        if len(member_categories) > 1:
            out.append(Violation("MixedCategories", cl.id, f"members span categories {sorted(member_categories)}"))
        elif member_categories and cl.category not in member_categories:
            out.append(Violation("MixedCategories", cl.id, f"cluster category {cl.category!r} differs from members"))

    region_ids: Set[str] = set()
    for reg in doc.regions:
        if reg.id in region_ids:
            out.append(Violation("DuplicateId", reg.id, f"duplicate region id {reg.id!r}"))
        region_ids.add(reg.id)
        if not reg.bbox.fits_in_image(doc.width, doc.height):
            out.append(Violation("BBoxOutOfBounds", reg.id, f"bbox {reg.bbox.as_list()} outside {doc.width}x{doc.height}"))

    entity_ids = doc.entity_ids()
    rel_ids: Set[str] = set()
    triples: Set[Tuple[str, str, str]] = set()
    for rel in doc.relationships:
        if rel.id in rel_ids:
            out.append(Violation("DuplicateId", rel.id, f"duplicate relationship id {rel.id!r}"))
        rel_ids.add(rel.id)
        if rel.subject_ref == rel.object_ref:
            out.append(Violation("SelfLoop", rel.id, "subject equals object"))
        for ref in (rel.subject_ref, rel.object_ref):
            if ref not in entity_ids:
                out.append(Violation("DanglingEndpoint", rel.id, f"endpoint {ref!r} does not exist"))
        if rel.predicate not in predicates:
            out.append(Violation("UnknownPredicate", rel.id, f"predicate {rel.predicate!r} not configured"))
        if rel.triple() in triples:
            out.append(Violation("DuplicateTriple", rel.id, f"triple {rel.triple()} already annotated"))
        triples.add(rel.triple())

    return out


def region_warnings(doc: AnnotationDocument) -> List[Violation]:
    """Advisory findings: stored relationships whose endpoints share no region.

    Regions constrain which pairs are offered, not which relationships
    may be stored, so these never appear in :func:`validate` output.
    """
    if not doc.regions:
        return []
    out = []
    for rel in doc.relationships:
        sub = doc.entity_bbox(rel.subject_ref)
        obj = doc.entity_bbox(rel.object_ref)
        if not any(reg.bbox.contains(sub) and reg.bbox.contains(obj) for reg in doc.regions):
            out.append(Violation("PairOutsideRegions", rel.id, "endpoints share no region"))
    return out


def raise_violation(violation: Violation) -> None:
    error = _VIOLATION_ERRORS.get(violation.code, AnnotationToolError)
    raise error(violation.message, entity_id=violation.entity_id)


def _checked(doc: AnnotationDocument, config: ProjectConfig) -> AnnotationDocument:
    violations = validate(doc, config)
    if violations:
        raise_violation(violations[0])
    return doc


# --- mutations ---------------------------------------------------------------


def add_instance(doc: AnnotationDocument, inst: Instance, config: ProjectConfig) -> AnnotationDocument:
    new = replace(doc, instances=_sorted_by_id(doc.instances + [inst]))
    return _checked(new, config)


def update_instance(doc: AnnotationDocument, inst: Instance, config: ProjectConfig) -> AnnotationDocument:
    if inst.id not in doc.instance_map():
        raise UnknownEntity(f"no instance with id {inst.id!r}", entity_id=inst.id)
    kept = [existing for existing in doc.instances if existing.id != inst.id]
    new = replace(doc, instances=_sorted_by_id(kept + [inst]))
    return _checked(new, config)


def add_region(doc: AnnotationDocument, region: Region, config: ProjectConfig) -> AnnotationDocument:
    new = replace(doc, regions=_sorted_by_id(doc.regions + [region]))
    return _checked(new, config)


def add_relationship(doc: AnnotationDocument, rel: Relationship, config: ProjectConfig) -> AnnotationDocument:
    new = replace(doc, relationships=_sorted_by_id(doc.relationships + [rel]))
    return _checked(new, config)


def make_cluster(
    doc: AnnotationDocument,
    member_ids: Sequence[str],
    cluster_id: str,
    config: ProjectConfig,
) -> AnnotationDocument:
    """Group ``member_ids`` into a cluster of their shared category."""
    if not member_ids:
        raise EmptyMemberList("cluster needs at least one member", entity_id=cluster_id)
    instances = doc.instance_map()
    missing = [m for m in member_ids if m not in instances]
    if missing:
        raise DanglingMember(f"members do not exist: {missing}", entity_id=cluster_id)
    categories = {instances[m].category for m in member_ids}
    if len(categories) > 1:
        raise MixedCategories(f"members span categories {sorted(categories)}", entity_id=cluster_id)
    cluster = Cluster(id=cluster_id, category=categories.pop(), member_ids=tuple(member_ids))
    new = replace(doc, clusters=_sorted_by_id(doc.clusters + [cluster]))
    return _checked(new, config)


def set_attributes(
    doc: AnnotationDocument,
    instance_id: str,
    attributes: Sequence[AttributeValue],
    config: ProjectConfig,
) -> AnnotationDocument:
    inst = doc.instance_map().get(instance_id)
    if inst is None:
        raise UnknownEntity(f"no instance with id {instance_id!r}", entity_id=instance_id)
    return update_instance(doc, replace(inst, attributes=tuple(attributes)), config)


def delete_instance(doc: AnnotationDocument, instance_id: str) -> AnnotationDocument:
    """Remove an instance plus every cluster slot and relationship using it.

    Relationship removal follows expansion semantics: edges that reach
    the instance only through a cluster simply lose that member; a
    cluster left empty disappears together with its edges.
    """
    if instance_id not in doc.instance_map():
        raise UnknownEntity(f"no instance with id {instance_id!r}", entity_id=instance_id)
    instances = [inst for inst in doc.instances if inst.id != instance_id]
    clusters: List[Cluster] = []
    dropped_refs = {instance_id}
    for cl in doc.clusters:
        members = tuple(m for m in cl.member_ids if m != instance_id)
        if members:
            clusters.append(replace(cl, member_ids=members))
        else:
            dropped_refs.add(cl.id)
    relationships = [
        rel
        for rel in doc.relationships
        if rel.subject_ref not in dropped_refs and rel.object_ref not in dropped_refs
    ]
    return replace(doc, instances=instances, clusters=clusters, relationships=relationships)


def delete_cluster(doc: AnnotationDocument, cluster_id: str) -> AnnotationDocument:
    """Dissolve a cluster; members stay, edges referencing it are dropped."""
    if cluster_id not in doc.cluster_map():
        raise UnknownEntity(f"no cluster with id {cluster_id!r}", entity_id=cluster_id)
    clusters = [cl for cl in doc.clusters if cl.id != cluster_id]
    relationships = [
        rel for rel in doc.relationships if cluster_id not in (rel.subject_ref, rel.object_ref)
    ]
    return replace(doc, clusters=clusters, relationships=relationships)


def delete_relationship(doc: AnnotationDocument, rel_id: str) -> AnnotationDocument:
    if rel_id not in doc.relationship_map():
        raise UnknownEntity(f"no relationship with id {rel_id!r}", entity_id=rel_id)
    return replace(doc, relationships=[rel for rel in doc.relationships if rel.id != rel_id])


def delete_region(doc: AnnotationDocument, region_id: str) -> AnnotationDocument:
    if region_id not in doc.region_map():
        raise UnknownEntity(f"no region with id {region_id!r}", entity_id=region_id)
    return replace(doc, regions=[reg for reg in doc.regions if reg.id != region_id])


# --- derived views -----------------------------------------------------------


def expand_clusters(doc: AnnotationDocument) -> AnnotationDocument:
    """Replace every cluster-endpoint edge by one edge per member.

    Cartesian expansion when both endpoints are clusters; duplicate
    triples arising from expansion are merged (first occurrence wins,
    in relationship-id order) and member self-pairings are skipped.
    The cluster list empties; the instance set is untouched.
    """
    if not doc.clusters:
        return doc
    members = {cl.id: cl.member_ids for cl in doc.clusters}
    used_ids = {rel.id for rel in doc.relationships}
    seen: Set[Tuple[str, str, str]] = set()
    out: List[Relationship] = []
    for rel in doc.relationships:
        subjects = members.get(rel.subject_ref, (rel.subject_ref,))
        objects = members.get(rel.object_ref, (rel.object_ref,))
        if rel.subject_ref not in members and rel.object_ref not in members:
            if rel.triple() not in seen:
                seen.add(rel.triple())
                out.append(rel)
            continue
        counter = 1
        for sub in subjects:
            for obj in objects:
                if sub == obj:
                    continue
                triple = (sub, rel.predicate, obj)
                if triple in seen:
                    continue
                seen.add(triple)
                new_id = f"{rel.id}.{counter}"
                while new_id in used_ids:
                    counter += 1
                    new_id = f"{rel.id}.{counter}"
                counter += 1
                used_ids.add(new_id)
                out.append(Relationship(id=new_id, subject_ref=sub, predicate=rel.predicate, object_ref=obj))
    return replace(doc, clusters=[], relationships=_sorted_by_id(out))


def instances_in_scene_graph(doc: AnnotationDocument) -> Set[str]:
    """Ids of instances touching at least one edge after expansion."""
    expanded = expand_clusters(doc)
    out: Set[str] = set()
    for rel in expanded.relationships:
        out.add(rel.subject_ref)
        out.add(rel.object_ref)
    return out


def visible_entities(doc: AnnotationDocument) -> List[Tuple[str, BBox]]:
    """Annotatable entities: unclustered instances plus clusters, with boxes."""
    clustered = {m for cl in doc.clusters for m in cl.member_ids}
    out: List[Tuple[str, BBox]] = []
    for inst in doc.instances:
        if inst.id not in clustered:
            out.append((inst.id, inst.bbox))
    for cl in doc.clusters:
        out.append((cl.id, doc.entity_bbox(cl.id)))
    return out


def pairs_in_regions(doc: AnnotationDocument) -> List[Tuple[str, str]]:
    """Ordered entity pairs offered for annotation.

    With regions present, both boxes must lie fully inside at least one
    common region; without regions every ordered pair qualifies.
    """
    entities = visible_entities(doc)
    pairs = []
    for sub_id, sub_box in entities:
        for obj_id, obj_box in entities:
            if sub_id == obj_id:
                continue
            if not doc.regions or any(
                reg.bbox.contains(sub_box) and reg.bbox.contains(obj_box) for reg in doc.regions
            ):
                pairs.append((sub_id, obj_id))
    return pairs


def pair_is_permitted(doc: AnnotationDocument, subject_ref: str, object_ref: str) -> bool:
    if not doc.regions:
        return True
    sub = doc.entity_bbox(subject_ref)
    obj = doc.entity_bbox(object_ref)
    return any(reg.bbox.contains(sub) and reg.bbox.contains(obj) for reg in doc.regions)
