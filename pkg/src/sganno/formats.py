"""Dataset file formats and lossless-where-possible conversion.

Three JSON layouts, each with a published schema under ``schemas/``:

* per-image: one editable file per image mirroring the document model,
  including clusters and regions; unknown keys survive a round trip.
* merged: one file for the whole dataset in the flattened-array layout
  used by scene-graph-generation pipelines (label maps, global ``boxes``
  / ``labels`` / ``relationships`` arrays, inclusive per-image index
  ranges, split markers). Clusters are expanded and regions dropped on
  export; both are recorded in a conversion report.
* config: the project vocabulary file (categories, hierarchies,
  attributes, feature order, rule table).

Serialization is canonical (fixed key order, arrays sorted by id,
UTF-8, newline-terminated) so byte equality is meaningful.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

from . import model
from .errors import (
    DuplicateImageId,
    IndexRangeError,
    ParseError,
    SchemaError,
    UnknownSplitLabel,
    UnresolvedLabel,
    ValidationError,
)
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
    validate,
)
from .recommend import FEATURE_NAMES

SPLIT_CODES = {"train": 0, "val": 1, "test": 2}
SPLIT_NAMES = {code: name for name, code in SPLIT_CODES.items()}

_IMAGE_KEYS = ("image_id", "width", "height", "file_name")
_MERGED_KEY_ORDER = (
    "idx_to_label",
    "label_to_idx",
    "idx_to_predicate",
    "predicate_to_idx",
    "idx_to_attribute",
    "images",
    "split",
    "boxes",
    "labels",
    "attributes",
    "box_ids",
    "mask_refs",
    "relationships",
    "rel_ids",
    "img_to_first_box",
    "img_to_last_box",
    "img_to_first_rel",
    "img_to_last_rel",
)


# --- conversion reports -----------------------------------------------------


@dataclass(frozen=True)
class ReportEntry:
    image_id: str
    kind: str  # dropped_region | expanded_cluster | expanded_relationship | dropped_unknown_keys
    entity_id: str
    detail: str


@dataclass
class ConversionReport:
    """Machine-readable account of every lossy or expanding step."""

    entries: List[ReportEntry] = field(default_factory=list)

    @property
    def lossless(self) -> bool:
        return not self.entries

    def add(self, image_id: str, kind: str, entity_id: str, detail: str) -> None:
        self.entries.append(ReportEntry(image_id, kind, entity_id, detail))

    def to_json_obj(self) -> Dict[str, Any]:
        return {
            "lossless": self.lossless,
            "entries": [
                {
                    "image_id": e.image_id,
                    "kind": e.kind,
                    "entity_id": e.entity_id,
                    "detail": e.detail,
                }
                for e in self.entries
            ],
        }


# --- low-level JSON helpers ---------------------------------------------------


def _parse_json(data: bytes) -> Any:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"invalid UTF-8: {exc.reason}", offset=exc.start) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", offset=exc.pos) from exc


def _require(obj: Dict[str, Any], key: str, kind: type, path: str) -> Any:
    if key not in obj:
        raise SchemaError(f"missing field {key!r}", path=f"{path}.{key}" if path else key)
    value = obj[key]
    if kind is int and isinstance(value, bool):
        raise SchemaError(f"field {key!r} must be {kind.__name__}", path=f"{path}.{key}" if path else key)
    if not isinstance(value, kind):
        raise SchemaError(f"field {key!r} must be {kind.__name__}", path=f"{path}.{key}" if path else key)
    return value


def _opt_str(obj: Dict[str, Any], key: str, path: str) -> Optional[str]:
    value = obj.get(key)
    if value is None:
        return None
    if not isinstance(value, str):
        raise SchemaError(f"field {key!r} must be str or null", path=f"{path}.{key}")
    return value


def _parse_bbox(value: Any, path: str) -> BBox:
    if (
        not isinstance(value, list)
        or len(value) != 4
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    ):
        raise SchemaError("bbox must be [x1, y1, x2, y2] integers", path=path)
    return BBox(*value)


def _check_name(name: str, path: str, forbid_colon: bool = False) -> str:
    if not name:
        raise SchemaError("name must be non-empty", path=path)
    if "\t" in name or "\n" in name:
        raise SchemaError(f"name {name!r} must not contain tabs or newlines", path=path)
    if forbid_colon and ":" in name:
        raise SchemaError(f"name {name!r} must not contain ':'", path=path)
    return name


def _extra_keys(obj: Dict[str, Any], known: Sequence[str]) -> Dict[str, Any]:
    return {key: obj[key] for key in obj if key not in known}


def _canonical_obj(fixed: List[Tuple[str, Any]], extra: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(fixed)
    for key in sorted(extra):
        out[key] = extra[key]
    return out


def _dumps(obj: Any) -> bytes:
    return (json.dumps(obj, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


# --- per-image format ---------------------------------------------------------


def load_per_image(data: bytes, config: ProjectConfig) -> AnnotationDocument:
    """Parse one per-image file and validate it against ``config``."""
    obj = _parse_json(data)
    if not isinstance(obj, dict):
        raise SchemaError("top level must be an object", path="")
    header = _require(obj, "image", dict, "")
    image_id = _require(header, "image_id", str, "image")
    if not image_id or "/" in image_id or "\t" in image_id or "\n" in image_id:
        raise SchemaError("image_id must be non-empty without '/', tab or newline", path="image.image_id")
    doc = AnnotationDocument(
        image_id=image_id,
        width=_require(header, "width", int, "image"),
        height=_require(header, "height", int, "image"),
        file_name=_require(header, "file_name", str, "image"),
        image_extra=_extra_keys(header, _IMAGE_KEYS),
        extra=_extra_keys(obj, ("image", "instances", "clusters", "regions", "relationships")),
    )

    for idx, entry in enumerate(_require(obj, "instances", list, "")):
        path = f"instances[{idx}]"
        if not isinstance(entry, dict):
            raise SchemaError("instance must be an object", path=path)
        attributes = []
        raw_attrs = entry.get("attributes", [])
        if not isinstance(raw_attrs, list):
            raise SchemaError("attributes must be a list", path=f"{path}.attributes")
        for aidx, raw in enumerate(raw_attrs):
            if not isinstance(raw, dict):
                raise SchemaError("attribute must be an object", path=f"{path}.attributes[{aidx}]")
            attributes.append(
                AttributeValue(
                    _require(raw, "attribute", str, f"{path}.attributes[{aidx}]"),
                    _require(raw, "value", str, f"{path}.attributes[{aidx}]"),
                )
            )
        doc.instances.append(
            Instance(
                id=_require(entry, "id", str, path),
                category=_require(entry, "category", str, path),
                bbox=_parse_bbox(_require(entry, "bbox", list, path), f"{path}.bbox"),
                attributes=tuple(attributes),
                mask_ref=_opt_str(entry, "mask_ref", path),
                extra=_extra_keys(entry, ("id", "category", "bbox", "attributes", "mask_ref")),
            )
        )

    for idx, entry in enumerate(_require(obj, "clusters", list, "")):
        path = f"clusters[{idx}]"
        if not isinstance(entry, dict):
            raise SchemaError("cluster must be an object", path=path)
        members = _require(entry, "member_ids", list, path)
        if not all(isinstance(m, str) for m in members):
            raise SchemaError("member_ids must be strings", path=f"{path}.member_ids")
        doc.clusters.append(
            Cluster(
                id=_require(entry, "id", str, path),
                category=_require(entry, "category", str, path),
                member_ids=tuple(members),
                extra=_extra_keys(entry, ("id", "category", "member_ids")),
            )
        )

    for idx, entry in enumerate(_require(obj, "regions", list, "")):
        path = f"regions[{idx}]"
        if not isinstance(entry, dict):
            raise SchemaError("region must be an object", path=path)
        doc.regions.append(
            Region(
                id=_require(entry, "id", str, path),
                bbox=_parse_bbox(_require(entry, "bbox", list, path), f"{path}.bbox"),
                label=_opt_str(entry, "label", path),
                extra=_extra_keys(entry, ("id", "bbox", "label")),
            )
        )

    for idx, entry in enumerate(_require(obj, "relationships", list, "")):
        path = f"relationships[{idx}]"
        if not isinstance(entry, dict):
            raise SchemaError("relationship must be an object", path=path)
        doc.relationships.append(
            Relationship(
                id=_require(entry, "id", str, path),
                subject_ref=_require(entry, "subject", str, path),
                predicate=_require(entry, "predicate", str, path),
                object_ref=_require(entry, "object", str, path),
                extra=_extra_keys(entry, ("id", "subject", "predicate", "object")),
            )
        )

    doc.instances.sort(key=lambda e: e.id)
    doc.clusters.sort(key=lambda e: e.id)
    doc.regions.sort(key=lambda e: e.id)
    doc.relationships.sort(key=lambda e: e.id)

    violations = validate(doc, config)
    if violations:
        raise ValidationError(
            f"{len(violations)} violation(s), first: {violations[0].code} on {violations[0].entity_id!r}",
            violations=violations,
        )
    return doc


def save_per_image(doc: AnnotationDocument) -> bytes:
    """Canonical serialization of one document."""
    instances = []
    for inst in sorted(doc.instances, key=lambda e: e.id):
        fixed: List[Tuple[str, Any]] = [
            ("id", inst.id),
            ("category", inst.category),
            ("bbox", inst.bbox.as_list()),
            ("attributes", [{"attribute": a.attribute, "value": a.value} for a in inst.attributes]),
        ]
        if inst.mask_ref is not None:
            fixed.append(("mask_ref", inst.mask_ref))
        instances.append(_canonical_obj(fixed, inst.extra))
    clusters = [
        _canonical_obj(
            [("id", cl.id), ("category", cl.category), ("member_ids", list(cl.member_ids))],
            cl.extra,
        )
        for cl in sorted(doc.clusters, key=lambda e: e.id)
    ]
    regions = []
    for reg in sorted(doc.regions, key=lambda e: e.id):
        fixed = [("id", reg.id), ("bbox", reg.bbox.as_list())]
        if reg.label is not None:
            fixed.append(("label", reg.label))
        regions.append(_canonical_obj(fixed, reg.extra))
    relationships = [
        _canonical_obj(
            [
                ("id", rel.id),
                ("subject", rel.subject_ref),
                ("predicate", rel.predicate),
                ("object", rel.object_ref),
            ],
            rel.extra,
        )
        for rel in sorted(doc.relationships, key=lambda e: e.id)
    ]
    header = _canonical_obj(
        [
            ("image_id", doc.image_id),
            ("width", doc.width),
            ("height", doc.height),
            ("file_name", doc.file_name),
        ],
        doc.image_extra,
    )
    obj = _canonical_obj(
        [
            ("image", header),
            ("instances", instances),
            ("clusters", clusters),
            ("regions", regions),
            ("relationships", relationships),
        ],
        doc.extra,
    )
    return _dumps(obj)


def canonical_bytes(doc: AnnotationDocument) -> bytes:
    """Alias used by equality checks: documents are equal when their
    canonical serializations are byte-identical."""
    return save_per_image(doc)


# --- project config format ----------------------------------------------------


def _parse_hierarchy(value: Any, path: str) -> List[HierarchyNode]:
    if not isinstance(value, list):
        raise SchemaError("hierarchy must be a list of nodes", path=path)
    out = []
    for idx, raw in enumerate(value):
        if not isinstance(raw, dict):
            raise SchemaError("hierarchy node must be an object", path=f"{path}[{idx}]")
        name = _require(raw, "name", str, f"{path}[{idx}]")
        children = raw.get("children", [])
        out.append(HierarchyNode(name, _parse_hierarchy(children, f"{path}[{idx}].children")))
    return out


def _hierarchy_names(forest: List[HierarchyNode]) -> List[str]:
    names: List[str] = []
    stack = list(forest)
    while stack:
        node = stack.pop()
        names.append(node.name)
        stack.extend(node.children)
    return names


def _check_hierarchy(forest: List[HierarchyNode], flat: Sequence[str], path: str) -> None:
    names = _hierarchy_names(forest)
    if len(names) != len(set(names)):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise SchemaError(f"hierarchy node names not unique: {dupes}", path=path)
    name_set = set(names)
    missing = [c for c in flat if c not in name_set]
    if missing:
        raise SchemaError(f"categories missing from hierarchy: {missing}", path=path)


def _leaf_forest(names: Sequence[str]) -> List[HierarchyNode]:
    return [HierarchyNode(name) for name in names]


def _hierarchy_to_json(forest: List[HierarchyNode]) -> List[Dict[str, Any]]:
    out = []
    for node in forest:
        entry: Dict[str, Any] = {"name": node.name}
        if node.children:
            entry["children"] = _hierarchy_to_json(node.children)
        out.append(entry)
    return out


_CONFIG_KEYS = (
    "object_categories",
    "object_hierarchy",
    "predicates",
    "predicate_hierarchy",
    "attributes",
    "feature_order",
    "rules",
    "eq1_domain",
)


def load_config(data: bytes) -> ProjectConfig:
    """Parse and structurally validate a project config file."""
    obj = _parse_json(data)
    if not isinstance(obj, dict):
        raise SchemaError("top level must be an object", path="")

    categories = _require(obj, "object_categories", list, "")
    if not categories:
        raise SchemaError("object_categories must be non-empty", path="object_categories")
    if not all(isinstance(c, str) for c in categories):
        raise SchemaError("object_categories must be strings", path="object_categories")
    if len(set(categories)) != len(categories):
        dupes = sorted({c for c in categories if categories.count(c) > 1})
        raise SchemaError(f"duplicate object categories: {dupes}", path="object_categories")
    for c in categories:
        _check_name(c, "object_categories")

    predicates = _require(obj, "predicates", list, "")
    if not predicates:
        raise SchemaError("predicates must be non-empty", path="predicates")
    if not all(isinstance(p, str) for p in predicates):
        raise SchemaError("predicates must be strings", path="predicates")
    if len(set(predicates)) != len(predicates):
        dupes = sorted({p for p in predicates if predicates.count(p) > 1})
        raise SchemaError(f"duplicate predicates: {dupes}", path="predicates")
    for p in predicates:
        _check_name(p, "predicates")

    if "object_hierarchy" in obj:
        object_hierarchy = _parse_hierarchy(obj["object_hierarchy"], "object_hierarchy")
    else:
        object_hierarchy = _leaf_forest(categories)
    _check_hierarchy(object_hierarchy, categories, "object_hierarchy")

    if "predicate_hierarchy" in obj:
        predicate_hierarchy = _parse_hierarchy(obj["predicate_hierarchy"], "predicate_hierarchy")
    else:
        predicate_hierarchy = _leaf_forest(predicates)
    _check_hierarchy(predicate_hierarchy, predicates, "predicate_hierarchy")

    attributes: Dict[str, List[str]] = {}
    raw_attrs = obj.get("attributes", {})
    if not isinstance(raw_attrs, dict):
        raise SchemaError("attributes must be an object", path="attributes")
    for name, values in raw_attrs.items():
        _check_name(name, f"attributes.{name}", forbid_colon=True)
        if not isinstance(values, list) or not values or not all(isinstance(v, str) for v in values):
            raise SchemaError("attribute values must be a non-empty string list", path=f"attributes.{name}")
        if len(set(values)) != len(values):
            raise SchemaError("attribute values must be unique", path=f"attributes.{name}")
        for v in values:
            _check_name(v, f"attributes.{name}")
        attributes[name] = list(values)

    feature_order = obj.get("feature_order", list(FEATURE_NAMES))
    if not isinstance(feature_order, list) or not all(isinstance(f, str) for f in feature_order):
        raise SchemaError("feature_order must be a string list", path="feature_order")
    unknown = [f for f in feature_order if f not in FEATURE_NAMES]
    if unknown:
        raise SchemaError(f"unknown features: {unknown}", path="feature_order")
    if len(set(feature_order)) != len(feature_order) or not feature_order:
        raise SchemaError("feature_order must be non-empty and unique", path="feature_order")

    rules: List[Rule] = []
    priorities: Set[int] = set()
    raw_rules = obj.get("rules", [])
    if not isinstance(raw_rules, list):
        raise SchemaError("rules must be a list", path="rules")
    for idx, raw in enumerate(raw_rules):
        path = f"rules[{idx}]"
        if not isinstance(raw, dict):
            raise SchemaError("rule must be an object", path=path)
        conditions = _require(raw, "conditions", dict, path)
        for feature, required in conditions.items():
            if feature not in feature_order:
                raise SchemaError(f"rule condition on unknown feature {feature!r}", path=f"{path}.conditions")
            if not isinstance(required, bool):
                raise SchemaError("rule conditions must be booleans", path=f"{path}.conditions")
        predicate = _require(raw, "predicate", str, path)
        if predicate not in predicates:
            raise SchemaError(f"rule predicate {predicate!r} not configured", path=f"{path}.predicate")
        priority = _require(raw, "priority", int, path)
        if priority in priorities:
            raise SchemaError(f"duplicate rule priority {priority}", path=f"{path}.priority")
        priorities.add(priority)
        rules.append(Rule(dict(conditions), predicate, priority))

    eq1_domain = obj.get("eq1_domain", "present")
    if eq1_domain not in ("present", "all"):
        raise SchemaError("eq1_domain must be 'present' or 'all'", path="eq1_domain")

    return ProjectConfig(
        object_categories=list(categories),
        predicates=list(predicates),
        object_hierarchy=object_hierarchy,
        predicate_hierarchy=predicate_hierarchy,
        attributes=attributes,
        feature_order=list(feature_order),
        rules=rules,
        eq1_domain=eq1_domain,
        extra=_extra_keys(obj, _CONFIG_KEYS),
    )


def default_config() -> ProjectConfig:
    """The shipped traffic vocabulary: 34 object categories, 51
    predicates, the orientation attribute and the default rule table."""
    data = resources.files("sganno").joinpath("default_config.json").read_bytes()
    return load_config(data)


def save_config(config: ProjectConfig) -> bytes:
    rules = [
        {
            "conditions": {f: config_rule.conditions[f] for f in sorted(config_rule.conditions)},
            "predicate": config_rule.predicate,
            "priority": config_rule.priority,
        }
        for config_rule in sorted(config.rules, key=lambda r: r.priority)
    ]
    attributes = {name: list(config.attributes[name]) for name in sorted(config.attributes)}
    obj = _canonical_obj(
        [
            ("object_categories", list(config.object_categories)),
            ("object_hierarchy", _hierarchy_to_json(config.object_hierarchy)),
            ("predicates", list(config.predicates)),
            ("predicate_hierarchy", _hierarchy_to_json(config.predicate_hierarchy)),
            ("attributes", attributes),
            ("feature_order", list(config.feature_order)),
            ("rules", rules),
            ("eq1_domain", config.eq1_domain),
        ],
        config.extra,
    )
    return _dumps(obj)


# --- merged (flattened-array) format -------------------------------------------


def _index_maps(names: Sequence[str]) -> Tuple[Dict[str, str], Dict[str, int]]:
    """1-based maps over sorted names; index 0 stays reserved for the
    background/unlabeled slot and never appears in the maps."""
    ordered = sorted(names)
    idx_to_name = {str(i + 1): name for i, name in enumerate(ordered)}
    name_to_idx = {name: i + 1 for i, name in enumerate(ordered)}
    return idx_to_name, name_to_idx


def _attribute_tokens(config: ProjectConfig) -> List[str]:
    return sorted(f"{name}:{value}" for name, values in config.attributes.items() for value in values)


def export_merged(
    docs: Sequence[AnnotationDocument],
    config: ProjectConfig,
    split_assignment: Optional[Dict[str, str]] = None,
) -> Tuple[Dict[str, Any], ConversionReport]:
    """Flatten documents into one merged dataset object plus a report.

    Clusters are expanded, regions and unknown keys dropped; every such
    step lands in the report. Index ranges are inclusive with -1/-1
    marking images that contribute nothing to an array.
    """
    split_assignment = split_assignment or {}
    report = ConversionReport()
    seen_ids: Set[str] = set()
    for doc in docs:
        if doc.image_id in seen_ids:
            raise DuplicateImageId(f"image id {doc.image_id!r} occurs twice", image_id=doc.image_id)
        seen_ids.add(doc.image_id)
    unknown_splits = sorted(
        {label for label in split_assignment.values() if label not in SPLIT_CODES}
    )
    if unknown_splits:
        raise UnknownSplitLabel(f"unknown split labels: {unknown_splits}")

    idx_to_label, label_to_idx = _index_maps(config.object_categories)
    idx_to_predicate, predicate_to_idx = _index_maps(config.predicates)
    tokens = _attribute_tokens(config)
    idx_to_attribute = {str(i + 1): token for i, token in enumerate(tokens)}
    attribute_to_idx = {token: i + 1 for i, token in enumerate(tokens)}

    images = []
    split: List[int] = []
    boxes: List[List[int]] = []
    labels: List[int] = []
    attributes: List[List[int]] = []
    box_ids: List[str] = []
    mask_refs: List[Optional[str]] = []
    relationships: List[List[int]] = []
    rel_ids: List[str] = []
    first_box: List[int] = []
    last_box: List[int] = []
    first_rel: List[int] = []
    last_rel: List[int] = []

    for doc in sorted(docs, key=lambda d: d.image_id):
        expanded = model.expand_clusters(doc)
        for cl in doc.clusters:
            report.add(doc.image_id, "expanded_cluster", cl.id, f"{len(cl.member_ids)} member(s)")
        if doc.clusters:
            members = {cl.id for cl in doc.clusters}
            for rel in doc.relationships:
                if rel.subject_ref in members or rel.object_ref in members:
                    report.add(doc.image_id, "expanded_relationship", rel.id, "cluster endpoint expanded")
        for reg in doc.regions:
            report.add(doc.image_id, "dropped_region", reg.id, "regions have no merged representation")
        dropped_extra = sorted(
            set(doc.extra)
            | set(doc.image_extra)
            | {k for e in doc.instances + doc.clusters + doc.regions + doc.relationships for k in e.extra}
        )
        if dropped_extra:
            report.add(doc.image_id, "dropped_unknown_keys", doc.image_id, f"keys: {dropped_extra}")

        images.append(
            {
                "image_id": doc.image_id,
                "width": doc.width,
                "height": doc.height,
                "file_name": doc.file_name,
            }
        )
        split.append(SPLIT_CODES[split_assignment.get(doc.image_id, "train")])

        box_index = {}
        start_box = len(boxes)
        for inst in expanded.instances:
            box_index[inst.id] = len(boxes)
            boxes.append(inst.bbox.as_list())
            if inst.category not in label_to_idx:
                raise UnresolvedLabel(f"category {inst.category!r} not in config", image_id=doc.image_id)
            labels.append(label_to_idx[inst.category])
            try:
                attributes.append(sorted(attribute_to_idx[f"{a.attribute}:{a.value}"] for a in inst.attributes))
            except KeyError as exc:
                raise UnresolvedLabel(f"attribute {exc.args[0]!r} not in config", image_id=doc.image_id) from exc
            box_ids.append(inst.id)
            mask_refs.append(inst.mask_ref)
        if expanded.instances:
            first_box.append(start_box)
            last_box.append(len(boxes) - 1)
        else:
            first_box.append(-1)
            last_box.append(-1)

        start_rel = len(relationships)
        for rel in expanded.relationships:
            if rel.predicate not in predicate_to_idx:
                raise UnresolvedLabel(f"predicate {rel.predicate!r} not in config", image_id=doc.image_id)
            relationships.append(
                [box_index[rel.subject_ref], box_index[rel.object_ref], predicate_to_idx[rel.predicate]]
            )
            rel_ids.append(rel.id)
        if expanded.relationships:
            first_rel.append(start_rel)
            last_rel.append(len(relationships) - 1)
        else:
            first_rel.append(-1)
            last_rel.append(-1)

    merged = {
        "idx_to_label": idx_to_label,
        "label_to_idx": label_to_idx,
        "idx_to_predicate": idx_to_predicate,
        "predicate_to_idx": predicate_to_idx,
        "idx_to_attribute": idx_to_attribute,
        "images": images,
        "split": split,
        "boxes": boxes,
        "labels": labels,
        "attributes": attributes,
        "box_ids": box_ids,
        "mask_refs": mask_refs,
        "relationships": relationships,
        "rel_ids": rel_ids,
        "img_to_first_box": first_box,
        "img_to_last_box": last_box,
        "img_to_first_rel": first_rel,
        "img_to_last_rel": last_rel,
    }
    return merged, report


def save_merged(merged: Dict[str, Any]) -> bytes:
    """Canonical merged serialization: one top-level key per line."""
    keys = [k for k in _MERGED_KEY_ORDER if k in merged]
    keys += sorted(k for k in merged if k not in _MERGED_KEY_ORDER)
    lines = ["{"]
    for pos, key in enumerate(keys):
        value = json.dumps(merged[key], ensure_ascii=False, separators=(",", ":"))
        comma = "," if pos < len(keys) - 1 else ""
        lines.append(f'  "{key}": {value}{comma}')
    lines.append("}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_merged(data: bytes) -> Dict[str, Any]:
    """Parse a merged dataset file and check its structural invariants."""
    obj = _parse_json(data)
    if not isinstance(obj, dict):
        raise SchemaError("top level must be an object", path="")
    for key in ("idx_to_label", "label_to_idx", "idx_to_predicate", "predicate_to_idx", "idx_to_attribute"):
        _require(obj, key, dict, "")
    for key in (
        "images",
        "split",
        "boxes",
        "labels",
        "attributes",
        "relationships",
        "img_to_first_box",
        "img_to_last_box",
        "img_to_first_rel",
        "img_to_last_rel",
    ):
        _require(obj, key, list, "")
    n_images = len(obj["images"])
    for key in ("split", "img_to_first_box", "img_to_last_box", "img_to_first_rel", "img_to_last_rel"):
        if len(obj[key]) != n_images:
            raise SchemaError(f"{key} length {len(obj[key])} != images length {n_images}", path=key)
    n_boxes = len(obj["boxes"])
    for key in ("labels", "attributes"):
        if len(obj[key]) != n_boxes:
            raise SchemaError(f"{key} length {len(obj[key])} != boxes length {n_boxes}", path=key)
    for key in ("box_ids", "mask_refs"):
        if key in obj and len(obj[key]) != n_boxes:
            raise SchemaError(f"{key} length {len(obj[key])} != boxes length {n_boxes}", path=key)
    if "rel_ids" in obj and len(obj["rel_ids"]) != len(obj["relationships"]):
        raise SchemaError("rel_ids length != relationships length", path="rel_ids")
    for idx, image in enumerate(obj["images"]):
        if not isinstance(image, dict):
            raise SchemaError("image must be an object", path=f"images[{idx}]")
        _require(image, "image_id", str, f"images[{idx}]")
        _require(image, "width", int, f"images[{idx}]")
        _require(image, "height", int, f"images[{idx}]")
        _require(image, "file_name", str, f"images[{idx}]")
    return obj


def _check_ranges(first: List[int], last: List[int], total: int, label: str) -> None:
    cursor = 0
    for idx, (lo, hi) in enumerate(zip(first, last)):
        if lo == -1 and hi == -1:
            continue
        if lo != cursor or hi < lo:
            raise IndexRangeError(
                f"{label} range [{lo}, {hi}] of image #{idx} does not continue partition at {cursor}",
                image_index=idx,
            )
        cursor = hi + 1
    if cursor != total:
        raise IndexRangeError(f"{label} ranges cover {cursor} of {total} entries")


def import_merged(
    merged: Dict[str, Any], config: ProjectConfig
) -> Tuple[List[AnnotationDocument], ConversionReport]:
    """Split a merged dataset back into per-image documents.

    The merged layout carries no clusters or regions, so this direction
    is lossless and the report is always empty.
    """
    _check_ranges(merged["img_to_first_box"], merged["img_to_last_box"], len(merged["boxes"]), "box")
    _check_ranges(
        merged["img_to_first_rel"], merged["img_to_last_rel"], len(merged["relationships"]), "rel"
    )

    idx_to_label = merged["idx_to_label"]
    idx_to_predicate = merged["idx_to_predicate"]
    idx_to_attribute = merged["idx_to_attribute"]
    box_ids = merged.get("box_ids") or [f"i{i}" for i in range(len(merged["boxes"]))]
    rel_ids = merged.get("rel_ids") or [f"r{i}" for i in range(len(merged["relationships"]))]
    mask_refs = merged.get("mask_refs") or [None] * len(merged["boxes"])

    docs = []
    for img_idx, image in enumerate(merged["images"]):
        doc = AnnotationDocument(
            image_id=image["image_id"],
            width=image["width"],
            height=image["height"],
            file_name=image["file_name"],
        )
        lo, hi = merged["img_to_first_box"][img_idx], merged["img_to_last_box"][img_idx]
        box_range = range(lo, hi + 1) if lo != -1 else range(0)
        index_to_id = {}
        for box_idx in box_range:
            label_idx = merged["labels"][box_idx]
            category = idx_to_label.get(str(label_idx))
            if category is None:
                raise UnresolvedLabel(f"label index {label_idx} not in idx_to_label", index=box_idx)
            attrs = []
            for attr_idx in merged["attributes"][box_idx]:
                token = idx_to_attribute.get(str(attr_idx))
                if token is None:
                    raise UnresolvedLabel(f"attribute index {attr_idx} not in idx_to_attribute", index=box_idx)
                name, _, value = token.partition(":")
                attrs.append(AttributeValue(name, value))
            index_to_id[box_idx] = box_ids[box_idx]
            doc.instances.append(
                Instance(
                    id=box_ids[box_idx],
                    category=category,
                    bbox=_parse_bbox(merged["boxes"][box_idx], f"boxes[{box_idx}]"),
                    attributes=tuple(attrs),
                    mask_ref=mask_refs[box_idx],
                )
            )
        lo, hi = merged["img_to_first_rel"][img_idx], merged["img_to_last_rel"][img_idx]
        rel_range = range(lo, hi + 1) if lo != -1 else range(0)
        for rel_idx in rel_range:
            sub_idx, obj_idx, pred_idx = merged["relationships"][rel_idx]
            if sub_idx not in index_to_id or obj_idx not in index_to_id:
                raise IndexRangeError(
                    f"relationship #{rel_idx} references boxes outside image {doc.image_id!r}",
                    index=rel_idx,
                )
            predicate = idx_to_predicate.get(str(pred_idx))
            if predicate is None:
                raise UnresolvedLabel(f"predicate index {pred_idx} not in idx_to_predicate", index=rel_idx)
            doc.relationships.append(
                Relationship(
                    id=rel_ids[rel_idx],
                    subject_ref=index_to_id[sub_idx],
                    predicate=predicate,
                    object_ref=index_to_id[obj_idx],
                )
            )
        doc.instances.sort(key=lambda e: e.id)
        doc.relationships.sort(key=lambda e: e.id)
        violations = validate(doc, config)
        if violations:
            raise ValidationError(
                f"imported image {doc.image_id!r} invalid: {violations[0].code}",
                violations=violations,
            )
        docs.append(doc)
    return docs, ConversionReport()
