"""On-disk annotation project: persistence, serialized mutations, recovery.

A project directory holds the config, source bitmaps, one per-image
annotation file per image, the prior-database count file, the frozen
per-relationship feature records, and an append-only mutation log:

    project/
      config.json           vocabulary, hierarchies, rules
      images/               source bitmaps (PNG dimensions are sniffed)
      annotations/          {image_id}.json per-image files
      prior_db.tsv          tab-separated key/count file
      prior_records.jsonl   frozen (pair, features, predicate) per edge
      mutation_log.jsonl    append-only write-ahead log
      export/               conversion outputs

Every mutation is computed in memory, appended to the log, and only
then written to the data files, so a crash between writes is healed on
the next open by replaying the log from empty. Feature vectors are
frozen at annotation time: editing geometry later does not rewrite the
prior database unless ``rebuild_priors`` is invoked explicitly.
"""

from __future__ import annotations

import json
import os
import struct
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Set, Tuple

from . import model
from .errors import (
    AnnotationToolError,
    CorruptAnnotation,
    MissingConfig,
    PairOutsideRegions,
    ParseError,
    SchemaError,
    SelfLoop,
    StorageFailure,
    UnknownEntity,
    UnknownImage,
)
from .formats import (
    ConversionReport,
    export_merged,
    load_config,
    load_per_image,
    save_config,
    save_merged,
    save_per_image,
)
from .model import AnnotationDocument, AttributeValue, ProjectConfig, Region, Relationship
from .recommend import (
    FeatureVector,
    PairKey,
    PriorDatabase,
    PriorRecord,
    Recommendation,
    extract_features,
    recommend,
    recount,
    remove_prior,
    update_prior,
)

CONFIG_FILE = "config.json"
IMAGES_DIR = "images"
ANNOTATIONS_DIR = "annotations"
PRIOR_DB_FILE = "prior_db.tsv"
RECORDS_FILE = "prior_records.jsonl"
LOG_FILE = "mutation_log.jsonl"
EXPORT_DIR = "export"

_PRIOR_DB_HEADER = "# sganno prior database v1"


# --- prior database and record files ------------------------------------------


def dump_prior_db(db: PriorDatabase) -> bytes:
    """Documented text form: sorted tab-separated key/count lines."""
    lines = [_PRIOR_DB_HEADER, f"total\t{db.total_annotations}"]
    for (sub, obj, feature) in sorted(db.count_ub):
        lines.append(f"ub\t{sub}\t{obj}\t{feature}\t{db.count_ub[(sub, obj, feature)]}")
    for (feature, predicate) in sorted(db.count_bi):
        lines.append(f"bi\t{feature}\t{predicate}\t{db.count_bi[(feature, predicate)]}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_prior_db(data: bytes) -> PriorDatabase:
    db = PriorDatabase()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"prior db is not UTF-8: {exc.reason}", offset=exc.start) from exc
    for number, line in enumerate(text.splitlines(), start=1):
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        try:
            if parts[0] == "total" and len(parts) == 2:
                db.total_annotations = int(parts[1])
            elif parts[0] == "ub" and len(parts) == 5:
                db.count_ub[(parts[1], parts[2], parts[3])] = int(parts[4])
            elif parts[0] == "bi" and len(parts) == 4:
                db.count_bi[(parts[1], parts[2])] = int(parts[3])
            else:
                raise ValueError("unrecognized row")
        except ValueError as exc:
            raise ParseError(f"prior db line {number}: {exc}", line=number) from exc
    return db


def _record_to_obj(image_id: str, rel_id: str, record: PriorRecord) -> Dict[str, Any]:
    return {
        "image_id": image_id,
        "rel_id": rel_id,
        "subject_category": record.subject_category,
        "object_category": record.object_category,
        "features": dict(record.features),
        "predicate": record.predicate,
    }


def _record_from_obj(obj: Dict[str, Any]) -> Tuple[Tuple[str, str], PriorRecord]:
    record = PriorRecord(
        obj["subject_category"],
        obj["object_category"],
        tuple((k, int(v)) for k, v in obj["features"].items()),
        obj["predicate"],
    )
    return (obj["image_id"], obj["rel_id"]), record


def dump_records(records: Dict[Tuple[str, str], PriorRecord]) -> bytes:
    lines = [
        json.dumps(_record_to_obj(image_id, rel_id, records[(image_id, rel_id)]), ensure_ascii=False)
        for image_id, rel_id in sorted(records)
    ]
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def parse_records(data: bytes) -> Dict[Tuple[str, str], PriorRecord]:
    records: Dict[Tuple[str, str], PriorRecord] = {}
    for number, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            key, record = _record_from_obj(json.loads(line))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"prior records line {number}: {exc}", line=number) from exc
        records[key] = record
    return records


# --- helpers -------------------------------------------------------------------


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as handle:
        handle.write(data)
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(tmp, path)


def png_dimensions(data: bytes) -> Optional[Tuple[int, int]]:
    """Width/height from a PNG IHDR header, or None for other formats."""
    if len(data) < 24 or data[:8] != b"\x89PNG\r\n\x1a\n":
        return None
    width, height = struct.unpack(">II", data[16:24])
    return int(width), int(height)


def _doc_to_obj(doc: AnnotationDocument) -> Dict[str, Any]:
    return json.loads(save_per_image(doc).decode("utf-8"))


@dataclass
class StoreState:
    """Immutable-by-convention snapshot of the whole project."""

    docs: Dict[str, AnnotationDocument] = field(default_factory=dict)
    prior: PriorDatabase = field(default_factory=PriorDatabase)
    records: Dict[Tuple[str, str], PriorRecord] = field(default_factory=dict)


@dataclass
class ApplyResult:
    state: StoreState
    touched_images: Set[str]
    prior_changed: bool
    result: Any = None


def _ordered_features(features: Dict[str, int], order: Sequence[str]) -> Dict[str, int]:
    return {name: int(features.get(name, 0)) for name in order}


def _pair_and_features(
    doc: AnnotationDocument, subject_ref: str, object_ref: str, config: ProjectConfig
) -> Tuple[PairKey, FeatureVector]:
    u = (doc.entity_category(subject_ref), doc.entity_category(object_ref))
    b = extract_features(doc.entity_bbox(subject_ref), doc.entity_bbox(object_ref), config.feature_order)
    return u, b


def _records_for_doc(
    doc: AnnotationDocument, config: ProjectConfig
) -> Dict[Tuple[str, str], PriorRecord]:
    out = {}
    for rel in doc.relationships:
        u, b = _pair_and_features(doc, rel.subject_ref, rel.object_ref, config)
        out[(doc.image_id, rel.id)] = PriorRecord.make(u, b, rel.predicate)
    return out


# --- mutation application (shared by live calls and log replay) ----------------


def _apply_put_annotation(state: StoreState, entry: Dict[str, Any], config: ProjectConfig) -> ApplyResult:
    doc = load_per_image(json.dumps(entry["document"]).encode("utf-8"), config)
    image_id = doc.image_id
    new_records = dict(state.records)
    prior = state.prior
    for key in [k for k in state.records if k[0] == image_id]:
        old = state.records[key]
        prior = remove_prior(prior, old.pair, old.feature_dict(), old.predicate)
        del new_records[key]
    fresh = _records_for_doc(doc, config)
    for key, record in fresh.items():
        prior = update_prior(prior, record.pair, record.feature_dict(), record.predicate)
        new_records[key] = record
    docs = dict(state.docs)
    docs[image_id] = doc
    return ApplyResult(StoreState(docs, prior, new_records), {image_id}, True, image_id)


def _apply_import_image(state: StoreState, entry: Dict[str, Any], config: ProjectConfig) -> ApplyResult:
    doc = load_per_image(json.dumps(entry["document"]).encode("utf-8"), config)
    new_records = dict(state.records)
    prior = state.prior
    for obj in entry["records"]:
        key, record = _record_from_obj(obj)
        prior = update_prior(prior, record.pair, record.feature_dict(), record.predicate)
        new_records[key] = record
    docs = dict(state.docs)
    docs[doc.image_id] = doc
    return ApplyResult(StoreState(docs, prior, new_records), {doc.image_id}, True, doc.image_id)


def _doc_from_state(state: StoreState, image_id: str) -> AnnotationDocument:
    doc = state.docs.get(image_id)
    if doc is None:
        raise UnknownImage(f"no annotation for image {image_id!r}", image_id=image_id)
    return doc


def _with_doc(state: StoreState, doc: AnnotationDocument) -> StoreState:
    docs = dict(state.docs)
    docs[doc.image_id] = doc
    return StoreState(docs, state.prior, state.records)


def _apply_add_instance(state: StoreState, entry: Dict[str, Any], config: ProjectConfig) -> ApplyResult:
    doc = _doc_from_state(state, entry["image_id"])
    inst = _instance_from_obj(entry["instance"])
    new_doc = model.add_instance(doc, inst, config)
    return ApplyResult(_with_doc(state, new_doc), {doc.image_id}, False, inst.id)


def _apply_update_instance(state: StoreState, entry: Dict[str, Any], config: ProjectConfig) -> ApplyResult:
    doc = _doc_from_state(state, entry["image_id"])
    inst = _instance_from_obj(entry["instance"])
    new_doc = model.update_instance(doc, inst, config)
    return ApplyResult(_with_doc(state, new_doc), {doc.image_id}, False, inst.id)


def _remove_rels_with_prior(
    state: StoreState, image_id: str, new_doc: AnnotationDocument
) -> Tuple[StoreState, List[str]]:
    old_doc = state.docs[image_id]
    removed = sorted({r.id for r in old_doc.relationships} - {r.id for r in new_doc.relationships})
    prior = state.prior
    records = dict(state.records)
    for rel_id in removed:
        record = records.pop((image_id, rel_id))
        prior = remove_prior(prior, record.pair, record.feature_dict(), record.predicate)
    docs = dict(state.docs)
    docs[image_id] = new_doc
    return StoreState(docs, prior, records), removed


def _apply_delete_instance(state: StoreState, entry: Dict[str, Any], config: ProjectConfig) -> ApplyResult:
    image_id = entry["image_id"]
    doc = _doc_from_state(state, image_id)
    new_doc = model.delete_instance(doc, entry["instance_id"])
    new_state, removed = _remove_rels_with_prior(state, image_id, new_doc)
    return ApplyResult(new_state, {image_id}, bool(removed), removed)


def _apply_add_region(state: StoreState, entry: Dict[str, Any], config: ProjectConfig) -> ApplyResult:
    doc = _doc_from_state(state, entry["image_id"])
    obj = entry["region"]
    region = Region(
        id=obj["id"],
        bbox=model.BBox(*obj["bbox"]),
        label=obj.get("label"),
    )
    new_doc = model.add_region(doc, region, config)
    return ApplyResult(_with_doc(state, new_doc), {doc.image_id}, False, region.id)


def _apply_delete_region(state: StoreState, entry: Dict[str, Any], config: ProjectConfig) -> ApplyResult:
    doc = _doc_from_state(state, entry["image_id"])
    new_doc = model.delete_region(doc, entry["region_id"])
    return ApplyResult(_with_doc(state, new_doc), {doc.image_id}, False, None)


def _apply_make_cluster(state: StoreState, entry: Dict[str, Any], config: ProjectConfig) -> ApplyResult:
    doc = _doc_from_state(state, entry["image_id"])
    new_doc = model.make_cluster(doc, entry["member_ids"], entry["cluster_id"], config)
    return ApplyResult(_with_doc(state, new_doc), {doc.image_id}, False, entry["cluster_id"])


def _apply_delete_cluster(state: StoreState, entry: Dict[str, Any], config: ProjectConfig) -> ApplyResult:
    image_id = entry["image_id"]
    doc = _doc_from_state(state, image_id)
    new_doc = model.delete_cluster(doc, entry["cluster_id"])
    new_state, removed = _remove_rels_with_prior(state, image_id, new_doc)
    return ApplyResult(new_state, {image_id}, bool(removed), removed)


def _apply_set_attributes(state: StoreState, entry: Dict[str, Any], config: ProjectConfig) -> ApplyResult:
    doc = _doc_from_state(state, entry["image_id"])
    attributes = [AttributeValue(a["attribute"], a["value"]) for a in entry["attributes"]]
    new_doc = model.set_attributes(doc, entry["instance_id"], attributes, config)
    return ApplyResult(_with_doc(state, new_doc), {doc.image_id}, False, None)


def _apply_add_relationship(state: StoreState, entry: Dict[str, Any], config: ProjectConfig) -> ApplyResult:
    image_id = entry["image_id"]
    doc = _doc_from_state(state, image_id)
    obj = entry["relationship"]
    rel = Relationship(id=obj["id"], subject_ref=obj["subject"], predicate=obj["predicate"], object_ref=obj["object"])
    new_doc = model.add_relationship(doc, rel, config)
    if "subject_category" in entry:
        u = (entry["subject_category"], entry["object_category"])
    else:
        u = (doc.entity_category(rel.subject_ref), doc.entity_category(rel.object_ref))
    features = _ordered_features(entry["features"], config.feature_order)
    record = PriorRecord.make(u, features, rel.predicate)
    prior = update_prior(state.prior, record.pair, features, rel.predicate)
    records = dict(state.records)
    records[(image_id, rel.id)] = record
    docs = dict(state.docs)
    docs[image_id] = new_doc
    return ApplyResult(StoreState(docs, prior, records), {image_id}, True, rel.id)


def _apply_delete_relationship(state: StoreState, entry: Dict[str, Any], config: ProjectConfig) -> ApplyResult:
    image_id = entry["image_id"]
    doc = _doc_from_state(state, image_id)
    new_doc = model.delete_relationship(doc, entry["rel_id"])
    new_state, removed = _remove_rels_with_prior(state, image_id, new_doc)
    return ApplyResult(new_state, {image_id}, bool(removed), None)


def _apply_rebuild_priors(state: StoreState, entry: Dict[str, Any], config: ProjectConfig) -> ApplyResult:
    records: Dict[Tuple[str, str], PriorRecord] = {}
    for image_id in sorted(state.docs):
        records.update(_records_for_doc(state.docs[image_id], config))
    prior = recount([records[key] for key in sorted(records)])
    return ApplyResult(StoreState(dict(state.docs), prior, records), set(), True, None)


_APPLY: Dict[str, Callable[[StoreState, Dict[str, Any], ProjectConfig], ApplyResult]] = {
    "put_annotation": _apply_put_annotation,
    "import_image": _apply_import_image,
    "add_instance": _apply_add_instance,
    "update_instance": _apply_update_instance,
    "delete_instance": _apply_delete_instance,
    "add_region": _apply_add_region,
    "delete_region": _apply_delete_region,
    "make_cluster": _apply_make_cluster,
    "delete_cluster": _apply_delete_cluster,
    "set_attributes": _apply_set_attributes,
    "add_relationship": _apply_add_relationship,
    "delete_relationship": _apply_delete_relationship,
    "rebuild_priors": _apply_rebuild_priors,
}


def _instance_from_obj(obj: Dict[str, Any]) -> model.Instance:
    return model.Instance(
        id=obj["id"],
        category=obj["category"],
        bbox=model.BBox(*obj["bbox"]),
        attributes=tuple(AttributeValue(a["attribute"], a["value"]) for a in obj.get("attributes", [])),
        mask_ref=obj.get("mask_ref"),
    )


def replay_log(entries: Sequence[Dict[str, Any]], config: ProjectConfig) -> StoreState:
    """Fold a mutation log from the empty state."""
    state = StoreState()
    for entry in entries:
        op = entry.get("op")
        if op not in _APPLY:
            raise CorruptAnnotation(f"log entry #{entry.get('seq')} has unknown op {op!r}")
        state = _APPLY[op](state, entry, config).state
    return state


# --- the store ------------------------------------------------------------------


class ProjectStore:
    """Single project handle; one serialized writer, snapshot readers."""

    def __init__(self, root: Path, config: ProjectConfig, state: StoreState, last_seq: int,
                 open_report: List[str]):
        self.root = Path(root)
        self.config = config
        self._state = state
        self._seq = last_seq
        self.open_report = open_report
        self._lock = threading.RLock()
        self._log_handle = open(self.root / LOG_FILE, "ab")

    # --- lifecycle ---

    @classmethod
    def create(cls, root: Path, config: ProjectConfig) -> "ProjectStore":
        """Initialize a fresh project directory."""
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        (root / IMAGES_DIR).mkdir(exist_ok=True)
        (root / ANNOTATIONS_DIR).mkdir(exist_ok=True)
        (root / EXPORT_DIR).mkdir(exist_ok=True)
        _atomic_write(root / CONFIG_FILE, save_config(config))
        _atomic_write(root / PRIOR_DB_FILE, dump_prior_db(PriorDatabase()))
        _atomic_write(root / RECORDS_FILE, dump_records({}))
        return open_project(root)

    def close(self) -> None:
        self._log_handle.close()

    # --- snapshots ---

    @property
    def state(self) -> StoreState:
        with self._lock:
            return self._state

    def document(self, image_id: str) -> AnnotationDocument:
        """Current document; an empty one is minted for a known bitmap."""
        state = self.state
        doc = state.docs.get(image_id)
        if doc is not None:
            return doc
        created = self._empty_doc_from_bitmap(image_id)
        if created is None:
            raise UnknownImage(f"unknown image {image_id!r}", image_id=image_id)
        return created

    def _empty_doc_from_bitmap(self, image_id: str) -> Optional[AnnotationDocument]:
        path = self.bitmap_path(image_id)
        if path is None:
            return None
        dims = png_dimensions(path.read_bytes())
        if dims is None:
            return None
        return model.empty_document(image_id, dims[0], dims[1], path.name)

    def bitmap_path(self, image_id: str) -> Optional[Path]:
        images = self.root / IMAGES_DIR
        doc = self.state.docs.get(image_id)
        if doc is not None and (images / doc.file_name).is_file():
            return images / doc.file_name
        if images.is_dir():
            for path in sorted(images.iterdir()):
                if path.is_file() and path.stem == image_id:
                    return path
        return None

    def list_images(self) -> List[Dict[str, Any]]:
        state = self.state
        ids = set(state.docs)
        images = self.root / IMAGES_DIR
        if images.is_dir():
            ids.update(p.stem for p in images.iterdir() if p.is_file())
        out = []
        for image_id in sorted(ids):
            doc = state.docs.get(image_id)
            out.append(
                {
                    "image_id": image_id,
                    "annotated": doc is not None,
                    "instances": len(doc.instances) if doc else 0,
                    "clusters": len(doc.clusters) if doc else 0,
                    "regions": len(doc.regions) if doc else 0,
                    "relationships": len(doc.relationships) if doc else 0,
                }
            )
        return out

    def next_id(self, doc: AnnotationDocument, prefix: str) -> str:
        """Smallest free server-assigned id with the given prefix."""
        used = doc.entity_ids() | {r.id for r in doc.relationships} | {g.id for g in doc.regions}
        n = 1
        while f"{prefix}{n}" in used:
            n += 1
        return f"{prefix}{n}"

    # --- mutation machinery ---

    def _append_log(self, op: str, image_id: Optional[str], payload: Dict[str, Any]) -> None:
        self._seq += 1
        entry: Dict[str, Any] = {"seq": self._seq, "ts": time.time(), "op": op}
        if image_id is not None:
            entry["image_id"] = image_id
        entry.update(payload)
        line = json.dumps(entry, ensure_ascii=False) + "\n"
        self._log_handle.write(line.encode("utf-8"))
        self._log_handle.flush()
        os.fsync(self._log_handle.fileno())

    def _write_annotation(self, image_id: str) -> None:
        doc = self._state.docs.get(image_id)
        if doc is None:
            path = self.root / ANNOTATIONS_DIR / f"{image_id}.json"
            if path.exists():
                path.unlink()
            return
        (self.root / ANNOTATIONS_DIR).mkdir(exist_ok=True)
        _atomic_write(self.root / ANNOTATIONS_DIR / f"{image_id}.json", save_per_image(doc))

    def _write_prior_files(self) -> None:
        _atomic_write(self.root / RECORDS_FILE, dump_records(self._state.records))
        _atomic_write(self.root / PRIOR_DB_FILE, dump_prior_db(self._state.prior))

    def _mutate(self, op: str, image_id: Optional[str], payload: Dict[str, Any]) -> Any:
        """Validate, log, commit. The log entry is the source of truth;
        data files follow and are repaired from the log after a crash."""
        with self._lock:
            entry: Dict[str, Any] = {"op": op}
            if image_id is not None:
                entry["image_id"] = image_id
            entry.update(payload)
            applied = _APPLY[op](self._state, entry, self.config)
            self._append_log(op, image_id, payload)
            self._state = applied.state
            try:
                for touched in sorted(applied.touched_images):
                    self._write_annotation(touched)
                if applied.prior_changed:
                    self._write_prior_files()
            except OSError as exc:
                raise StorageFailure(f"write failed after log append: {exc}") from exc
            return applied.result

    def _ensure_document(self, image_id: str) -> None:
        """Create (and log) an empty document for a known bitmap."""
        if image_id in self._state.docs:
            return
        created = self._empty_doc_from_bitmap(image_id)
        if created is None:
            raise UnknownImage(f"unknown image {image_id!r}", image_id=image_id)
        self._mutate("put_annotation", image_id, {"document": _doc_to_obj(created)})

    # --- public mutations ---

    def put_document(self, doc: AnnotationDocument) -> None:
        violations = model.validate(doc, self.config)
        if violations:
            model.raise_violation(violations[0])
        with self._lock:
            self._mutate("put_annotation", doc.image_id, {"document": _doc_to_obj(doc)})

    def add_instance(self, image_id: str, obj: Dict[str, Any]) -> str:
        with self._lock:
            self._ensure_document(image_id)
            doc = self._state.docs[image_id]
            payload = dict(obj)
            payload.setdefault("id", self.next_id(doc, "i"))
            return self._mutate("add_instance", image_id, {"instance": payload})

    def update_instance(self, image_id: str, obj: Dict[str, Any]) -> str:
        with self._lock:
            return self._mutate("update_instance", image_id, {"instance": obj})

    def delete_instance(self, image_id: str, instance_id: str) -> List[str]:
        with self._lock:
            return self._mutate("delete_instance", image_id, {"instance_id": instance_id})

    def add_region(self, image_id: str, obj: Dict[str, Any]) -> str:
        with self._lock:
            self._ensure_document(image_id)
            doc = self._state.docs[image_id]
            payload = dict(obj)
            payload.setdefault("id", self.next_id(doc, "g"))
            return self._mutate("add_region", image_id, {"region": payload})

    def delete_region(self, image_id: str, region_id: str) -> None:
        with self._lock:
            self._mutate("delete_region", image_id, {"region_id": region_id})

    def make_cluster(self, image_id: str, member_ids: Sequence[str], cluster_id: Optional[str] = None) -> str:
        with self._lock:
            doc = _doc_from_state(self._state, image_id)
            cluster_id = cluster_id or self.next_id(doc, "c")
            return self._mutate(
                "make_cluster", image_id, {"cluster_id": cluster_id, "member_ids": list(member_ids)}
            )

    def delete_cluster(self, image_id: str, cluster_id: str) -> List[str]:
        with self._lock:
            return self._mutate("delete_cluster", image_id, {"cluster_id": cluster_id})

    def set_attributes(self, image_id: str, instance_id: str, attributes: List[Dict[str, str]]) -> None:
        with self._lock:
            self._mutate(
                "set_attributes", image_id, {"instance_id": instance_id, "attributes": attributes}
            )

    def annotate(
        self,
        image_id: str,
        subject_ref: str,
        predicate: str,
        object_ref: str,
        rel_id: Optional[str] = None,
        override_regions: bool = False,
    ) -> str:
        """Store a relationship and fold its frozen features into the priors."""
        with self._lock:
            doc = _doc_from_state(self._state, image_id)
            if subject_ref == object_ref:
                raise SelfLoop("subject equals object", entity_id=subject_ref)
            u, features = _pair_and_features(doc, subject_ref, object_ref, self.config)
            if not override_regions and not model.pair_is_permitted(doc, subject_ref, object_ref):
                raise PairOutsideRegions(
                    f"pair ({subject_ref!r}, {object_ref!r}) shares no region",
                    subject_ref=subject_ref,
                    object_ref=object_ref,
                )
            rel_id = rel_id or self.next_id(doc, "r")
            return self._mutate(
                "add_relationship",
                image_id,
                {
                    "relationship": {
                        "id": rel_id,
                        "subject": subject_ref,
                        "predicate": predicate,
                        "object": object_ref,
                    },
                    "subject_category": u[0],
                    "object_category": u[1],
                    "features": features,
                },
            )

    def delete_relationship(self, image_id: str, rel_id: str) -> None:
        with self._lock:
            doc = _doc_from_state(self._state, image_id)
            if rel_id not in doc.relationship_map():
                raise UnknownEntity(f"no relationship with id {rel_id!r}", entity_id=rel_id)
            self._mutate("delete_relationship", image_id, {"rel_id": rel_id})

    def rebuild_priors(self) -> None:
        """Refreeze every record from current geometry and recount."""
        with self._lock:
            self._mutate("rebuild_priors", None, {})

    # --- queries ---

    def recommend_pair(
        self, image_id: str, subject_ref: str, object_ref: str, k: int, override_regions: bool = False
    ) -> List[Recommendation]:
        state = self.state
        doc = _doc_from_state(state, image_id)
        if subject_ref == object_ref:
            raise SelfLoop("subject equals object", entity_id=subject_ref)
        u, features = _pair_and_features(doc, subject_ref, object_ref, self.config)
        if not override_regions and not model.pair_is_permitted(doc, subject_ref, object_ref):
            raise PairOutsideRegions(
                f"pair ({subject_ref!r}, {object_ref!r}) shares no region",
                subject_ref=subject_ref,
                object_ref=object_ref,
            )
        return recommend(state.prior, self.config, u, features, k)

    def scenegraph(self, image_id: str) -> Dict[str, Any]:
        """Stored-edge view (clusters kept collapsed), deterministic order."""
        doc = self.document(image_id)
        nodes = []
        for inst in doc.instances:
            nodes.append(
                {
                    "id": inst.id,
                    "kind": "instance",
                    "category": inst.category,
                    "bbox": inst.bbox.as_list(),
                    "attributes": [{"attribute": a.attribute, "value": a.value} for a in inst.attributes],
                }
            )
        for cl in doc.clusters:
            nodes.append(
                {
                    "id": cl.id,
                    "kind": "cluster",
                    "category": cl.category,
                    "bbox": doc.entity_bbox(cl.id).as_list(),
                    "member_ids": list(cl.member_ids),
                }
            )
        nodes.sort(key=lambda n: n["id"])
        edges = [
            {"id": r.id, "subject": r.subject_ref, "predicate": r.predicate, "object": r.object_ref}
            for r in sorted(doc.relationships, key=lambda r: r.id)
        ]
        return {"image_id": doc.image_id, "nodes": nodes, "edges": edges}

    def export(
        self, fmt: str, split_assignment: Optional[Dict[str, str]] = None
    ) -> Tuple[Path, ConversionReport]:
        """Write an export artifact plus its conversion report."""
        state = self.state
        docs = [state.docs[image_id] for image_id in sorted(state.docs)]
        export_root = self.root / EXPORT_DIR
        export_root.mkdir(exist_ok=True)
        if fmt == "merged":
            merged, report = export_merged(docs, self.config, split_assignment)
            out = export_root / "merged.json"
            _atomic_write(out, save_merged(merged))
        elif fmt == "per_image":
            report = ConversionReport()
            out = export_root / "per_image"
            out.mkdir(exist_ok=True)
            for doc in docs:
                _atomic_write(out / f"{doc.image_id}.json", save_per_image(doc))
        else:
            raise SchemaError(f"unknown export format {fmt!r}", path="format")
        _atomic_write(
            export_root / f"{fmt}.report.json",
            (json.dumps(report.to_json_obj(), ensure_ascii=False, indent=2) + "\n").encode("utf-8"),
        )
        return out, report

    def prior_snapshot(self) -> Dict[str, Any]:
        prior = self.state.prior
        return {
            "total_annotations": prior.total_annotations,
            "count_ub": [
                {"subject_category": s, "object_category": o, "feature": f, "count": c}
                for (s, o, f), c in sorted(prior.count_ub.items())
            ],
            "count_bi": [
                {"feature": f, "predicate": p, "count": c}
                for (f, p), c in sorted(prior.count_bi.items())
            ],
        }

    def verify(self) -> List[str]:
        """In-memory and on-disk consistency findings; empty means clean."""
        with self._lock:
            state = self._state
            issues = []
            for image_id in sorted(state.docs):
                violations = model.validate(state.docs[image_id], self.config)
                issues.extend(
                    f"InvalidDocument: {image_id}: {v.code} on {v.entity_id!r}" for v in violations
                )
            rel_keys = {
                (image_id, rel.id)
                for image_id, doc in state.docs.items()
                for rel in doc.relationships
            }
            for missing in sorted(rel_keys - set(state.records)):
                issues.append(f"MissingPriorRecord: {missing[0]}/{missing[1]}")
            for orphan in sorted(set(state.records) - rel_keys):
                issues.append(f"OrphanPriorRecord: {orphan[0]}/{orphan[1]}")
            recounted = recount([state.records[key] for key in sorted(state.records)])
            if recounted != state.prior:
                issues.append("PriorDbMismatch: prior database differs from batch recount")
            issues.extend(_disk_issues(self.root, self.config, state))
            return issues


def _disk_issues(root: Path, config: ProjectConfig, state: StoreState) -> List[str]:
    issues = []
    annotations = root / ANNOTATIONS_DIR
    disk_ids = set()
    if annotations.is_dir():
        for path in sorted(annotations.glob("*.json")):
            disk_ids.add(path.stem)
    for image_id in sorted(set(state.docs) | disk_ids):
        doc = state.docs.get(image_id)
        path = annotations / f"{image_id}.json"
        if doc is None:
            issues.append(f"UnexpectedAnnotationFile: {path.name}")
        elif not path.is_file():
            issues.append(f"MissingAnnotationFile: {path.name}")
        elif path.read_bytes() != save_per_image(doc):
            issues.append(f"StaleAnnotationFile: {path.name}")
    db_path = root / PRIOR_DB_FILE
    if not db_path.is_file():
        issues.append("MissingPriorDb: prior_db.tsv not found")
    elif db_path.read_bytes() != dump_prior_db(state.prior):
        issues.append("PriorDbMismatch: prior_db.tsv differs from state")
    records_path = root / RECORDS_FILE
    if not records_path.is_file():
        if state.records:
            issues.append("MissingPriorRecords: prior_records.jsonl not found")
    elif records_path.read_bytes() != dump_records(state.records):
        issues.append("StalePriorRecords: prior_records.jsonl differs from state")
    return issues


def _read_log(path: Path) -> Tuple[List[Dict[str, Any]], bool]:
    """Parse the log; a malformed final line (crash mid-append) is
    dropped and flagged, a malformed middle line is a hard error."""
    entries: List[Dict[str, Any]] = []
    if not path.is_file():
        return entries, False
    lines = [line for line in path.read_bytes().decode("utf-8").splitlines() if line.strip()]
    for number, line in enumerate(lines, start=1):
        try:
            entries.append(json.loads(line))
        except json.JSONDecodeError as exc:
            if number == len(lines):
                return entries, True
            raise CorruptAnnotation(f"mutation log line {number}: {exc.msg}", file=str(path)) from exc
    return entries, False


def _load_disk_docs(root: Path, config: ProjectConfig) -> Dict[str, AnnotationDocument]:
    docs = {}
    annotations = root / ANNOTATIONS_DIR
    if annotations.is_dir():
        for path in sorted(annotations.glob("*.json")):
            try:
                doc = load_per_image(path.read_bytes(), config)
            except AnnotationToolError as exc:
                raise CorruptAnnotation(
                    f"annotation file {path.name}: {exc.code}: {exc.message}",
                    file=str(path),
                    cause=exc.code,
                ) from exc
            if doc.image_id != path.stem:
                raise CorruptAnnotation(
                    f"annotation file {path.name} holds image id {doc.image_id!r}",
                    file=str(path),
                    cause="ImageIdMismatch",
                )
            docs[doc.image_id] = doc
    return docs


def open_project(root: Path | str) -> ProjectStore:
    """Open (and if necessary heal) a project directory.

    With a mutation log present the log is authoritative: the state is
    replayed from empty and any stale data file is rewritten. Without a
    log, data files are adopted as-is, frozen feature records are taken
    from the records file (or derived from geometry when absent), the
    whole lot is sealed into the log as import entries, and a prior
    database that disagrees with the recount is repaired.
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingConfig(f"project directory {root} does not exist", path=str(root))
    config_path = root / CONFIG_FILE
    if not config_path.is_file():
        raise MissingConfig(f"{CONFIG_FILE} not found in {root}", path=str(config_path))
    config = load_config(config_path.read_bytes())
    for name in (IMAGES_DIR, ANNOTATIONS_DIR, EXPORT_DIR):
        (root / name).mkdir(exist_ok=True)

    open_report: List[str] = []
    log_path = root / LOG_FILE
    entries, dropped_tail = _read_log(log_path)
    if dropped_tail:
        open_report.append("dropped partial trailing log entry (crash during append)")
        _atomic_write(
            log_path,
            b"".join(json.dumps(e, ensure_ascii=False).encode("utf-8") + b"\n" for e in entries),
        )

    if entries:
        state = replay_log(entries, config)
        last_seq = max(int(e.get("seq", 0)) for e in entries)
        store = ProjectStore(root, config, state, last_seq, open_report)
        repairs = _disk_issues(root, config, state)
        if repairs:
            open_report.extend(f"repaired from log: {issue}" for issue in repairs)
            for image_id in sorted(state.docs):
                store._write_annotation(image_id)
            for path in sorted((root / ANNOTATIONS_DIR).glob("*.json")):
                if path.stem not in state.docs:
                    path.unlink()
            store._write_prior_files()
        return store

    docs = _load_disk_docs(root, config)
    records_path = root / RECORDS_FILE
    records = parse_records(records_path.read_bytes()) if records_path.is_file() else {}
    rel_keys = {(image_id, rel.id) for image_id, doc in docs.items() for rel in doc.relationships}
    stale = set(records) - rel_keys
    missing = rel_keys - set(records)
    if stale or missing:
        if records:
            open_report.append(
                f"prior records rebuilt from geometry ({len(missing)} missing, {len(stale)} stale)"
            )
        records = {key: rec for key, rec in records.items() if key in rel_keys}
        for image_id, rel_id in sorted(missing):
            doc = docs[image_id]
            rel = doc.relationship_map()[rel_id]
            u, b = _pair_and_features(doc, rel.subject_ref, rel.object_ref, config)
            records[(image_id, rel_id)] = PriorRecord.make(u, b, rel.predicate)

    prior = recount([records[key] for key in sorted(records)])
    db_path = root / PRIOR_DB_FILE
    if db_path.is_file():
        stored = parse_prior_db(db_path.read_bytes())
        if stored != prior:
            open_report.append("PriorDbMismatch: stored prior db differed from recount; repaired")

    state = StoreState(docs, prior, records)
    store = ProjectStore(root, config, state, 0, open_report)
    # Seal adopted files into the log so replay-from-empty reproduces them.
    for image_id in sorted(docs):
        doc = docs[image_id]
        doc_records = [
            _record_to_obj(image_id, rel_id, records[(image_id, rel_id)])
            for (img, rel_id) in sorted(records)
            if img == image_id
        ]
        store._append_log(
            "import_image", image_id, {"document": _doc_to_obj(doc), "records": doc_records}
        )
    store._write_prior_files()
    for image_id in sorted(docs):
        store._write_annotation(image_id)
    return store


def verify_project(root: Path | str) -> List[str]:
    """Read-only consistency scan; never repairs anything."""
    root = Path(root)
    if not root.is_dir():
        return [f"MissingConfig: project directory {root} does not exist"]
    config_path = root / CONFIG_FILE
    if not config_path.is_file():
        return [f"MissingConfig: {CONFIG_FILE} not found"]
    try:
        config = load_config(config_path.read_bytes())
    except AnnotationToolError as exc:
        return [f"{exc.code}: {exc.message}"]

    issues: List[str] = []
    entries: List[Dict[str, Any]] = []
    try:
        entries, dropped_tail = _read_log(root / LOG_FILE)
        if dropped_tail:
            issues.append("PartialLogTail: trailing log entry is malformed")
    except AnnotationToolError as exc:
        issues.append(f"{exc.code}: {exc.message}")

    if entries:
        try:
            state = replay_log(entries, config)
        except AnnotationToolError as exc:
            return issues + [f"LogReplayFailed: {exc.code}: {exc.message}"]
        issues.extend(_disk_issues(root, config, state))
        return issues

    try:
        docs = _load_disk_docs(root, config)
    except AnnotationToolError as exc:
        return issues + [f"{exc.code}: {exc.message}"]
    records_path = root / RECORDS_FILE
    records = {}
    if records_path.is_file():
        try:
            records = parse_records(records_path.read_bytes())
        except AnnotationToolError as exc:
            return issues + [f"{exc.code}: {exc.message}"]
    rel_keys = {(image_id, rel.id) for image_id, doc in docs.items() for rel in doc.relationships}
    for missing_key in sorted(rel_keys - set(records)):
        issues.append(f"MissingPriorRecord: {missing_key[0]}/{missing_key[1]}")
    for orphan in sorted(set(records) - rel_keys):
        issues.append(f"OrphanPriorRecord: {orphan[0]}/{orphan[1]}")
    prior = recount([records[key] for key in sorted(records)])
    db_path = root / PRIOR_DB_FILE
    if not db_path.is_file():
        issues.append("MissingPriorDb: prior_db.tsv not found")
    else:
        try:
            stored = parse_prior_db(db_path.read_bytes())
        except AnnotationToolError as exc:
            return issues + [f"{exc.code}: {exc.message}"]
        if stored != prior:
            issues.append("PriorDbMismatch: prior db differs from recount of records")
    return issues
