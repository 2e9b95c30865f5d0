"""Shared builders: tiny bitmaps, random valid documents, synthetic datasets."""

from __future__ import annotations

import random
import struct
import zlib
from typing import Dict, List, Optional, Tuple

from sganno.model import (
    AnnotationDocument,
    AttributeValue,
    BBox,
    Cluster,
    Instance,
    ProjectConfig,
    Region,
    Relationship,
    validate,
)
from sganno.recommend import FEATURE_NAMES, PriorRecord


def tiny_png(width: int, height: int, shade: int = 0x80) -> bytes:
    """Minimal valid RGB PNG without external imaging dependencies."""

    def chunk(tag: bytes, data: bytes) -> bytes:
        body = struct.pack(">I", len(data)) + tag + data
        return body + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)

    ihdr = struct.pack(">IIBBBBB", width, height, 8, 2, 0, 0, 0)
    raw = b"".join(b"\x00" + bytes([shade]) * (3 * width) for _ in range(height))
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", zlib.compress(raw))
        + chunk(b"IEND", b"")
    )


def rand_bbox(rng: random.Random, width: int, height: int) -> BBox:
    x1 = rng.randrange(0, width - 1)
    y1 = rng.randrange(0, height - 1)
    x2 = rng.randrange(x1 + 1, width + 1)
    y2 = rng.randrange(y1 + 1, height + 1)
    return BBox(x1, y1, x2, y2)


def gen_document(
    rng: random.Random,
    config: ProjectConfig,
    image_id: str = "img",
    max_instances: int = 12,
    with_clusters: bool = True,
    with_regions: bool = True,
    with_extras: bool = False,
) -> AnnotationDocument:
    """Random valid document in canonical (id-sorted) order.

    Relationship endpoints are drawn so no instance-level edge can
    collide with a cluster expansion: instance edges stay among
    unclustered instances, cluster edges keep at least one cluster
    endpoint and otherwise touch only unclustered instances.
    """
    width, height = 400, 300
    doc = AnnotationDocument(image_id, width, height, f"{image_id}.png")
    attr_pairs = [
        AttributeValue(name, value) for name, values in config.attributes.items() for value in values
    ]

    n_instances = rng.randrange(0, max_instances + 1)
    for n in range(n_instances):
        extra = {f"note_{rng.randrange(3)}": rng.randrange(100)} if with_extras and rng.random() < 0.3 else {}
        doc.instances.append(
            Instance(
                id=f"i{n:02d}",
                category=rng.choice(config.object_categories),
                bbox=rand_bbox(rng, width, height),
                attributes=tuple(rng.sample(attr_pairs, rng.randrange(0, min(3, len(attr_pairs)) + 1))),
                mask_ref=f"masks/{image_id}_{n}.png" if rng.random() < 0.2 else None,
                extra=extra,
            )
        )

    free = [inst.id for inst in doc.instances]
    if with_clusters and len(free) >= 2:
        by_category: Dict[str, List[str]] = {}
        for inst in doc.instances:
            by_category.setdefault(inst.category, []).append(inst.id)
        n_cluster = 0
        for category, members in sorted(by_category.items()):
            if len(members) >= 2 and rng.random() < 0.6 and n_cluster < 3:
                take = rng.sample(members, rng.randrange(2, len(members) + 1))
                doc.clusters.append(Cluster(id=f"c{n_cluster:02d}", category=category, member_ids=tuple(take)))
                for member in take:
                    free.remove(member)
                n_cluster += 1

    if with_regions and rng.random() < 0.6:
        for n in range(rng.randrange(1, 3)):
            label = rng.choice([None, "focus", "crossing"])
            doc.regions.append(Region(id=f"g{n:02d}", bbox=rand_bbox(rng, width, height), label=label))

    cluster_ids = [cl.id for cl in doc.clusters]
    endpoints = free + cluster_ids
    triples = set()
    n_rel = 0
    for _ in range(rng.randrange(0, 10)):
        if len(endpoints) < 2:
            break
        sub, obj = rng.sample(endpoints, 2)
        if sub in cluster_ids or obj in cluster_ids or (sub in free and obj in free):
            predicate = rng.choice(config.predicates)
            if (sub, predicate, obj) in triples:
                continue
            triples.add((sub, predicate, obj))
            doc.relationships.append(
                Relationship(id=f"r{n_rel:02d}", subject_ref=sub, predicate=predicate, object_ref=obj)
            )
            n_rel += 1

    if with_extras and rng.random() < 0.3:
        doc.extra["session"] = rng.randrange(1000)
    if with_extras and rng.random() < 0.3:
        doc.image_extra["camera"] = "front"

    assert validate(doc, config) == [], "generator must produce valid documents"
    return doc


def gen_feature_vector(rng: random.Random, order=FEATURE_NAMES) -> Dict[str, int]:
    return {name: rng.randrange(2) for name in order}


def gen_prior_log(
    rng: random.Random,
    config: ProjectConfig,
    n: int,
    categories: Optional[List[str]] = None,
    predicates: Optional[List[str]] = None,
) -> List[PriorRecord]:
    categories = categories or config.object_categories[:6]
    predicates = predicates or config.predicates
    log = []
    for _ in range(n):
        u = (rng.choice(categories), rng.choice(categories))
        log.append(PriorRecord.make(u, gen_feature_vector(rng, config.feature_order), rng.choice(predicates)))
    return log


def traffic_shaped_documents(config: ProjectConfig) -> List[AnnotationDocument]:
    """1000 stub images with 25146 instances, 19291 of them in the graph,
    29191 relationships and full attribution."""
    width, height = 2048, 1024
    categories = ["car", "road", "person", "sidewalk", "building"]
    predicates = [p for p in config.predicates if p not in ("driving on",)]
    docs = []
    for img in range(1000):
        n = 26 if img < 146 else 25
        g = 20 if img < 291 else 19
        r = 30 if img < 191 else 29
        doc = AnnotationDocument(f"tg{img:04d}", width, height, f"tg{img:04d}.png")
        for idx in range(n):
            col, row = idx % 13, idx // 13
            doc.instances.append(
                Instance(
                    id=f"i{idx:02d}",
                    category=categories[idx % len(categories)],
                    bbox=BBox(col * 150, row * 300, col * 150 + 100, row * 300 + 200),
                    attributes=(AttributeValue("orientation", "forward"),),
                )
            )
        rel = 0
        for idx in range(g - 1):  # chain covers the g in-graph instances
            doc.relationships.append(
                Relationship(f"r{rel:02d}", f"i{idx:02d}", "driving on", f"i{idx + 1:02d}")
            )
            rel += 1
        extra = 0
        while rel < r:  # densify without touching new instances
            doc.relationships.append(
                Relationship(f"r{rel:02d}", "i00", predicates[extra], "i01")
            )
            rel += 1
            extra += 1
        docs.append(doc)
    return docs
