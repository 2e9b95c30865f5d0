"""Dataset density and coverage metrics plus triple-frequency reports.

Counts follow the usual scene-graph bookkeeping: an instance is "in the
scene graph" when it touches at least one relationship after cluster
expansion, relationship totals are post-expansion, and the average
degree divides twice the edge count by the instances in the graph (each
edge contributes to two endpoints).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .model import AnnotationDocument, ProjectConfig, expand_clusters, instances_in_scene_graph


def round_half_up(value: float, places: int = 2) -> float:
    """Display rounding; repr-based so 2.675 -> 2.68, not banker's 2.67."""
    return float(Decimal(repr(value)).quantize(Decimal(10) ** -places, rounding=ROUND_HALF_UP))


@dataclass
class DatasetMetrics:
    """Raw counts plus full-precision ratios; ratios are None when the
    dataset is empty and they would divide by zero."""

    images: int
    object_categories: int
    total_instances: int
    instances_in_graph: int
    pct_in_graph: Optional[float]
    instances_in_graph_per_image: Optional[float]
    relationship_categories: int
    total_relationships: int
    relationships_per_image: Optional[float]
    relationships_per_instance_in_graph: Optional[float]
    attribute_categories: int
    instances_with_attribute: int
    attribute_coverage: Optional[float]

    def to_json_obj(self, rounded: bool = False) -> Dict[str, Any]:
        out: Dict[str, Any] = {}
        for name, value in self.__dict__.items():
            if rounded and isinstance(value, float):
                out[name] = round_half_up(value)
            else:
                out[name] = value
        return out


def average_degree(total_relationships: int, instances_in_graph: int) -> Optional[float]:
    """Relationships per instance in the scene graph: 2E / V."""
    if instances_in_graph == 0:
        return None
    return 2 * total_relationships / instances_in_graph


def compute_metrics(docs: Sequence[AnnotationDocument], config: ProjectConfig) -> DatasetMetrics:
    """Aggregate the comparison-table metrics over a document list.

    Category counts come from the config (the configured vocabulary,
    not the categories observed); attribute_categories counts distinct
    attribute values across the vocabulary.
    """
    images = len(docs)
    total_instances = 0
    in_graph = 0
    total_relationships = 0
    with_attribute = 0
    for doc in docs:
        total_instances += len(doc.instances)
        in_graph += len(instances_in_scene_graph(doc))
        total_relationships += len(expand_clusters(doc).relationships)
        with_attribute += sum(1 for inst in doc.instances if inst.attributes)

    pct_in_graph = 100 * in_graph / total_instances if total_instances else None
    coverage = 100 * with_attribute / total_instances if total_instances else None
    return DatasetMetrics(
        images=images,
        object_categories=len(config.object_categories),
        total_instances=total_instances,
        instances_in_graph=in_graph,
        pct_in_graph=pct_in_graph,
        instances_in_graph_per_image=in_graph / images if images else None,
        relationship_categories=len(config.predicates),
        total_relationships=total_relationships,
        relationships_per_image=total_relationships / images if images else None,
        relationships_per_instance_in_graph=average_degree(total_relationships, in_graph),
        attribute_categories=sum(len(values) for values in config.attributes.values()),
        instances_with_attribute=with_attribute,
        attribute_coverage=coverage,
    )


@dataclass
class TripleFrequency:
    """Category-level triple counts, most frequent first."""

    entries: List[Tuple[Tuple[str, str, str], int]]

    @property
    def total(self) -> int:
        return sum(count for _, count in self.entries)

    def top(self, n: int) -> List[Tuple[Tuple[str, str, str], int]]:
        return self.entries[:n]

    def to_json_obj(self) -> List[Dict[str, Any]]:
        return [
            {"subject": s, "predicate": p, "object": o, "count": count}
            for (s, p, o), count in self.entries
        ]


def triple_frequencies(docs: Sequence[AnnotationDocument]) -> TripleFrequency:
    """Count cluster-expanded relationships keyed by endpoint categories."""
    counter: Counter = Counter()
    for doc in docs:
        expanded = expand_clusters(doc)
        categories = {inst.id: inst.category for inst in expanded.instances}
        for rel in expanded.relationships:
            counter[(categories[rel.subject_ref], rel.predicate, categories[rel.object_ref])] += 1
    entries = sorted(counter.items(), key=lambda item: (-item[1], item[0]))
    return TripleFrequency(entries)


def metrics_table(metrics: DatasetMetrics) -> str:
    """Human-readable two-column table with display-rounded ratios."""
    rows = []
    for name, value in metrics.to_json_obj(rounded=True).items():
        shown = "n/a" if value is None else (f"{value:.2f}" if isinstance(value, float) else str(value))
        rows.append((name, shown))
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name.ljust(width)}  {shown}" for name, shown in rows)
