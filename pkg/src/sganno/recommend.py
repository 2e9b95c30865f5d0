"""Predicate recommendation for entity pairs.

Candidates are ranked by a count-product score over an incrementally
updated prior database: for a pair of categories u with current binary
geometric features b, a predicate i scores sum over active features of
n(u,b) * n(b,i), where n(u,b) counts how often pairs keyed u showed
feature b in past annotations and n(b,i) counts how often feature b
co-occurred with predicate i. When every predicate scores zero (cold
start), a configured table of geometric rules supplies the guesses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

from .errors import EmptyLog, UnderflowWouldOccur
from .model import BBox, ProjectConfig

# Canonical feature order; configs may reorder or take a subset.
FEATURE_NAMES: Tuple[str, ...] = (
    "contact",
    "subject_left",
    "subject_above",
    "subject_smaller",
    "subject_larger",
    "subject_inside",
    "object_inside",
)

# (subject category, object category), ordered
PairKey = Tuple[str, str]

# feature name -> 0/1, iteration order = configured feature order
FeatureVector = Dict[str, int]


def extract_features(
    subject_bbox: BBox,
    object_bbox: BBox,
    feature_order: Sequence[str] = FEATURE_NAMES,
) -> FeatureVector:
    """Binary geometric descriptors of an ordered box pair.

    Contact uses closed boxes (shared edges/corners count); positional
    features compare centers strictly; the size features fire below
    half and above double the object area; containment is non-strict,
    so identical boxes contain each other.
    """
    sub_cx, sub_cy = subject_bbox.center
    obj_cx, obj_cy = object_bbox.center
    values = {
        "contact": int(subject_bbox.touches(object_bbox)),
        "subject_left": int(sub_cx < obj_cx),
        "subject_above": int(sub_cy < obj_cy),
        "subject_smaller": int(2 * subject_bbox.area < object_bbox.area),
        "subject_larger": int(subject_bbox.area > 2 * object_bbox.area),
        "subject_inside": int(object_bbox.contains(subject_bbox)),
        "object_inside": int(subject_bbox.contains(object_bbox)),
    }
    return {name: values[name] for name in feature_order}


@dataclass
class PriorDatabase:
    """Co-occurrence counts accumulated from accepted annotations."""

    count_ub: Dict[Tuple[str, str, str], int] = field(default_factory=dict)
    count_bi: Dict[Tuple[str, str], int] = field(default_factory=dict)
    total_annotations: int = 0

    def get_ub(self, u: PairKey, feature: str) -> int:
        return self.count_ub.get((u[0], u[1], feature), 0)

    def get_bi(self, feature: str, predicate: str) -> int:
        return self.count_bi.get((feature, predicate), 0)

    def copy(self) -> "PriorDatabase":
        return PriorDatabase(dict(self.count_ub), dict(self.count_bi), self.total_annotations)


def empty_database() -> PriorDatabase:
    return PriorDatabase()


@dataclass(frozen=True)
class Recommendation:
    """One ranked candidate; ``score`` is a count product for prior
    candidates and the rule priority for rule candidates."""

    predicate: str
    score: int
    source: str  # "prior" | "rule"


@dataclass(frozen=True)
class PriorRecord:
    """One annotation event as fed to the prior database."""

    subject_category: str
    object_category: str
    features: Tuple[Tuple[str, int], ...]
    predicate: str

    @staticmethod
    def make(
        u: PairKey, features: Dict[str, int] | Sequence[Tuple[str, int]], predicate: str
    ) -> "PriorRecord":
        items = features.items() if isinstance(features, dict) else features
        return PriorRecord(u[0], u[1], tuple(items), predicate)

    @property
    def pair(self) -> PairKey:
        return (self.subject_category, self.object_category)

    def feature_dict(self) -> Dict[str, int]:
        return dict(self.features)


def score(
    db: PriorDatabase,
    u: PairKey,
    b_now: FeatureVector,
    predicate: str,
    eq1_domain: str = "present",
) -> int:
    """Count-product interest of predicate for the pair's current features.

    ``present`` sums over features active in ``b_now``; ``all`` ignores
    the live vector and sums over the whole configured feature set.
    """
    total = 0
    for feature, value in b_now.items():
        if eq1_domain == "present" and not value:
            continue
        total += db.get_ub(u, feature) * db.get_bi(feature, predicate)
    return total


def match_rule(rule, b_now: FeatureVector) -> bool:
    """A rule fires when every condition literal holds in ``b_now``."""
    return all(bool(b_now.get(feature, 0)) == required for feature, required in rule.conditions.items())


def recommend(
    db: PriorDatabase,
    config: ProjectConfig,
    u: PairKey,
    b_now: FeatureVector,
    k: int,
) -> List[Recommendation]:
    """Top-k candidates: prior scores when any are positive, else rules.

    Prior candidates sort by score descending with lexicographic
    predicate tie-break; rule candidates follow ascending priority.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = [
        (score(db, u, b_now, predicate, config.eq1_domain), predicate)
        for predicate in config.predicates
    ]
    if any(s > 0 for s, _ in scored):
        scored.sort(key=lambda pair: (-pair[0], pair[1]))
        return [Recommendation(predicate, s, "prior") for s, predicate in scored[:k]]
    out: List[Recommendation] = []
    suggested = set()
    for rule in sorted(config.rules, key=lambda r: r.priority):
        if len(out) == k:
            break
        if rule.predicate not in suggested and match_rule(rule, b_now):
            suggested.add(rule.predicate)
            out.append(Recommendation(rule.predicate, rule.priority, "rule"))
    return out


def update_prior(db: PriorDatabase, u: PairKey, b_now: FeatureVector, chosen: str) -> PriorDatabase:
    """Record one accepted annotation; returns a new database."""
    new = db.copy()
    for feature, value in b_now.items():
        if value:
            ub = (u[0], u[1], feature)
            bi = (feature, chosen)
            new.count_ub[ub] = new.count_ub.get(ub, 0) + 1
            new.count_bi[bi] = new.count_bi.get(bi, 0) + 1
    new.total_annotations += 1
    return new


def remove_prior(db: PriorDatabase, u: PairKey, b_now: FeatureVector, chosen: str) -> PriorDatabase:
    """Exact inverse of :func:`update_prior`.

    Raises :class:`UnderflowWouldOccur` (before touching anything) when
    the record was never added; zeroed cells are dropped so the result
    matches a fresh recount cell-for-cell.
    """
    active = [feature for feature, value in b_now.items() if value]
    if db.total_annotations < 1:
        raise UnderflowWouldOccur("no annotations recorded")
    for feature in active:
        if db.get_ub(u, feature) < 1 or db.get_bi(feature, chosen) < 1:
            raise UnderflowWouldOccur(
                f"annotation ({u[0]!r}, {u[1]!r}, {chosen!r}) not present for feature {feature!r}"
            )
    new = db.copy()
    for feature in active:
        ub = (u[0], u[1], feature)
        bi = (feature, chosen)
        new.count_ub[ub] -= 1
        if new.count_ub[ub] == 0:
            del new.count_ub[ub]
        new.count_bi[bi] -= 1
        if new.count_bi[bi] == 0:
            del new.count_bi[bi]
    new.total_annotations -= 1
    return new


def recount(records: Iterable[PriorRecord]) -> PriorDatabase:
    """Batch rebuild: fold every record into a fresh database."""
    db = PriorDatabase()
    for record in records:
        for feature, value in record.features:
            if value:
                ub = (record.subject_category, record.object_category, feature)
                bi = (feature, record.predicate)
                db.count_ub[ub] = db.count_ub.get(ub, 0) + 1
                db.count_bi[bi] = db.count_bi.get(bi, 0) + 1
        db.total_annotations += 1
    return db


def evaluate_replay(config: ProjectConfig, log: Sequence[PriorRecord], k: int) -> float:
    """Hit rate of the recommender replayed over an annotation log.

    Starts from an empty database; each entry is first queried (hit when
    the chosen predicate appears in the top-k) and then folded in.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not log:
        raise EmptyLog("replay log has no entries")
    db = PriorDatabase()
    hits = 0
    for record in log:
        b_now = record.feature_dict()
        candidates = recommend(db, config, record.pair, b_now, k)
        if any(c.predicate == record.predicate for c in candidates):
            hits += 1
        db = update_prior(db, record.pair, b_now, record.predicate)
    return hits / len(log)
