"""Regenerate src/sganno/default_config.json in canonical form."""

from pathlib import Path

from sganno.formats import load_config, save_config
from sganno.model import HierarchyNode, ProjectConfig, Rule
from sganno.recommend import FEATURE_NAMES

OBJECT_GROUPS = {
    "void": ["unlabeled", "ego vehicle", "rectification border", "out of roi", "static", "dynamic", "ground"],
    "flat": ["road", "sidewalk", "parking", "rail track"],
    "construction": ["building", "wall", "fence", "guard rail", "bridge", "tunnel"],
    "roadside object": ["pole", "polegroup", "traffic light", "traffic sign"],
    "environment": ["vegetation", "terrain", "sky"],
    "human": ["person", "rider"],
    "vehicle": ["car", "truck", "bus", "caravan", "trailer", "train", "motorcycle", "bicycle"],
}

PREDICATE_GROUPS = {
    "spatial": [
        "In front of", "In back of", "in left of", "in right of", "above", "below",
        "under", "behind", "beside", "near", "next to", "between", "against",
        "along", "inside", "outside", "at", "around", "facing", "opposite",
    ],
    "area": [
        "on", "driving on", "Parking on", "Walking on", "standing on", "sitting on",
        "lying on", "riding on", "stopped on", "waiting on", "crossing", "entering",
        "exiting", "turning into", "merging into", "covering", "covered by",
        "part of", "attached to", "mounted on", "hanging on", "growing on", "painted on",
    ],
    "interaction": [
        "following", "overtaking", "approaching", "leaving", "carrying",
        "watching", "pushing", "riding",
    ],
}

RULES = [
    Rule({"contact": True, "subject_above": True}, "on", 1),
    Rule({"contact": True, "subject_inside": True}, "inside", 2),
    Rule({"contact": False, "subject_left": True}, "in left of", 3),
    Rule({"contact": False, "subject_left": False}, "in right of", 4),
    Rule({"contact": True, "subject_above": False}, "next to", 5),
    Rule({"subject_inside": True, "subject_smaller": True}, "part of", 6),
]


def forest(groups):
    return [HierarchyNode(name, [HierarchyNode(leaf) for leaf in leaves]) for name, leaves in groups.items()]


def main():
    categories = [c for leaves in OBJECT_GROUPS.values() for c in leaves]
    predicates = [p for leaves in PREDICATE_GROUPS.values() for p in leaves]
    assert len(categories) == len(set(categories)) == 34, len(categories)
    assert len(predicates) == len(set(predicates)) == 51, len(predicates)

    config = ProjectConfig(
        object_categories=categories,
        predicates=predicates,
        object_hierarchy=forest(OBJECT_GROUPS),
        predicate_hierarchy=forest(PREDICATE_GROUPS),
        attributes={"orientation": ["forward", "leftward", "rightward", "backward"]},
        feature_order=list(FEATURE_NAMES),
        rules=RULES,
        eq1_domain="present",
    )
    data = save_config(config)
    reloaded = load_config(data)
    assert save_config(reloaded) == data, "canonical form must be a fixed point"

    out = Path(__file__).resolve().parents[1] / "src" / "sganno" / "default_config.json"
    out.write_bytes(data)
    print(f"wrote {out} ({len(data)} bytes, {len(categories)} categories, {len(predicates)} predicates)")


if __name__ == "__main__":
    main()
