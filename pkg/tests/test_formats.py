"""File formats: parsing, canonical serialization, conversion, reports."""

import dataclasses
import json
import random
from pathlib import Path

import jsonschema
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sganno import model
from sganno.errors import (
    DuplicateImageId,
    IndexRangeError,
    ParseError,
    SchemaError,
    UnknownSplitLabel,
    ValidationError,
)
from sganno.formats import (
    default_config,
    export_merged,
    import_merged,
    load_config,
    load_merged,
    load_per_image,
    save_config,
    save_merged,
    save_per_image,
)

from genutil import gen_document

FIXTURES = Path(__file__).parent / "fixtures"
SCHEMAS = Path(__file__).parents[1] / "src" / "sganno" / "schemas"


def schema(name):
    return json.loads((SCHEMAS / name).read_text())


def strip_regions(doc):
    return dataclasses.replace(doc, regions=[])


class TestPerImage:
    def test_minimal_file_is_empty_document(self, config):
        doc = load_per_image(FIXTURES.joinpath("minimal.json").read_bytes(), config)
        assert (doc.instances, doc.clusters, doc.regions, doc.relationships) == ([], [], [], [])
        assert model.validate(doc, config) == []

    def test_dangling_reference_is_validation_error(self, config):
        obj = json.loads(FIXTURES.joinpath("perimage_town_a.json").read_text())
        obj["relationships"][0]["object"] = "i9"
        with pytest.raises(ValidationError) as err:
            load_per_image(json.dumps(obj).encode(), config)
        assert any(v.code == "DanglingEndpoint" for v in err.value.details["violations"])

    def test_full_fixture_counts(self, config):
        doc = load_per_image(FIXTURES.joinpath("scene_full.json").read_bytes(), config)
        assert len(doc.instances) == 3
        assert len(doc.clusters) == 1
        assert len(doc.relationships) == 2
        assert len(doc.regions) == 1

    def test_golden_fixture_bytes_are_canonical(self, config):
        data = FIXTURES.joinpath("scene_full.json").read_bytes()
        assert save_per_image(load_per_image(data, config)) == data

    def test_non_canonical_input_becomes_canonical_same_document(self, config):
        data = FIXTURES.joinpath("scene_full.json").read_bytes()
        obj = json.loads(data)
        scrambled = {key: obj[key] for key in reversed(list(obj))}
        scrambled["instances"] = list(reversed(scrambled["instances"]))
        reparsed = load_per_image(json.dumps(scrambled, indent=4).encode(), config)
        assert save_per_image(reparsed) == data
        assert reparsed == load_per_image(data, config)

    def test_unknown_keys_survive_round_trip(self, config):
        obj = json.loads(FIXTURES.joinpath("perimage_town_a.json").read_text())
        obj["reviewed_by"] = "annotator-7"
        obj["image"]["camera"] = "front"
        obj["instances"][0]["confidence"] = 0.75
        doc = load_per_image(json.dumps(obj).encode(), config)
        assert doc.extra == {"reviewed_by": "annotator-7"}
        assert doc.image_extra == {"camera": "front"}
        reparsed = load_per_image(save_per_image(doc), config)
        assert reparsed == doc

    def test_parse_error_carries_offset(self, config):
        with pytest.raises(ParseError) as err:
            load_per_image(b'{"image": ', config)
        assert isinstance(err.value.details["offset"], int)

    def test_schema_error_carries_path(self, config):
        broken = json.loads(FIXTURES.joinpath("minimal.json").read_text())
        del broken["image"]["width"]
        with pytest.raises(SchemaError) as err:
            load_per_image(json.dumps(broken).encode(), config)
        assert err.value.details["path"] == "image.width"

    def test_bool_is_not_an_integer(self, config):
        broken = json.loads(FIXTURES.joinpath("minimal.json").read_text())
        broken["image"]["width"] = True
        with pytest.raises(SchemaError):
            load_per_image(json.dumps(broken).encode(), config)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 10**9))
def test_per_image_round_trip_on_generated_documents(seed, config):
    doc = gen_document(random.Random(seed), config, with_extras=True)
    assert load_per_image(save_per_image(doc), config) == doc


class TestConfigFormat:
    def test_shipped_default(self):
        config = default_config()
        assert len(config.object_categories) == 34
        assert "unlabeled" in config.object_categories
        assert len(config.predicates) == 51
        assert config.attributes["orientation"] == ["forward", "leftward", "rightward", "backward"]
        assert config.eq1_domain == "present"
        assert config.rules and config.rules[0].priority == 1

    def test_named_traffic_predicates_present(self):
        predicates = set(default_config().predicates)
        for needed in ("Walking on", "In front of", "In back of", "driving on", "Parking on", "in left of", "on"):
            assert needed in predicates

    def test_duplicate_category_rejected(self):
        obj = json.loads(save_config(default_config()))
        obj["object_categories"].append(obj["object_categories"][0])
        del obj["object_hierarchy"]
        with pytest.raises(SchemaError):
            load_config(json.dumps(obj).encode())

    def test_save_load_identity(self):
        data = save_config(default_config())
        assert save_config(load_config(data)) == data

    def test_hierarchy_must_cover_flat_list(self):
        obj = json.loads(save_config(default_config()))
        obj["object_hierarchy"] = [{"name": "vehicle", "children": [{"name": "car"}]}]
        with pytest.raises(SchemaError) as err:
            load_config(json.dumps(obj).encode())
        assert "missing" in err.value.message

    def test_hierarchy_names_unique(self):
        obj = {
            "object_categories": ["car"],
            "object_hierarchy": [{"name": "car"}, {"name": "car"}],
            "predicates": ["on"],
        }
        with pytest.raises(SchemaError):
            load_config(json.dumps(obj).encode())

    def test_rule_on_unknown_feature_rejected(self):
        obj = {
            "object_categories": ["car"],
            "predicates": ["on"],
            "rules": [{"conditions": {"hovering": True}, "predicate": "on", "priority": 1}],
        }
        with pytest.raises(SchemaError):
            load_config(json.dumps(obj).encode())

    def test_missing_hierarchies_default_to_leaf_forest(self):
        obj = {"object_categories": ["car", "road"], "predicates": ["on"]}
        config = load_config(json.dumps(obj).encode())
        assert [node.name for node in config.object_hierarchy] == ["car", "road"]
        assert not any(node.children for node in config.object_hierarchy)


class TestExportMerged:
    def one_doc(self, config):
        doc = model.empty_document("img1", 400, 300, "img1.png")
        doc = model.add_instance(doc, model.Instance("i1", "car", model.BBox(10, 10, 60, 50)), config)
        doc = model.add_instance(doc, model.Instance("i2", "road", model.BBox(0, 40, 400, 300)), config)
        return model.add_relationship(
            doc, model.Relationship("r1", "i1", "driving on", "i2"), config
        )

    def test_single_document_layout(self, config):
        merged, report = export_merged([self.one_doc(config)], config)
        assert len(merged["boxes"]) == 2
        assert len(merged["relationships"]) == 1
        assert merged["img_to_first_box"] == [0] and merged["img_to_last_box"] == [1]
        assert merged["img_to_first_rel"] == [0] and merged["img_to_last_rel"] == [0]
        assert report.lossless

    def test_cluster_doc_exports_expanded(self, config):
        doc = model.empty_document("img1", 400, 300, "img1.png")
        doc = model.add_instance(doc, model.Instance("i1", "car", model.BBox(10, 10, 60, 50)), config)
        doc = model.add_instance(doc, model.Instance("i2", "car", model.BBox(70, 10, 120, 50)), config)
        doc = model.add_instance(doc, model.Instance("i3", "road", model.BBox(0, 40, 400, 300)), config)
        doc = model.make_cluster(doc, ["i1", "i2"], "c1", config)
        doc = model.add_relationship(doc, model.Relationship("r1", "c1", "driving on", "i3"), config)
        merged, report = export_merged([doc], config)
        assert len(merged["relationships"]) == 2
        assert not report.lossless
        kinds = {entry.kind for entry in report.entries}
        assert kinds == {"expanded_cluster", "expanded_relationship"}

    def test_empty_dataset(self, config):
        merged, report = export_merged([], config)
        assert merged["boxes"] == [] and merged["images"] == []
        assert report.lossless
        load_merged(save_merged(merged))  # structurally valid

    def test_duplicate_image_id(self, config):
        doc = self.one_doc(config)
        with pytest.raises(DuplicateImageId):
            export_merged([doc, doc], config)

    def test_unknown_split_label(self, config):
        with pytest.raises(UnknownSplitLabel):
            export_merged([self.one_doc(config)], config, {"img1": "holdout"})

    def test_regions_dropped_and_reported(self, config):
        doc = self.one_doc(config)
        doc = model.add_region(doc, model.Region("g1", model.BBox(0, 0, 400, 300)), config)
        merged, report = export_merged([doc], config)
        assert [e.kind for e in report.entries] == ["dropped_region"]
        docs, _ = import_merged(merged, config)
        assert docs[0].regions == []

    def test_label_indices_are_one_based_sorted(self, config):
        merged, _ = export_merged([], config)
        names = sorted(config.object_categories)
        assert merged["idx_to_label"]["1"] == names[0]
        assert "0" not in merged["idx_to_label"]
        assert merged["label_to_idx"][names[-1]] == len(names)

    def test_export_order_insensitive(self, config):
        data = FIXTURES.joinpath("merged_two_images.json").read_bytes()
        merged = load_merged(data)
        docs, _ = import_merged(merged, config)
        forward, _ = export_merged(docs, config, {"town_a": "train", "town_b": "test"})
        backward, _ = export_merged(list(reversed(docs)), config, {"town_a": "train", "town_b": "test"})
        assert save_merged(forward) == save_merged(backward) == data


class TestImportMerged:
    def test_two_image_fixture(self, config):
        merged = load_merged(FIXTURES.joinpath("merged_two_images.json").read_bytes())
        docs, report = import_merged(merged, config)
        assert [d.image_id for d in docs] == ["town_a", "town_b"]
        assert [len(d.instances) for d in docs] == [2, 3]
        assert [len(d.relationships) for d in docs] == [1, 2]
        assert report.lossless

    def test_round_trip_identity_on_representable_subset(self, config):
        merged = load_merged(FIXTURES.joinpath("merged_two_images.json").read_bytes())
        docs, _ = import_merged(merged, config)
        again, _ = export_merged(docs, config, {"town_a": "train", "town_b": "test"})
        assert save_merged(again) == FIXTURES.joinpath("merged_two_images.json").read_bytes()
        assert [save_per_image(d) for d in docs] == [
            FIXTURES.joinpath("perimage_town_a.json").read_bytes(),
            FIXTURES.joinpath("perimage_town_b.json").read_bytes(),
        ]

    def test_relationship_outside_image_range(self, config):
        merged = load_merged(FIXTURES.joinpath("merged_two_images.json").read_bytes())
        merged["relationships"][0] = [0, 3, merged["relationships"][0][2]]  # box 3 is town_b's
        with pytest.raises(IndexRangeError):
            import_merged(merged, config)

    def test_broken_partition_detected(self, config):
        merged = load_merged(FIXTURES.joinpath("merged_two_images.json").read_bytes())
        merged["img_to_first_box"][1] = 3
        with pytest.raises(IndexRangeError):
            import_merged(merged, config)

    def test_unresolved_label(self, config):
        merged = load_merged(FIXTURES.joinpath("merged_two_images.json").read_bytes())
        merged["labels"][0] = 999
        with pytest.raises(Exception) as err:
            import_merged(merged, config)
        assert err.value.code == "UnresolvedLabel"


class TestLossyPathAccounting:
    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10**9))
    def test_import_of_export_equals_expansion_minus_regions(self, seed, config):
        rng = random.Random(seed)
        docs = [gen_document(rng, config, image_id=f"img{n}") for n in range(3)]
        merged, report = export_merged(docs, config)
        imported, _ = import_merged(merged, config)
        expected = [strip_regions(model.expand_clusters(d)) for d in sorted(docs, key=lambda d: d.image_id)]
        assert [save_per_image(d) for d in imported] == [save_per_image(d) for d in expected]
        lossless_inputs = all(
            not d.clusters and not d.regions and not d.extra and not d.image_extra
            and all(not e.extra for e in d.instances + d.relationships)
            for d in docs
        )
        assert report.lossless == lossless_inputs


class TestPublishedSchemas:
    def test_per_image_fixtures_validate(self):
        validator = jsonschema.Draft202012Validator(schema("per_image.schema.json"))
        for name in ("minimal.json", "scene_full.json", "perimage_town_a.json", "perimage_town_b.json"):
            validator.validate(json.loads(FIXTURES.joinpath(name).read_text()))

    def test_merged_fixture_validates(self):
        validator = jsonschema.Draft202012Validator(schema("merged.schema.json"))
        validator.validate(json.loads(FIXTURES.joinpath("merged_two_images.json").read_text()))

    def test_default_config_validates(self):
        validator = jsonschema.Draft202012Validator(schema("config.schema.json"))
        validator.validate(json.loads(save_config(default_config())))

    def test_generated_documents_validate(self, config):
        validator = jsonschema.Draft202012Validator(schema("per_image.schema.json"))
        for seed in range(10):
            doc = gen_document(random.Random(seed), config)
            validator.validate(json.loads(save_per_image(doc)))
