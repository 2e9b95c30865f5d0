import pytest

from sganno.formats import default_config
from sganno.model import (
    AnnotationDocument,
    AttributeValue,
    BBox,
    Instance,
    ProjectConfig,
    Relationship,
)

from genutil import tiny_png


@pytest.fixture(scope="session")
def config() -> ProjectConfig:
    return default_config()


@pytest.fixture
def doc(config) -> AnnotationDocument:
    """Small hand-built document: two cars on a road, one person."""
    out = AnnotationDocument("scene1", 400, 300, "scene1.png")
    out.instances = [
        Instance("i1", "car", BBox(10, 100, 90, 160), (AttributeValue("orientation", "forward"),)),
        Instance("i2", "car", BBox(100, 100, 180, 160)),
        Instance("i3", "road", BBox(0, 120, 400, 300)),
        Instance("i4", "person", BBox(200, 80, 230, 170)),
    ]
    out.relationships = [
        Relationship("r1", "i1", "driving on", "i3"),
        Relationship("r2", "i2", "Parking on", "i3"),
    ]
    return out


@pytest.fixture
def project(tmp_path, config):
    """Fresh project directory with one 200x100 bitmap named scene1."""
    from sganno.store import ProjectStore

    store = ProjectStore.create(tmp_path / "proj", config)
    (tmp_path / "proj" / "images" / "scene1.png").write_bytes(tiny_png(200, 100))
    yield store
    store.close()
