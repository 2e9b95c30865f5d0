"""HTTP API over a project store.

All bodies are UTF-8 JSON; every error response carries a stable
machine-readable code under ``error.code``. Mutations funnel through
the store's serialized queue, so concurrent clients observe one total
order; reads serve consistent snapshots.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, List, Optional

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .errors import (
    AnnotationToolError,
    DuplicateId,
    DuplicateImageId,
    DuplicateTriple,
    MemberAlreadyClustered,
    PairOutsideRegions,
    StorageFailure,
    UnknownEntity,
    UnknownImage,
)
from .formats import load_per_image, save_config, save_per_image
from .stats import compute_metrics, triple_frequencies
from .store import ProjectStore

_STATUS = {
    UnknownImage: 404,
    UnknownEntity: 404,
    DuplicateId: 409,
    DuplicateTriple: 409,
    DuplicateImageId: 409,
    MemberAlreadyClustered: 409,
    PairOutsideRegions: 409,
    StorageFailure: 500,
}

_MEDIA_TYPES = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg", ".bmp": "image/bmp"}


class RecommendRequest(BaseModel):
    subject_ref: str
    object_ref: str
    k: int = Field(default=5, ge=1)
    override_regions: bool = False


class RelationshipRequest(BaseModel):
    subject: str
    predicate: str
    object: str
    id: Optional[str] = None
    override_regions: bool = False


class AttributeItem(BaseModel):
    attribute: str
    value: str


class InstanceRequest(BaseModel):
    category: str
    bbox: List[int] = Field(min_length=4, max_length=4)
    id: Optional[str] = None
    attributes: List[AttributeItem] = Field(default_factory=list)
    mask_ref: Optional[str] = None


class RegionRequest(BaseModel):
    bbox: List[int] = Field(min_length=4, max_length=4)
    id: Optional[str] = None
    label: Optional[str] = None


class ClusterRequest(BaseModel):
    member_ids: List[str] = Field(min_length=1)
    id: Optional[str] = None


class AttributesRequest(BaseModel):
    attributes: List[AttributeItem]


class ExportRequest(BaseModel):
    format: str = "merged"
    split: Dict[str, str] = Field(default_factory=dict)


def _error_response(status: int, code: str, message: str, details: Dict[str, Any]) -> JSONResponse:
    safe_details = {k: v for k, v in details.items() if isinstance(v, (str, int, float, bool, type(None)))}
    return JSONResponse(
        status_code=status,
        content={"error": {"code": code, "message": message, "details": safe_details}},
    )


def create_app(store: ProjectStore, ui_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="scene graph annotation service", docs_url=None, redoc_url=None)

    @app.exception_handler(AnnotationToolError)
    async def _tool_error(request: Request, exc: AnnotationToolError) -> JSONResponse:
        return _error_response(_STATUS.get(type(exc), 400), exc.code, exc.message, exc.details)

    @app.exception_handler(RequestValidationError)
    async def _schema_error(request: Request, exc: RequestValidationError) -> JSONResponse:
        first = exc.errors()[0] if exc.errors() else {}
        path = ".".join(str(part) for part in first.get("loc", ()))
        return _error_response(400, "SchemaError", first.get("msg", "invalid request"), {"path": path})

    @app.get("/api/config")
    def get_config() -> Response:
        return Response(content=save_config(store.config), media_type="application/json")

    @app.get("/api/images")
    def list_images() -> Dict[str, Any]:
        return {"images": store.list_images()}

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str) -> Dict[str, Any]:
        doc = store.document(image_id)
        return {
            "image_id": doc.image_id,
            "width": doc.width,
            "height": doc.height,
            "file_name": doc.file_name,
            "annotated": image_id in store.state.docs,
            "instances": len(doc.instances),
            "clusters": len(doc.clusters),
            "regions": len(doc.regions),
            "relationships": len(doc.relationships),
        }

    @app.get("/api/images/{image_id}/bitmap")
    def get_bitmap(image_id: str) -> FileResponse:
        path = store.bitmap_path(image_id)
        if path is None:
            raise UnknownImage(f"no bitmap for image {image_id!r}", image_id=image_id)
        return FileResponse(path, media_type=_MEDIA_TYPES.get(path.suffix.lower(), "application/octet-stream"))

    @app.get("/api/images/{image_id}/annotation")
    def get_annotation(image_id: str) -> Response:
        return Response(content=save_per_image(store.document(image_id)), media_type="application/json")

    @app.put("/api/images/{image_id}/annotation")
    async def put_annotation(image_id: str, request: Request) -> Dict[str, Any]:
        body = await request.body()
        doc = load_per_image(body, store.config)
        if doc.image_id != image_id:
            raise UnknownImage(
                f"body is for image {doc.image_id!r}, path names {image_id!r}", image_id=image_id
            )
        store.put_document(doc)
        return {"image_id": image_id}

    @app.post("/api/images/{image_id}/recommend")
    def recommend_pair(image_id: str, body: RecommendRequest) -> Dict[str, Any]:
        recs = store.recommend_pair(
            image_id, body.subject_ref, body.object_ref, body.k, body.override_regions
        )
        return {
            "subject_ref": body.subject_ref,
            "object_ref": body.object_ref,
            "recommendations": [
                {"predicate": r.predicate, "score": r.score, "source": r.source} for r in recs
            ],
        }

    @app.post("/api/images/{image_id}/relationships")
    def add_relationship(image_id: str, body: RelationshipRequest) -> Dict[str, Any]:
        rel_id = store.annotate(
            image_id,
            body.subject,
            body.predicate,
            body.object,
            rel_id=body.id,
            override_regions=body.override_regions,
        )
        return {"id": rel_id}

    @app.delete("/api/images/{image_id}/relationships/{rel_id}")
    def delete_relationship(image_id: str, rel_id: str) -> Dict[str, Any]:
        store.delete_relationship(image_id, rel_id)
        return {"deleted": rel_id}

    @app.post("/api/images/{image_id}/instances")
    def add_instance(image_id: str, body: InstanceRequest) -> Dict[str, Any]:
        payload = body.model_dump(exclude_none=True)
        payload.setdefault("attributes", [])
        return {"id": store.add_instance(image_id, payload)}

    @app.put("/api/images/{image_id}/instances/{instance_id}")
    def update_instance(image_id: str, instance_id: str, body: InstanceRequest) -> Dict[str, Any]:
        payload = body.model_dump(exclude_none=True)
        payload["id"] = instance_id
        payload.setdefault("attributes", [])
        return {"id": store.update_instance(image_id, payload)}

    @app.delete("/api/images/{image_id}/instances/{instance_id}")
    def delete_instance(image_id: str, instance_id: str) -> Dict[str, Any]:
        removed = store.delete_instance(image_id, instance_id)
        return {"deleted": instance_id, "removed_relationships": removed}

    @app.put("/api/images/{image_id}/instances/{instance_id}/attributes")
    def set_attributes(image_id: str, instance_id: str, body: AttributesRequest) -> Dict[str, Any]:
        store.set_attributes(image_id, instance_id, [a.model_dump() for a in body.attributes])
        return {"id": instance_id}

    @app.post("/api/images/{image_id}/regions")
    def add_region(image_id: str, body: RegionRequest) -> Dict[str, Any]:
        return {"id": store.add_region(image_id, body.model_dump(exclude_none=True))}

    @app.delete("/api/images/{image_id}/regions/{region_id}")
    def delete_region(image_id: str, region_id: str) -> Dict[str, Any]:
        store.delete_region(image_id, region_id)
        return {"deleted": region_id}

    @app.post("/api/images/{image_id}/clusters")
    def make_cluster(image_id: str, body: ClusterRequest) -> Dict[str, Any]:
        return {"id": store.make_cluster(image_id, body.member_ids, body.id)}

    @app.delete("/api/images/{image_id}/clusters/{cluster_id}")
    def delete_cluster(image_id: str, cluster_id: str) -> Dict[str, Any]:
        removed = store.delete_cluster(image_id, cluster_id)
        return {"deleted": cluster_id, "removed_relationships": removed}

    @app.get("/api/images/{image_id}/scenegraph")
    def get_scenegraph(image_id: str) -> Dict[str, Any]:
        return store.scenegraph(image_id)

    @app.get("/api/stats")
    def get_stats() -> Dict[str, Any]:
        state = store.state
        docs = [state.docs[image_id] for image_id in sorted(state.docs)]
        metrics = compute_metrics(docs, store.config)
        return {
            "metrics": metrics.to_json_obj(),
            "metrics_rounded": metrics.to_json_obj(rounded=True),
            "top_triples": triple_frequencies(docs).to_json_obj()[:10],
        }

    @app.get("/api/priordb")
    def get_priordb() -> Dict[str, Any]:
        return store.prior_snapshot()

    @app.post("/api/export")
    def export(body: ExportRequest) -> Dict[str, Any]:
        path, report = store.export(body.format, body.split or None)
        return {"path": str(path), "report": report.to_json_obj()}

    @app.get("/api/verify")
    def verify() -> Dict[str, Any]:
        issues = store.verify()
        return {"clean": not issues, "issues": issues}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
