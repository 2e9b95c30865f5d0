/** Thin typed client over the annotation service HTTP API. */

import type {
  AnnotationDoc,
  AttributeValue,
  BBox,
  ImageSummary,
  ProjectConfig,
  RecommendResponse,
  SceneGraph,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  try {
    const body = await response.json();
    return new ApiError(body.error.code, body.error.message, response.status);
  } catch {
    return new ApiError("HttpError", response.statusText, response.status);
  }
}

/** The surface the controller needs; fakes implement it in tests. */
export interface AnnotationApi {
  getConfig(): Promise<ProjectConfig>;
  listImages(): Promise<ImageSummary[]>;
  getAnnotation(imageId: string): Promise<AnnotationDoc>;
  getSceneGraph(imageId: string): Promise<SceneGraph>;
  recommend(
    imageId: string,
    subjectRef: string,
    objectRef: string,
    k: number,
    overrideRegions?: boolean,
  ): Promise<RecommendResponse>;
  addRelationship(
    imageId: string,
    subject: string,
    predicate: string,
    object: string,
    overrideRegions?: boolean,
  ): Promise<{ id: string }>;
  addRegion(imageId: string, bbox: BBox, label?: string): Promise<{ id: string }>;
  makeCluster(imageId: string, memberIds: string[]): Promise<{ id: string }>;
  setAttributes(
    imageId: string,
    instanceId: string,
    attributes: AttributeValue[],
  ): Promise<{ id: string }>;
}

export class ApiClient implements AnnotationApi {
  constructor(private readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.base + path, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  getConfig(): Promise<ProjectConfig> {
    return this.request("/api/config");
  }

  async listImages(): Promise<ImageSummary[]> {
    const body = await this.request<{ images: ImageSummary[] }>("/api/images");
    return body.images;
  }

  getAnnotation(imageId: string): Promise<AnnotationDoc> {
    return this.request(`/api/images/${encodeURIComponent(imageId)}/annotation`);
  }

  getSceneGraph(imageId: string): Promise<SceneGraph> {
    return this.request(`/api/images/${encodeURIComponent(imageId)}/scenegraph`);
  }

  bitmapUrl(imageId: string): string {
    return `${this.base}/api/images/${encodeURIComponent(imageId)}/bitmap`;
  }

  recommend(
    imageId: string,
    subjectRef: string,
    objectRef: string,
    k: number,
    overrideRegions = false,
  ): Promise<RecommendResponse> {
    return this.request(`/api/images/${encodeURIComponent(imageId)}/recommend`, {
      method: "POST",
      body: JSON.stringify({
        subject_ref: subjectRef,
        object_ref: objectRef,
        k,
        override_regions: overrideRegions,
      }),
    });
  }

  addRelationship(
    imageId: string,
    subject: string,
    predicate: string,
    object: string,
    overrideRegions = false,
  ): Promise<{ id: string }> {
    return this.request(`/api/images/${encodeURIComponent(imageId)}/relationships`, {
      method: "POST",
      body: JSON.stringify({ subject, predicate, object, override_regions: overrideRegions }),
    });
  }

  deleteRelationship(imageId: string, relId: string): Promise<{ deleted: string }> {
    return this.request(
      `/api/images/${encodeURIComponent(imageId)}/relationships/${encodeURIComponent(relId)}`,
      { method: "DELETE" },
    );
  }

  addRegion(imageId: string, bbox: BBox, label?: string): Promise<{ id: string }> {
    return this.request(`/api/images/${encodeURIComponent(imageId)}/regions`, {
      method: "POST",
      body: JSON.stringify(label === undefined ? { bbox } : { bbox, label }),
    });
  }

  makeCluster(imageId: string, memberIds: string[]): Promise<{ id: string }> {
    return this.request(`/api/images/${encodeURIComponent(imageId)}/clusters`, {
      method: "POST",
      body: JSON.stringify({ member_ids: memberIds }),
    });
  }

  setAttributes(
    imageId: string,
    instanceId: string,
    attributes: AttributeValue[],
  ): Promise<{ id: string }> {
    return this.request(
      `/api/images/${encodeURIComponent(imageId)}/instances/${encodeURIComponent(instanceId)}/attributes`,
      { method: "PUT", body: JSON.stringify({ attributes }) },
    );
  }
}
