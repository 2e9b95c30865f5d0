import { describe, expect, it } from "vitest";

import { AnnotationApi, ApiError } from "../src/api.js";
import { AppController } from "../src/controller.js";
import type {
  AnnotationDoc,
  AttributeValue,
  BBox,
  Candidate,
  RelationshipEntry,
} from "../src/types.js";

/** In-memory service honoring the parts of the contract the client sees. */
class FakeApi implements AnnotationApi {
  doc: AnnotationDoc = {
    image: { image_id: "scene", width: 400, height: 300, file_name: "scene.png" },
    instances: [
      { id: "i1", category: "car", bbox: [10, 40, 60, 80], attributes: [] },
      { id: "i2", category: "road", bbox: [0, 60, 200, 100], attributes: [] },
      { id: "i3", category: "car", bbox: [70, 40, 120, 80], attributes: [] },
    ],
    clusters: [],
    regions: [],
    relationships: [],
  };
  annotatedPairs = new Set<string>();
  blockPairs = false;
  calls: string[] = [];
  private nextRel = 1;

  async getConfig() {
    return { object_categories: ["car", "road"], predicates: ["on", "driving on"], attributes: {} };
  }

  async listImages() {
    return [];
  }

  async getAnnotation(): Promise<AnnotationDoc> {
    this.calls.push("getAnnotation");
    return JSON.parse(JSON.stringify(this.doc));
  }

  async getSceneGraph() {
    return { image_id: "scene", nodes: [], edges: [] };
  }

  private categoryOf(ref: string): string {
    return this.doc.instances.find((entry) => entry.id === ref)?.category ?? "?";
  }

  async recommend(
    _imageId: string,
    subjectRef: string,
    objectRef: string,
    _k: number,
    overrideRegions = false,
  ) {
    this.calls.push(`recommend ${subjectRef}->${objectRef}${overrideRegions ? " override" : ""}`);
    if (this.blockPairs && !overrideRegions) {
      throw new ApiError("PairOutsideRegions", "pair shares no region", 409);
    }
    const pairKey = `${this.categoryOf(subjectRef)}|${this.categoryOf(objectRef)}`;
    const candidates: Candidate[] = this.annotatedPairs.has(pairKey)
      ? [{ predicate: "driving on", score: 3, source: "prior" }]
      : [{ predicate: "on", score: 1, source: "rule" }];
    return { subject_ref: subjectRef, object_ref: objectRef, recommendations: candidates };
  }

  async addRelationship(
    _imageId: string,
    subject: string,
    predicate: string,
    object: string,
    overrideRegions = false,
  ) {
    this.calls.push(`addRelationship ${subject}-${predicate}-${object}`);
    if (this.blockPairs && !overrideRegions) {
      throw new ApiError("PairOutsideRegions", "pair shares no region", 409);
    }
    const exists = this.doc.relationships.some(
      (rel) => rel.subject === subject && rel.predicate === predicate && rel.object === object,
    );
    if (exists) {
      throw new ApiError("DuplicateTriple", "triple already annotated", 409);
    }
    const entry: RelationshipEntry = { id: `r${this.nextRel++}`, subject, predicate, object };
    this.doc.relationships.push(entry);
    this.annotatedPairs.add(`${this.categoryOf(subject)}|${this.categoryOf(object)}`);
    return { id: entry.id };
  }

  async addRegion(_imageId: string, bbox: BBox) {
    this.calls.push("addRegion");
    this.doc.regions.push({ id: `g${this.doc.regions.length + 1}`, bbox });
    return { id: `g${this.doc.regions.length}` };
  }

  async makeCluster(_imageId: string, memberIds: string[]) {
    this.calls.push(`makeCluster ${memberIds.join(",")}`);
    this.doc.clusters.push({ id: "c1", category: "car", member_ids: [...memberIds] });
    return { id: "c1" };
  }

  async setAttributes(_imageId: string, instanceId: string, attributes: AttributeValue[]) {
    this.calls.push(`setAttributes ${instanceId}`);
    const instance = this.doc.instances.find((entry) => entry.id === instanceId);
    if (instance) {
      instance.attributes = attributes;
    }
    return { id: instanceId };
  }
}

async function loaded(): Promise<{ api: FakeApi; controller: AppController }> {
  const api = new FakeApi();
  const controller = new AppController(api);
  await controller.loadImage("scene");
  return { api, controller };
}

describe("select_pair", () => {
  it("second click issues the recommendation request", async () => {
    const { api, controller } = await loaded();
    await controller.clickEntity("i1");
    expect(controller.state.subject).toBe("i1");
    expect(controller.state.candidates).toBeNull();
    await controller.clickEntity("i2");
    expect(api.calls).toContain("recommend i1->i2");
    expect(controller.state.candidates?.[0]).toMatchObject({ predicate: "on", source: "rule" });
  });

  it("clicking the same entity twice shows an inline notice", async () => {
    const { api, controller } = await loaded();
    await controller.clickEntity("i1");
    await controller.clickEntity("i1");
    expect(controller.state.notice).toMatch(/subject equals object/);
    expect(api.calls.filter((call) => call.startsWith("recommend"))).toHaveLength(0);
  });

  it("server failure surfaces as a retryable notice", async () => {
    const { api, controller } = await loaded();
    api.recommend = async () => {
      throw new Error("fetch failed: connection refused");
    };
    await controller.clickEntity("i1");
    await controller.clickEntity("i2");
    expect(controller.state.notice).toMatch(/connection refused/);
    expect(controller.state.candidates).toBeNull();
  });
});

describe("accept_recommendation", () => {
  it("stores the edge, clears the panel, re-fetches the document", async () => {
    const { api, controller } = await loaded();
    await controller.clickEntity("i1");
    await controller.clickEntity("i2");
    await controller.acceptTop();
    expect(api.doc.relationships).toHaveLength(1);
    expect(controller.state.candidates).toBeNull();
    expect(controller.state.doc?.relationships).toHaveLength(1);
    expect(controller.state.graphVersion).toBeGreaterThan(1);
  });

  it("re-selecting an equivalent pair shows a prior-sourced candidate", async () => {
    const { controller } = await loaded();
    await controller.clickEntity("i1");
    await controller.clickEntity("i2");
    await controller.acceptTop();
    await controller.clickEntity("i3");
    await controller.clickEntity("i2");
    expect(controller.state.candidates?.[0]).toMatchObject({
      predicate: "driving on",
      source: "prior",
      score: 3,
    });
  });

  it("duplicate triple error is shown inline", async () => {
    const { controller } = await loaded();
    await controller.clickEntity("i1");
    await controller.clickEntity("i2");
    await controller.acceptTop();
    await controller.clickEntity("i1");
    await controller.clickEntity("i2");
    await controller.storePredicate("driving on");
    await controller.clickEntity("i1");
    await controller.clickEntity("i2");
    await controller.storePredicate("driving on");
    expect(controller.state.notice).toMatch(/DuplicateTriple/);
  });

  it("typed custom predicate is stored verbatim", async () => {
    const { api, controller } = await loaded();
    await controller.clickEntity("i1");
    await controller.clickEntity("i2");
    await controller.storePredicate("driving on");
    expect(api.doc.relationships[0].predicate).toBe("driving on");
  });
});

describe("region gate", () => {
  it("renders a warning with an override action that retries", async () => {
    const { api, controller } = await loaded();
    api.blockPairs = true;
    await controller.clickEntity("i1");
    await controller.clickEntity("i2");
    expect(controller.state.regionBlocked).toEqual({ subject: "i1", object: "i2" });
    expect(controller.state.notice).toMatch(/outside every region/);
    await controller.overrideRegions();
    expect(api.calls).toContain("recommend i1->i2 override");
    expect(controller.state.candidates).not.toBeNull();
  });
});

describe("auxiliary tools", () => {
  it("cluster draft commits through the API and resets the tool", async () => {
    const { api, controller } = await loaded();
    controller.setTool("form-cluster");
    await controller.clickEntity("i1");
    await controller.clickEntity("i3");
    expect(controller.state.clusterDraft).toEqual(["i1", "i3"]);
    await controller.commitCluster();
    expect(api.calls).toContain("makeCluster i1,i3");
    expect(controller.state.tool).toBe("select");
    expect(controller.state.doc?.clusters).toHaveLength(1);
  });

  it("region drag posts and re-fetches", async () => {
    const { api, controller } = await loaded();
    controller.setTool("draw-region");
    await controller.drawRegion([0, 0, 150, 120]);
    expect(api.calls).toContain("addRegion");
    expect(controller.state.doc?.regions).toHaveLength(1);
  });

  it("attribute change replaces the same-named attribute only", async () => {
    const { api, controller } = await loaded();
    api.doc.instances[0].attributes = [
      { attribute: "orientation", value: "forward" },
      { attribute: "state", value: "moving" },
    ];
    await controller.loadImage("scene");
    await controller.clickEntity("i1");
    await controller.setAttribute("i1", "orientation", "leftward");
    expect(api.doc.instances[0].attributes).toEqual([
      { attribute: "state", value: "moving" },
      { attribute: "orientation", value: "leftward" },
    ]);
  });

  it("mutations queue so only one is in flight", async () => {
    const { api, controller } = await loaded();
    let active = 0;
    let overlapped = false;
    const original = api.addRegion.bind(api);
    api.addRegion = async (imageId, bbox) => {
      active += 1;
      if (active > 1) {
        overlapped = true;
      }
      await new Promise((resolve) => setTimeout(resolve, 5));
      active -= 1;
      return original(imageId, bbox);
    };
    await Promise.all([
      controller.drawRegion([0, 0, 10, 10]),
      controller.drawRegion([20, 20, 40, 40]),
      controller.drawRegion([50, 50, 70, 70]),
    ]);
    expect(overlapped).toBe(false);
    expect(api.doc.regions).toHaveLength(3);
  });
});
