/** Drives the annotate loop against the service.
 *
 * The server is the single source of truth: every committed mutation
 * re-fetches the document before rendering, and mutations are queued
 * client-side so at most one is in flight (the service serializes
 * writers; the queue keeps this client honest about ordering).
 */

import { AnnotationApi, ApiError } from "./api.js";
import { AppState, PendingPair, clearSelection, clusterOf, initialState } from "./state.js";
import type { BBox, Candidate } from "./types.js";

const TOP_K = 5;

export class AppController {
  readonly state: AppState = initialState();
  private queue: Promise<unknown> = Promise.resolve();

  constructor(
    private readonly api: AnnotationApi,
    private readonly render: (state: AppState) => void = () => {},
  ) {}

  /** Serialize mutations; rejections surface as inline notices. */
  private enqueue<T>(op: () => Promise<T>): Promise<T> {
    const next = this.queue.then(op);
    this.queue = next.catch(() => {});
    return next;
  }

  private paint(): void {
    this.render(this.state);
  }

  private notice(message: string | null): void {
    this.state.notice = message;
    this.paint();
  }

  async loadImage(imageId: string): Promise<void> {
    this.state.loading = true;
    this.paint();
    try {
      const doc = await this.api.getAnnotation(imageId);
      this.state.imageId = imageId;
      this.state.doc = doc;
      clearSelection(this.state);
      this.state.clusterDraft = [];
      this.state.graphVersion += 1;
    } finally {
      this.state.loading = false;
    }
    this.paint();
  }

  private async refetch(): Promise<void> {
    if (!this.state.imageId) {
      return;
    }
    this.state.doc = await this.api.getAnnotation(this.state.imageId);
    this.state.graphVersion += 1;
    this.paint();
  }

  setTool(tool: AppState["tool"]): void {
    this.state.tool = tool;
    if (tool !== "form-cluster") {
      this.state.clusterDraft = [];
    }
    this.paint();
  }

  /** Subject first, object second; the second click fires /recommend. */
  async clickEntity(ref: string): Promise<void> {
    const state = this.state;
    if (!state.doc || !state.imageId) {
      return;
    }
    if (state.tool === "form-cluster") {
      this.toggleClusterMember(ref);
      return;
    }
    if (state.subject === null || state.object !== null) {
      clearSelection(state);
      state.subject = ref;
      this.paint();
      return;
    }
    if (ref === state.subject) {
      this.notice("subject equals object: pick a different entity");
      return;
    }
    state.object = ref;
    await this.requestRecommendations({ subject: state.subject, object: ref }, false);
  }

  private async requestRecommendations(pair: PendingPair, override: boolean): Promise<void> {
    const state = this.state;
    state.loading = true;
    state.candidates = null;
    state.notice = null;
    this.paint();
    try {
      const response = await this.api.recommend(
        state.imageId!,
        pair.subject,
        pair.object,
        TOP_K,
        override,
      );
      state.candidates = response.recommendations;
      state.pendingPair = pair;
      state.regionBlocked = null;
      if (!response.recommendations.length) {
        state.notice = "no candidates: type a predicate below";
      }
    } catch (error) {
      if (error instanceof ApiError && error.code === "PairOutsideRegions") {
        state.regionBlocked = pair;
        state.notice = "pair lies outside every region";
      } else {
        state.notice = describe(error);
      }
    } finally {
      state.loading = false;
    }
    this.paint();
  }

  /** Re-issue the blocked request with the explicit override flag. */
  async overrideRegions(): Promise<void> {
    if (this.state.regionBlocked) {
      await this.requestRecommendations(this.state.regionBlocked, true);
    }
  }

  async acceptCandidate(candidate: Candidate): Promise<void> {
    await this.storePredicate(candidate.predicate);
  }

  async acceptTop(): Promise<void> {
    const top = this.state.candidates?.[0];
    if (top) {
      await this.storePredicate(top.predicate);
    }
  }

  /** Store a predicate (picked or typed) for the selected pair. */
  async storePredicate(predicate: string): Promise<void> {
    const state = this.state;
    const pair = state.pendingPair ?? state.regionBlocked;
    if (!pair || !state.imageId) {
      this.notice("select a subject and an object first");
      return;
    }
    const override = state.regionBlocked !== null;
    try {
      await this.enqueue(() =>
        this.api.addRelationship(state.imageId!, pair.subject, predicate, pair.object, override),
      );
      clearSelection(state);
      await this.refetch();
    } catch (error) {
      this.notice(describe(error));
    }
  }

  private toggleClusterMember(ref: string): void {
    const state = this.state;
    if (!state.doc || clusterOf(state.doc, ref)) {
      this.notice("already clustered");
      return;
    }
    if (!state.doc.instances.some((instance) => instance.id === ref)) {
      this.notice("clusters group instances");
      return;
    }
    const index = state.clusterDraft.indexOf(ref);
    if (index >= 0) {
      state.clusterDraft.splice(index, 1);
    } else {
      state.clusterDraft.push(ref);
    }
    this.paint();
  }

  async commitCluster(): Promise<void> {
    const state = this.state;
    if (state.clusterDraft.length < 2 || !state.imageId) {
      this.notice("pick at least two instances");
      return;
    }
    try {
      await this.enqueue(() => this.api.makeCluster(state.imageId!, [...state.clusterDraft]));
      state.clusterDraft = [];
      state.tool = "select";
      await this.refetch();
    } catch (error) {
      this.notice(describe(error));
    }
  }

  async drawRegion(bbox: BBox): Promise<void> {
    if (!this.state.imageId) {
      return;
    }
    try {
      await this.enqueue(() => this.api.addRegion(this.state.imageId!, bbox));
      this.state.tool = "select";
      await this.refetch();
    } catch (error) {
      this.notice(describe(error));
    }
  }

  async setAttribute(instanceId: string, attribute: string, value: string): Promise<void> {
    const state = this.state;
    if (!state.doc || !state.imageId) {
      return;
    }
    const instance = state.doc.instances.find((entry) => entry.id === instanceId);
    if (!instance) {
      this.notice("attributes apply to instances");
      return;
    }
    const kept = instance.attributes.filter((entry) => entry.attribute !== attribute);
    try {
      await this.enqueue(() =>
        this.api.setAttributes(state.imageId!, instanceId, [...kept, { attribute, value }]),
      );
      await this.refetch();
    } catch (error) {
      this.notice(describe(error));
    }
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiError) {
    return `${error.code}: ${error.message}`;
  }
  return error instanceof Error ? error.message : String(error);
}
