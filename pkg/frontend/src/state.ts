/** Client state and the pure helpers the views share.
 *
 * Overlays and panels derive entirely from the last fetched document;
 * no annotation state lives only in the client.
 */

import type { AnnotationDoc, BBox, Candidate } from "./types.js";

export type Tool = "select" | "draw-region" | "form-cluster";

export interface PendingPair {
  subject: string;
  object: string;
}

export interface AppState {
  imageId: string | null;
  doc: AnnotationDoc | null;
  graphVersion: number; // bumped on every committed mutation
  tool: Tool;
  subject: string | null;
  object: string | null;
  clusterDraft: string[];
  candidates: Candidate[] | null;
  pendingPair: PendingPair | null;
  regionBlocked: PendingPair | null; // pair awaiting an explicit override
  notice: string | null;
  loading: boolean;
}

export function initialState(): AppState {
  return {
    imageId: null,
    doc: null,
    graphVersion: 0,
    tool: "select",
    subject: null,
    object: null,
    clusterDraft: [],
    candidates: null,
    pendingPair: null,
    regionBlocked: null,
    notice: null,
    loading: false,
  };
}

export function clearSelection(state: AppState): void {
  state.subject = null;
  state.object = null;
  state.candidates = null;
  state.pendingPair = null;
  state.regionBlocked = null;
  state.notice = null;
}

export function bboxArea(bbox: BBox): number {
  return (bbox[2] - bbox[0]) * (bbox[3] - bbox[1]);
}

export function bboxContains(bbox: BBox, x: number, y: number): boolean {
  return x >= bbox[0] && x <= bbox[2] && y >= bbox[1] && y <= bbox[3];
}

export function unionBBox(boxes: BBox[]): BBox {
  let [x1, y1, x2, y2] = boxes[0];
  for (const [a, b, c, d] of boxes.slice(1)) {
    x1 = Math.min(x1, a);
    y1 = Math.min(y1, b);
    x2 = Math.max(x2, c);
    y2 = Math.max(y2, d);
  }
  return [x1, y1, x2, y2];
}

export function clusterOf(doc: AnnotationDoc, instanceId: string): string | null {
  for (const cluster of doc.clusters) {
    if (cluster.member_ids.includes(instanceId)) {
      return cluster.id;
    }
  }
  return null;
}

export function entityBBox(doc: AnnotationDoc, ref: string): BBox | null {
  const instance = doc.instances.find((entry) => entry.id === ref);
  if (instance) {
    return instance.bbox;
  }
  const cluster = doc.clusters.find((entry) => entry.id === ref);
  if (!cluster) {
    return null;
  }
  const boxes = cluster.member_ids
    .map((member) => doc.instances.find((entry) => entry.id === member)?.bbox)
    .filter((bbox): bbox is BBox => bbox !== undefined);
  return boxes.length ? unionBBox(boxes) : null;
}

/**
 * Annotatable entity under a click: the smallest unclustered instance
 * box containing the point, else the cluster of a clustered instance
 * containing it. Instances hidden inside clusters select the cluster,
 * matching how relationships address them.
 */
export function hitTest(doc: AnnotationDoc, x: number, y: number): string | null {
  let bestFree: { id: string; area: number } | null = null;
  let bestClustered: { id: string; area: number } | null = null;
  for (const instance of doc.instances) {
    if (!bboxContains(instance.bbox, x, y)) {
      continue;
    }
    const area = bboxArea(instance.bbox);
    const owner = clusterOf(doc, instance.id);
    if (owner === null) {
      if (!bestFree || area < bestFree.area) {
        bestFree = { id: instance.id, area };
      }
    } else if (!bestClustered || area < bestClustered.area) {
      bestClustered = { id: owner, area };
    }
  }
  if (bestFree && bestClustered) {
    return bestFree.area <= bestClustered.area ? bestFree.id : bestClustered.id;
  }
  return bestFree?.id ?? bestClustered?.id ?? null;
}

/** Stable category color so overlays stay consistent across renders. */
export function categoryColor(category: string): string {
  let hash = 0;
  for (const ch of category) {
    hash = (hash * 31 + ch.charCodeAt(0)) >>> 0;
  }
  const hue = hash % 360;
  return `hsl(${hue}, 70%, 45%)`;
}
