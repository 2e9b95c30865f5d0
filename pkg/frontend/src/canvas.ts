/** Image-canvas overlays: boxes, selection, regions, cluster marks.
 *
 * Everything drawn here derives from the last fetched document plus
 * the current selection; the red subject / blue object convention
 * marks the pair being described.
 */

import { AppState, categoryColor, entityBBox } from "./state.js";
import type { BBox } from "./types.js";

export const SUBJECT_COLOR = "#e2342b";
export const OBJECT_COLOR = "#2b6de2";
export const REGION_COLOR = "#e2c32b";

export interface DragRect {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

function strokeBox(ctx: CanvasRenderingContext2D, bbox: BBox, color: string, width = 2): void {
  ctx.strokeStyle = color;
  ctx.lineWidth = width;
  ctx.strokeRect(bbox[0], bbox[1], bbox[2] - bbox[0], bbox[3] - bbox[1]);
}

function fillBox(ctx: CanvasRenderingContext2D, bbox: BBox, color: string, alpha: number): void {
  ctx.save();
  ctx.globalAlpha = alpha;
  ctx.fillStyle = color;
  ctx.fillRect(bbox[0], bbox[1], bbox[2] - bbox[0], bbox[3] - bbox[1]);
  ctx.restore();
}

export function drawOverlays(
  ctx: CanvasRenderingContext2D,
  state: AppState,
  image: CanvasImageSource | null,
  drag: DragRect | null,
): void {
  const doc = state.doc;
  if (!doc) {
    return;
  }
  const { width, height } = doc.image;
  ctx.clearRect(0, 0, width, height);
  if (image) {
    ctx.drawImage(image, 0, 0, width, height);
  } else {
    ctx.fillStyle = "#ddd";
    ctx.fillRect(0, 0, width, height);
  }

  for (const region of doc.regions) {
    strokeBox(ctx, region.bbox, REGION_COLOR, 3);
    if (region.label) {
      ctx.fillStyle = REGION_COLOR;
      ctx.font = "12px sans-serif";
      ctx.fillText(region.label, region.bbox[0] + 4, region.bbox[1] + 14);
    }
  }

  for (const instance of doc.instances) {
    strokeBox(ctx, instance.bbox, categoryColor(instance.category));
    ctx.fillStyle = categoryColor(instance.category);
    ctx.font = "11px sans-serif";
    ctx.fillText(instance.category, instance.bbox[0] + 2, instance.bbox[3] - 4);
  }

  for (const cluster of doc.clusters) {
    const bbox = entityBBox(doc, cluster.id);
    if (bbox) {
      ctx.setLineDash([6, 4]);
      strokeBox(ctx, bbox, categoryColor(cluster.category), 2);
      ctx.setLineDash([]);
      ctx.fillStyle = categoryColor(cluster.category);
      ctx.font = "bold 12px sans-serif";
      ctx.fillText(`cluster ${cluster.id}`, bbox[0] + 2, bbox[1] - 4);
    }
  }

  for (const member of state.clusterDraft) {
    const bbox = entityBBox(doc, member);
    if (bbox) {
      strokeBox(ctx, bbox, "#13a04b", 3);
    }
  }

  if (state.subject) {
    const bbox = entityBBox(doc, state.subject);
    if (bbox) {
      fillBox(ctx, bbox, SUBJECT_COLOR, 0.25);
      strokeBox(ctx, bbox, SUBJECT_COLOR, 3);
    }
  }
  if (state.object) {
    const bbox = entityBBox(doc, state.object);
    if (bbox) {
      fillBox(ctx, bbox, OBJECT_COLOR, 0.25);
      strokeBox(ctx, bbox, OBJECT_COLOR, 3);
    }
  }

  if (drag) {
    ctx.setLineDash([4, 4]);
    strokeBox(
      ctx,
      [
        Math.min(drag.x1, drag.x2),
        Math.min(drag.y1, drag.y2),
        Math.max(drag.x1, drag.x2),
        Math.max(drag.y1, drag.y2),
      ],
      state.tool === "draw-region" ? REGION_COLOR : "#13a04b",
      2,
    );
    ctx.setLineDash([]);
  }
}
