/** Deterministic scene-graph layout and drawing.
 *
 * Nodes sit on a circle in id order (a fixed "layout seed"), so the
 * same document always renders the same picture and screenshots are
 * comparable.
 */

import { categoryColor } from "./state.js";
import type { SceneGraph } from "./types.js";

export interface NodePlacement {
  id: string;
  x: number;
  y: number;
  label: string;
  isCluster: boolean;
  color: string;
}

export interface EdgePlacement {
  id: string;
  from: string;
  to: string;
  label: string;
}

export interface GraphLayout {
  nodes: NodePlacement[];
  edges: EdgePlacement[];
}

export function computeLayout(graph: SceneGraph, width: number, height: number): GraphLayout {
  const sorted = [...graph.nodes].sort((a, b) => (a.id < b.id ? -1 : a.id > b.id ? 1 : 0));
  const cx = width / 2;
  const cy = height / 2;
  const radius = Math.max(10, Math.min(width, height) / 2 - 40);
  const nodes = sorted.map((node, index) => {
    const angle = (2 * Math.PI * index) / Math.max(1, sorted.length) - Math.PI / 2;
    return {
      id: node.id,
      x: sorted.length === 1 ? cx : cx + radius * Math.cos(angle),
      y: sorted.length === 1 ? cy : cy + radius * Math.sin(angle),
      label: node.kind === "cluster" ? `${node.category} ×${node.member_ids?.length ?? 0}` : node.category,
      isCluster: node.kind === "cluster",
      color: categoryColor(node.category),
    };
  });
  const edges = [...graph.edges]
    .sort((a, b) => (a.id < b.id ? -1 : a.id > b.id ? 1 : 0))
    .map((edge) => ({ id: edge.id, from: edge.subject, to: edge.object, label: edge.predicate }));
  return { nodes, edges };
}

const NODE_RADIUS = 16;

export function drawGraph(ctx: CanvasRenderingContext2D, layout: GraphLayout, width: number, height: number): void {
  ctx.clearRect(0, 0, width, height);
  const position = new Map(layout.nodes.map((node) => [node.id, node]));

  ctx.font = "11px sans-serif";
  for (const edge of layout.edges) {
    const from = position.get(edge.from);
    const to = position.get(edge.to);
    if (!from || !to) {
      continue;
    }
    const dx = to.x - from.x;
    const dy = to.y - from.y;
    const length = Math.hypot(dx, dy) || 1;
    const ux = dx / length;
    const uy = dy / length;
    const startX = from.x + ux * NODE_RADIUS;
    const startY = from.y + uy * NODE_RADIUS;
    const endX = to.x - ux * NODE_RADIUS;
    const endY = to.y - uy * NODE_RADIUS;

    ctx.strokeStyle = "#666";
    ctx.beginPath();
    ctx.moveTo(startX, startY);
    ctx.lineTo(endX, endY);
    ctx.stroke();

    ctx.fillStyle = "#666";
    ctx.beginPath();
    ctx.moveTo(endX, endY);
    ctx.lineTo(endX - ux * 8 - uy * 4, endY - uy * 8 + ux * 4);
    ctx.lineTo(endX - ux * 8 + uy * 4, endY - uy * 8 - ux * 4);
    ctx.closePath();
    ctx.fill();

    ctx.fillStyle = "#333";
    ctx.fillText(edge.label, (startX + endX) / 2 + 4, (startY + endY) / 2 - 4);
  }

  for (const node of layout.nodes) {
    ctx.fillStyle = node.color;
    ctx.beginPath();
    ctx.arc(node.x, node.y, NODE_RADIUS, 0, 2 * Math.PI);
    ctx.fill();
    if (node.isCluster) {
      ctx.strokeStyle = "#222";
      ctx.setLineDash([4, 3]);
      ctx.beginPath();
      ctx.arc(node.x, node.y, NODE_RADIUS + 4, 0, 2 * Math.PI);
      ctx.stroke();
      ctx.setLineDash([]);
    }
    ctx.fillStyle = "#111";
    ctx.textAlign = "center";
    ctx.fillText(node.label, node.x, node.y + NODE_RADIUS + 12);
    ctx.textAlign = "left";
  }
}
