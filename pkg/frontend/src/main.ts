/** DOM bootstrap: wires the controller to the page. */

import { ApiClient } from "./api.js";
import { drawOverlays, DragRect } from "./canvas.js";
import { AppController } from "./controller.js";
import { computeLayout, drawGraph } from "./graph.js";
import { AppState, hitTest } from "./state.js";
import type { ProjectConfig, SceneGraph } from "./types.js";

const api = new ApiClient();
let config: ProjectConfig | null = null;
let bitmap: HTMLImageElement | null = null;
let drag: DragRect | null = null;
let graph: SceneGraph | null = null;
let renderedGraphVersion = -1;

const imageList = document.getElementById("image-list") as HTMLUListElement;
const canvas = document.getElementById("image-canvas") as HTMLCanvasElement;
const graphCanvas = document.getElementById("graph-canvas") as HTMLCanvasElement;
const panel = document.getElementById("candidates") as HTMLUListElement;
const noticeBox = document.getElementById("notice") as HTMLDivElement;
const pairLabel = document.getElementById("pair-label") as HTMLSpanElement;
const customInput = document.getElementById("custom-predicate") as HTMLInputElement;
const customList = document.getElementById("predicate-options") as HTMLDataListElement;
const overrideButton = document.getElementById("override-regions") as HTMLButtonElement;
const commitClusterButton = document.getElementById("commit-cluster") as HTMLButtonElement;
const attributePicker = document.getElementById("attribute-picker") as HTMLSelectElement;
const toolButtons = Array.from(document.querySelectorAll<HTMLButtonElement>("[data-tool]"));
const graphCounts = document.getElementById("graph-counts") as HTMLSpanElement;

const controller = new AppController(api, render);

function render(state: AppState): void {
  const ctx = canvas.getContext("2d");
  if (state.doc && ctx) {
    canvas.width = state.doc.image.width;
    canvas.height = state.doc.image.height;
    drawOverlays(ctx, state, bitmap, drag);
  }

  noticeBox.textContent = state.notice ?? "";
  noticeBox.style.display = state.notice ? "block" : "none";
  overrideButton.style.display = state.regionBlocked ? "inline-block" : "none";
  commitClusterButton.style.display = state.tool === "form-cluster" ? "inline-block" : "none";

  pairLabel.textContent =
    state.subject && state.object
      ? `${state.subject} -> ${state.object}`
      : state.subject
        ? `${state.subject} -> ?`
        : "click subject, then object";

  panel.replaceChildren(
    ...(state.candidates ?? []).map((candidate, index) => {
      const item = document.createElement("li");
      const badge = document.createElement("span");
      badge.className = `badge ${candidate.source}`;
      badge.textContent = candidate.source;
      const button = document.createElement("button");
      button.textContent = `${index + 1}. ${candidate.predicate} (${candidate.score})`;
      button.addEventListener("click", () => void controller.acceptCandidate(candidate));
      item.append(button, badge);
      return item;
    }),
  );

  for (const button of toolButtons) {
    button.classList.toggle("active", button.dataset.tool === state.tool);
  }

  if (state.graphVersion !== renderedGraphVersion && state.imageId) {
    renderedGraphVersion = state.graphVersion;
    void refreshGraph(state.imageId);
  }
}

async function refreshGraph(imageId: string): Promise<void> {
  graph = await api.getSceneGraph(imageId);
  graphCounts.textContent = `${graph.nodes.length} nodes, ${graph.edges.length} edges`;
  const ctx = graphCanvas.getContext("2d");
  if (ctx) {
    drawGraph(ctx, computeLayout(graph, graphCanvas.width, graphCanvas.height), graphCanvas.width, graphCanvas.height);
  }
}

function canvasPoint(event: MouseEvent): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  return {
    x: Math.round(((event.clientX - rect.left) / rect.width) * canvas.width),
    y: Math.round(((event.clientY - rect.top) / rect.height) * canvas.height),
  };
}

canvas.addEventListener("mousedown", (event) => {
  if (controller.state.tool === "draw-region") {
    const { x, y } = canvasPoint(event);
    drag = { x1: x, y1: y, x2: x, y2: y };
  }
});

canvas.addEventListener("mousemove", (event) => {
  if (drag) {
    const { x, y } = canvasPoint(event);
    drag.x2 = x;
    drag.y2 = y;
    render(controller.state);
  }
});

canvas.addEventListener("mouseup", (event) => {
  if (drag) {
    const { x, y } = canvasPoint(event);
    const bbox: [number, number, number, number] = [
      Math.min(drag.x1, x),
      Math.min(drag.y1, y),
      Math.max(drag.x1, x),
      Math.max(drag.y1, y),
    ];
    drag = null;
    if (bbox[2] - bbox[0] > 2 && bbox[3] - bbox[1] > 2) {
      void controller.drawRegion(bbox);
    } else {
      render(controller.state);
    }
    return;
  }
  const { x, y } = canvasPoint(event);
  const doc = controller.state.doc;
  if (doc) {
    const ref = hitTest(doc, x, y);
    if (ref) {
      void controller.clickEntity(ref);
    }
  }
});

customInput.addEventListener("keydown", (event) => {
  if (event.key === "Enter" && customInput.value.trim()) {
    void controller.storePredicate(customInput.value.trim());
    customInput.value = "";
  }
});

overrideButton.addEventListener("click", () => void controller.overrideRegions());
commitClusterButton.addEventListener("click", () => void controller.commitCluster());

attributePicker.addEventListener("change", () => {
  const [attribute, value] = attributePicker.value.split("=", 2);
  const target = controller.state.subject;
  if (target && attribute && value) {
    void controller.setAttribute(target, attribute, value);
  }
  attributePicker.selectedIndex = 0;
});

for (const button of toolButtons) {
  button.addEventListener("click", () => controller.setTool(button.dataset.tool as AppState["tool"]));
}

document.addEventListener("keydown", (event) => {
  if (event.target instanceof HTMLInputElement) {
    return;
  }
  if (event.key === "Enter") {
    void controller.acceptTop();
  } else if (event.key >= "1" && event.key <= "9") {
    const candidate = controller.state.candidates?.[Number(event.key) - 1];
    if (candidate) {
      void controller.acceptCandidate(candidate);
    }
  } else if (event.key === "Escape") {
    controller.setTool("select");
    void controller.loadImage(controller.state.imageId ?? "");
  } else if (event.key === "s") {
    controller.setTool("select");
  } else if (event.key === "r") {
    controller.setTool("draw-region");
  } else if (event.key === "c") {
    controller.setTool("form-cluster");
  }
});

async function selectImage(imageId: string): Promise<void> {
  bitmap = null;
  await controller.loadImage(imageId);
  const image = new Image();
  image.onload = () => {
    bitmap = image;
    render(controller.state);
  };
  image.src = api.bitmapUrl(imageId);
  for (const item of Array.from(imageList.children)) {
    item.classList.toggle("active", (item as HTMLElement).dataset.imageId === imageId);
  }
}

async function boot(): Promise<void> {
  config = await api.getConfig();
  customList.replaceChildren(
    ...config.predicates.map((predicate) => {
      const option = document.createElement("option");
      option.value = predicate;
      return option;
    }),
  );
  attributePicker.replaceChildren(
    new Option("set attribute on subject...", ""),
    ...Object.entries(config.attributes).flatMap(([name, values]) =>
      values.map((value) => new Option(`${name}=${value}`, `${name}=${value}`)),
    ),
  );
  const images = await api.listImages();
  imageList.replaceChildren(
    ...images.map((image) => {
      const item = document.createElement("li");
      item.dataset.imageId = image.image_id;
      item.textContent = `${image.image_id} (${image.relationships} rel)`;
      item.addEventListener("click", () => void selectImage(image.image_id));
      return item;
    }),
  );
  if (images.length) {
    await selectImage(images[0].image_id);
  }
}

void boot();
