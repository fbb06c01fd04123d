import { ApiError, Box, Label, StudyClient } from "./api.js";
import { boxFromDrag } from "./boxes.js";
import { SessionController, SessionState, progressText } from "./session.js";
import { Point, View, fitView, imageToScreen, panBy, zoomAt } from "./transform.js";

// Same-origin by default; override with ?api=http://host:port when the
// static files are served separately from the study service.
const API_BASE = new URLSearchParams(location.search).get("api") ?? "";
const STORAGE_KEY = "annotator.session";

const client = new StudyClient(API_BASE);
const controller = new SessionController(client);

function el<T extends HTMLElement>(selector: string): T {
  const node = document.querySelector<T>(selector);
  if (!node) throw new Error(`missing element ${selector}`);
  return node;
}

const startScreen = el<HTMLElement>("#start-screen");
const annotateScreen = el<HTMLElement>("#annotate-screen");
const doneScreen = el<HTMLElement>("#done-screen");
const messageScreen = el<HTMLElement>("#message-screen");
const participantInput = el<HTMLInputElement>("#participant");
const beginButton = el<HTMLButtonElement>("#begin");
const startError = el<HTMLElement>("#start-error");
const progressSpan = el<HTMLElement>("#progress");
const zoomLevel = el<HTMLElement>("#zoom-level");
const labelsDiv = el<HTMLElement>("#labels");
const submitButton = el<HTMLButtonElement>("#submit");
const statusSpan = el<HTMLElement>("#status");
const doneText = el<HTMLElement>("#done-text");
const messageText = el<HTMLElement>("#message-text");
const viewport = el<HTMLElement>("#viewport");
const canvas = el<HTMLCanvasElement>("#view");
const ctx = canvas.getContext("2d")!;

let image: HTMLImageElement | null = null;
let view: View = { zoom: 1, panX: 0, panY: 0 };
let committedBoxes: Box[] = [];
let selectedLabel: Label | null = null;
let dragStart: Point | null = null;
let dragEnd: Point | null = null;
let panStart: { pointer: Point; view: View } | null = null;

interface SavedSession {
  sessionId: string;
  labelOrder: Label[];
}

function saveSession(state: SessionState): void {
  const saved: SavedSession = { sessionId: state.sessionId, labelOrder: state.labelOrder };
  localStorage.setItem(STORAGE_KEY, JSON.stringify(saved));
}

function loadSaved(): SavedSession | null {
  const raw = localStorage.getItem(STORAGE_KEY);
  if (!raw) return null;
  try {
    return JSON.parse(raw) as SavedSession;
  } catch {
    return null;
  }
}

function showScreen(screen: HTMLElement): void {
  for (const s of [startScreen, annotateScreen, doneScreen, messageScreen]) {
    s.hidden = s !== screen;
  }
}

function canvasPoint(e: PointerEvent | WheelEvent): Point {
  const rect = canvas.getBoundingClientRect();
  return { x: e.clientX - rect.left, y: e.clientY - rect.top };
}

function resetView(): void {
  if (!image) return;
  view = fitView(image.naturalWidth, image.naturalHeight, canvas.width, canvas.height);
  draw();
}

function draw(): void {
  ctx.setTransform(1, 0, 0, 1, 0, 0);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!image) return;
  ctx.imageSmoothingEnabled = view.zoom < 1;
  ctx.setTransform(view.zoom, 0, 0, view.zoom, view.panX, view.panY);
  ctx.drawImage(image, 0, 0);
  ctx.setTransform(1, 0, 0, 1, 0, 0);
  ctx.lineWidth = 2;
  ctx.strokeStyle = "#ffcc00";
  for (const b of committedBoxes) {
    const p0 = imageToScreen(view, { x: b.x, y: b.y });
    const p1 = imageToScreen(view, { x: b.x + b.w, y: b.y + b.h });
    ctx.strokeRect(p0.x, p0.y, p1.x - p0.x, p1.y - p0.y);
  }
  if (dragStart && dragEnd) {
    ctx.setLineDash([6, 4]);
    ctx.strokeStyle = "#66ddff";
    ctx.strokeRect(dragStart.x, dragStart.y, dragEnd.x - dragStart.x, dragEnd.y - dragStart.y);
    ctx.setLineDash([]);
  }
  zoomLevel.textContent = `${Math.round(view.zoom * 100)}%`;
}

function sizeCanvas(): void {
  canvas.width = viewport.clientWidth;
  canvas.height = viewport.clientHeight;
}

function setStatus(text: string, isError = false): void {
  statusSpan.textContent = text;
  statusSpan.classList.toggle("error", isError);
}

function updateSubmitState(): void {
  // submission is blocked client-side until a label is chosen
  submitButton.disabled = selectedLabel === null;
}

function renderLabelButtons(order: Label[]): void {
  labelsDiv.textContent = "";
  for (const label of order) {
    const button = document.createElement("button");
    button.type = "button";
    button.className = "label-btn";
    button.textContent = label;
    button.addEventListener("click", () => {
      selectedLabel = label;
      for (const other of labelsDiv.querySelectorAll("button")) {
        other.classList.toggle("selected", other === button);
      }
      updateSubmitState();
    });
    labelsDiv.appendChild(button);
  }
}

function clearAnnotationState(): void {
  committedBoxes = [];
  selectedLabel = null;
  dragStart = dragEnd = null;
  for (const b of labelsDiv.querySelectorAll("button")) b.classList.remove("selected");
  updateSubmitState();
}

function render(state: SessionState): void {
  if (state.phase === "full") {
    localStorage.removeItem(STORAGE_KEY);
    messageText.textContent = "This study has no open slots left. Thank you for your interest.";
    showScreen(messageScreen);
    return;
  }
  if (state.phase === "done") {
    localStorage.removeItem(STORAGE_KEY);
    doneText.textContent = `All ${state.total} images annotated. Thank you!`;
    showScreen(doneScreen);
    return;
  }
  if (state.phase !== "active" || !state.step) {
    showScreen(startScreen);
    return;
  }
  showScreen(annotateScreen);
  sizeCanvas();
  progressSpan.textContent = progressText(state);
  clearAnnotationState();
  setStatus("loading image...");
  const img = new Image();
  img.onload = () => {
    image = img;
    controller.markDisplayed();
    resetView();
    setStatus("");
  };
  img.onerror = () => setStatus("image failed to load, reload to retry", true);
  // raw bytes straight from the service, never transformed
  img.src = client.imageUrl(state.step);
}

async function begin(): Promise<void> {
  beginButton.disabled = true;
  startError.textContent = "";
  try {
    const state = await controller.start(participantInput.value.trim());
    if (state.phase === "active") {
      saveSession(state);
      renderLabelButtons(state.labelOrder);
    }
    render(state);
  } catch (e) {
    startError.textContent = e instanceof ApiError ? e.message : "service unreachable, try again";
  } finally {
    beginButton.disabled = false;
  }
}

async function submit(): Promise<void> {
  if (selectedLabel === null || controller.state.phase !== "active") return;
  submitButton.disabled = true;
  setStatus("submitting...");
  try {
    const state = await controller.submit(selectedLabel, committedBoxes);
    render(state);
  } catch (e) {
    // keep boxes and label so nothing is lost; the participant retries
    const detail = e instanceof ApiError ? e.message : "network error";
    setStatus(`submission failed (${detail}), press Submit to retry`, true);
    submitButton.disabled = false;
  }
}

canvas.addEventListener("pointerdown", (e) => {
  if (!image) return;
  canvas.setPointerCapture(e.pointerId);
  const p = canvasPoint(e);
  if (e.button === 1 || e.button === 2 || e.shiftKey) {
    panStart = { pointer: p, view };
  } else {
    dragStart = p;
    dragEnd = p;
  }
  e.preventDefault();
});

canvas.addEventListener("pointermove", (e) => {
  if (!image) return;
  const p = canvasPoint(e);
  if (panStart) {
    view = panBy(panStart.view, p.x - panStart.pointer.x, p.y - panStart.pointer.y);
    draw();
  } else if (dragStart) {
    dragEnd = p;
    draw();
  }
});

canvas.addEventListener("pointerup", (e) => {
  if (!image) return;
  const p = canvasPoint(e);
  if (panStart) {
    panStart = null;
    return;
  }
  if (dragStart) {
    const box = boxFromDrag(view, dragStart, p, image.naturalWidth, image.naturalHeight);
    dragStart = dragEnd = null;
    if (box) committedBoxes.push(box);
    draw();
  }
});

canvas.addEventListener("wheel", (e) => {
  if (!image) return;
  e.preventDefault();
  view = zoomAt(view, e.deltaY < 0 ? 1.25 : 0.8, canvasPoint(e));
  draw();
});

canvas.addEventListener("contextmenu", (e) => e.preventDefault());
canvas.addEventListener("dblclick", resetView);

el<HTMLButtonElement>("#zoom-in").addEventListener("click", () => {
  view = zoomAt(view, 1.25, { x: canvas.width / 2, y: canvas.height / 2 });
  draw();
});
el<HTMLButtonElement>("#zoom-out").addEventListener("click", () => {
  view = zoomAt(view, 0.8, { x: canvas.width / 2, y: canvas.height / 2 });
  draw();
});
el<HTMLButtonElement>("#zoom-reset").addEventListener("click", resetView);
el<HTMLButtonElement>("#clear-boxes").addEventListener("click", () => {
  committedBoxes = [];
  draw();
});

beginButton.addEventListener("click", () => void begin());
participantInput.addEventListener("keydown", (e) => {
  if (e.key === "Enter") void begin();
});
submitButton.addEventListener("click", () => void submit());
window.addEventListener("resize", () => {
  if (controller.state.phase === "active") {
    sizeCanvas();
    resetView();
  }
});

async function boot(): Promise<void> {
  const saved = loadSaved();
  if (!saved) {
    showScreen(startScreen);
    return;
  }
  try {
    // reload mid-session: the server cursor decides where we are
    const state = await controller.resume(saved.sessionId, saved.labelOrder);
    if (state.phase === "active") renderLabelButtons(state.labelOrder);
    render(state);
  } catch (e) {
    if (e instanceof ApiError && e.status === 404) {
      localStorage.removeItem(STORAGE_KEY);
      showScreen(startScreen);
      return;
    }
    messageText.textContent = "service unreachable, reload to retry";
    showScreen(messageScreen);
  }
}

void boot();
