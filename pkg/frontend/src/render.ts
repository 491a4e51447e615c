import { clampRect, scaleFactor, scaleRect, scaleSegment } from "./overlay";
import type { SessionState } from "./session";

export interface Elements {
  image: HTMLImageElement;
  canvas: HTMLCanvasElement;
  factText: HTMLElement;
  statsBar: HTMLElement;
  banner: HTMLElement;
  viewport: HTMLElement;
}

export function queryElements(root: Document): Elements {
  const get = (id: string) => {
    const el = root.getElementById(id);
    if (!el) throw new Error(`missing element #${id}`);
    return el;
  };
  return {
    image: get("scene-image") as HTMLImageElement,
    canvas: get("overlay-canvas") as HTMLCanvasElement,
    factText: get("fact-text"),
    statsBar: get("stats-bar"),
    banner: get("banner"),
    viewport: get("viewport"),
  };
}

const VIEW_W = 720;
const VIEW_H = 540;

export function render(els: Elements, state: SessionState): void {
  els.banner.textContent = "";
  els.banner.className = "";
  if (state.phase === "error") {
    els.banner.textContent =
      (state.lastError ?? "connection lost") + " — press Enter to retry";
    els.banner.className = "banner-error";
  } else if (state.queuedOffline > 0) {
    els.banner.textContent = `${state.queuedOffline} verdict(s) queued offline`;
    els.banner.className = "banner-warn";
  }

  if (state.stats) {
    const s = state.stats;
    els.statsBar.textContent =
      `pending ${s.pending} · accepted ${s.accepted} · rejected ${s.rejected} · skipped ${s.skipped}`;
  }

  if (state.phase === "empty") {
    els.factText.textContent = "All done — the queue is empty.";
    els.image.removeAttribute("src");
    clearCanvas(els.canvas);
    return;
  }
  if (state.phase !== "reviewing" || !state.item) {
    if (state.phase === "loading") els.factText.textContent = "Loading…";
    return;
  }

  const { payload } = state.item;
  els.factText.textContent = payload.fact_text;
  els.image.src = payload.image_url;

  const [imgW, imgH] = payload.image_size;
  const s = scaleFactor(imgW, imgH, VIEW_W, VIEW_H);
  els.canvas.width = Math.round(imgW * s);
  els.canvas.height = Math.round(imgH * s);
  els.image.width = els.canvas.width;
  els.image.height = els.canvas.height;

  const ctx = els.canvas.getContext("2d");
  if (!ctx) return; // headless DOM: geometry above is still exercised
  ctx.clearRect(0, 0, els.canvas.width, els.canvas.height);
  ctx.lineWidth = 2;
  ctx.strokeStyle = "#00e676";
  for (const box of payload.boxes) {
    const r = clampRect(scaleRect(box, s), els.canvas.width, els.canvas.height);
    ctx.strokeRect(r.x, r.y, r.w, r.h);
  }
  ctx.strokeStyle = "#ff9100";
  for (const seg of payload.arrows) {
    const a = scaleSegment(seg, s);
    ctx.beginPath();
    ctx.moveTo(a.x0, a.y0);
    ctx.lineTo(a.x1, a.y1);
    ctx.stroke();
    ctx.beginPath();
    ctx.arc(a.x1, a.y1, 3, 0, 2 * Math.PI);
    ctx.stroke();
  }
}

function clearCanvas(canvas: HTMLCanvasElement): void {
  const ctx = canvas.getContext("2d");
  if (ctx) ctx.clearRect(0, 0, canvas.width, canvas.height);
}
