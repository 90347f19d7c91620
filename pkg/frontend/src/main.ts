import { ServiceClient } from "./api.js";
import { strokeSegment } from "./brush.js";
import { drawSeries } from "./charts.js";
import { exportSample, makeZip } from "./export.js";
import { JobWatcher } from "./jobs.js";
import { PreviewScrubber, overlayRgba } from "./preview.js";
import { AuthoringState } from "./state.js";
import type { JobRecord, Point, TaskKind } from "./types.js";

const GRID = 64;
const SCALE = 8; // canvas pixels per latent cell
const BRUSH_RADIUS = 2.5;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const client = new ServiceClient("");
const state = new AuthoringState(GRID, GRID);
const scrubber = new PreviewScrubber(client, state);
let watcher: JobWatcher | null = null;
let activeRegion = state.addRegion();
let clickMode: "target" | "anchor" = "target";
let drawing = false;
let lastPos: Point | null = null;

const canvas = $("board") as unknown as HTMLCanvasElement;
canvas.width = GRID * SCALE;
canvas.height = GRID * SCALE;
const ctx = canvas.getContext("2d")!;
const lossCanvas = $("loss-chart") as unknown as HTMLCanvasElement;
const lossCtx = lossCanvas.getContext("2d")!;

function toCell(ev: MouseEvent): Point {
  const rect = canvas.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * GRID,
    y: ((ev.clientY - rect.top) / rect.height) * GRID,
  };
}

function setStatus(text: string, isError = false): void {
  const el = $("status");
  el.textContent = text;
  el.className = isError ? "error" : "";
}

function redraw(frameRgba: Uint8ClampedArray<ArrayBuffer> | null = null): void {
  ctx.fillStyle = "#111";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const cell = new Path2D();
  for (let y = 0; y < GRID; y++) {
    const row = activeRegion.bits[y]!;
    for (let x = 0; x < GRID; x++) {
      if (row[x]) cell.rect(x * SCALE, y * SCALE, SCALE, SCALE);
    }
  }
  ctx.fillStyle = "rgba(80, 140, 255, 0.55)";
  ctx.fill(cell);
  if (frameRgba) {
    const small = new ImageData(frameRgba, GRID, GRID);
    const off = new OffscreenCanvas(GRID, GRID);
    off.getContext("2d")!.putImageData(small, 0, 0);
    ctx.imageSmoothingEnabled = false;
    ctx.globalAlpha = 0.8;
    ctx.drawImage(off, 0, 0, canvas.width, canvas.height);
    ctx.globalAlpha = 1.0;
  }
  if (activeRegion.target) {
    marker(activeRegion.target, "#2ecc40");
  }
  if (activeRegion.anchor) {
    marker(activeRegion.anchor, "#ff851b");
  }
  if (activeRegion.target && activeRegion.beginCentroid) {
    arrow(activeRegion.beginCentroid, activeRegion.target);
  }
}

function marker(p: Point, color: string): void {
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(p.x * SCALE, p.y * SCALE, 6, 0, 2 * Math.PI);
  ctx.stroke();
}

function arrow(from: Point, to: Point): void {
  ctx.strokeStyle = "#fff";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.moveTo(from.x * SCALE, from.y * SCALE);
  ctx.lineTo(to.x * SCALE, to.y * SCALE);
  ctx.stroke();
}

async function refreshPreview(): Promise<void> {
  const k = Number(($("k-slider") as unknown as HTMLInputElement).value);
  $("k-label").textContent = `k = ${k} / ${scrubber.K}`;
  if (state.validate().length > 0) {
    redraw();
    return;
  }
  try {
    const frame = await scrubber.scrub(k);
    if (frame) redraw(overlayRgba(frame, GRID, GRID));
    setStatus("preview updated");
  } catch (err) {
    setStatus(`service unreachable: ${String(err)}`, true);
  }
}

canvas.addEventListener("mousedown", (ev) => {
  const p = toCell(ev);
  if (ev.shiftKey) {
    if (clickMode === "anchor" && activeRegion.kind === "rotation") {
      state.setAnchor(activeRegion.id, p);
    } else {
      state.setTarget(activeRegion.id, p);
    }
    void refreshPreview();
    return;
  }
  drawing = true;
  lastPos = p;
  strokeSegment(activeRegion.bits, p, p, BRUSH_RADIUS);
  redraw();
});

canvas.addEventListener("mousemove", (ev) => {
  if (!drawing || !lastPos) return;
  const p = toCell(ev);
  strokeSegment(activeRegion.bits, lastPos, p, BRUSH_RADIUS);
  lastPos = p;
  redraw();
});

window.addEventListener("mouseup", () => {
  if (drawing) {
    drawing = false;
    lastPos = null;
    void refreshPreview();
  }
});

($("task-kind") as unknown as HTMLSelectElement).addEventListener("change", (ev) => {
  const kind = (ev.target as HTMLSelectElement).value as TaskKind;
  state.setKind(activeRegion.id, kind);
  $("anchor-row").style.display = kind === "rotation" ? "" : "none";
  void refreshPreview();
});

$("mode-target").addEventListener("click", () => (clickMode = "target"));
$("mode-anchor").addEventListener("click", () => (clickMode = "anchor"));

$("add-region").addEventListener("click", () => {
  activeRegion = state.addRegion(
    ($("task-kind") as unknown as HTMLSelectElement).value as TaskKind,
  );
  setStatus(`editing region ${state.regions.length - 1}`);
  redraw();
});

($("k-slider") as unknown as HTMLInputElement).addEventListener("input", () => {
  void refreshPreview();
});

$("intent-btn").addEventListener("click", async () => {
  const endpoint = ($("intent-endpoint") as unknown as HTMLInputElement).value;
  if (!endpoint) {
    setStatus("set an intent endpoint first", true);
    return;
  }
  try {
    const frame = scrubber.lastFrame ?? (await scrubber.scrub(scrubber.K));
    const png = frame?.masks[0]?.png_b64 ?? "";
    const result = await client.requestIntent({
      endpoint_url: endpoint,
      original_png_b64: png,
      overlay_png_b64: png,
      sample_meta: { background_prompt: state.backgroundPrompt },
    });
    const list = $("intent-list");
    list.innerHTML = "";
    result.candidates.forEach((cand) => {
      const li = document.createElement("li");
      const btn = document.createElement("button");
      btn.textContent = cand;
      btn.addEventListener("click", () => {
        state.chooseIntent(activeRegion.id, cand);
        state.editingPrompt = cand;
        ($("editing-prompt") as unknown as HTMLInputElement).value = cand;
      });
      li.appendChild(btn);
      list.appendChild(li);
    });
    ($("task-kind") as unknown as HTMLSelectElement).value = result.label;
    state.setKind(activeRegion.id, result.label);
    setStatus(`intent: ${result.label}, ${result.candidates.length} candidates`);
  } catch (err) {
    setStatus(`intent failed: ${String(err)}`, true);
  }
});

$("run-btn").addEventListener("click", async () => {
  state.backgroundPrompt = ($("background-prompt") as unknown as HTMLInputElement).value;
  state.editingPrompt = ($("editing-prompt") as unknown as HTMLInputElement).value;
  const issues = state.validate();
  if (issues.length > 0) {
    setStatus(issues.map((i) => `region ${i.region} ${i.field}: ${i.message}`).join("; "), true);
    return;
  }
  await scrubber.scrub(0); // capture server begin centroids
  watcher = new JobWatcher(client);
  const update = (record: JobRecord) => {
    $("job-status").textContent = `${record.status} ${(record.progress * 100).toFixed(0)}%`;
    drawSeries(lossCtx, record.loss_trajectory, "#ff4136", lossCanvas.width, lossCanvas.height);
    const trace = record.centroid_trajectory
      .map((step) => step[0])
      .filter((pt): pt is [number, number] => Array.isArray(pt));
    if (trace.length > 0 && activeRegion.target) {
      redraw();
      ctx.strokeStyle = "#ffdc00";
      ctx.beginPath();
      trace.forEach(([x, y], i) => {
        if (i === 0) ctx.moveTo(x * SCALE, y * SCALE);
        else ctx.lineTo(x * SCALE, y * SCALE);
      });
      ctx.stroke();
    }
  };
  try {
    const record = await watcher.start(
      state.toOpPayloads(),
      { k_motion: 50, k_refine: 20 },
      { onUpdate: update },
    );
    update(record);
    setStatus(
      record.status === "done"
        ? "run finished"
        : `run ${record.status}: ${record.error ?? ""}`,
      record.status !== "done",
    );
  } catch (err) {
    setStatus(`run failed: ${String(err)}`, true);
  }
});

$("cancel-btn").addEventListener("click", () => {
  void watcher?.stop();
});

$("export-btn").addEventListener("click", async () => {
  state.backgroundPrompt = ($("background-prompt") as unknown as HTMLInputElement).value;
  state.editingPrompt = ($("editing-prompt") as unknown as HTMLInputElement).value;
  try {
    const files = await exportSample(state, client);
    const zip = makeZip(files);
    const blob = new Blob([zip], { type: "application/zip" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "sample.zip";
    a.click();
    URL.revokeObjectURL(a.href);
    setStatus(`exported ${files.length} files`);
  } catch (err) {
    setStatus(String(err), true);
  }
});

redraw();
setStatus("scribble a region, shift-click a target, then run");
