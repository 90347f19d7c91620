import type { ServiceClient } from "./api.js";
import type { AuthoringState } from "./state.js";
import type { ExportedFile, Point } from "./types.js";

/** Build the instruction-file text for the authored sample.
 *
 * Begin centroids must be the server-computed ones (k = 0 preview), so a
 * validator recomputing mask centroids agrees within its tolerance. Point
 * operations mirror the region ops (begin centroid -> target point).
 */
export function renderInstructions(
  state: AuthoringState,
  beginCentroids: Point[],
): string {
  if (beginCentroids.length !== state.regions.length) {
    throw new Error("one begin centroid per region required");
  }
  const regionOps: Record<string, unknown> = {};
  state.regions.forEach((r, i) => {
    const begin = beginCentroids[i]!;
    regionOps[String(i)] = {
      task: r.kind,
      centroids: [
        [round2(begin.x), round2(begin.y)],
        [round2(r.target!.x), round2(r.target!.y)],
      ],
      anchors: r.anchor ? [round2(r.anchor.x), round2(r.anchor.y)] : null,
    };
  });
  const doc = {
    region_operations: regionOps,
    point_operations: {
      begin_points: beginCentroids.map((c) => [round2(c.x), round2(c.y)]),
      target_points: state.regions.map((r) => [round2(r.target!.x), round2(r.target!.y)]),
    },
    background_prompt: state.backgroundPrompt,
    editing_prompt: state.editingPrompt || chosenPromptFallback(state),
  };
  return JSON.stringify(doc, null, 4) + "\n";
}

function chosenPromptFallback(state: AuthoringState): string {
  const chosen = state.regions.map((r) => r.chosenPrompt).filter((p): p is string => !!p);
  return chosen.join(" ");
}

function round2(v: number): number {
  return Math.round(v * 100) / 100;
}

/** Gather the full export: instructions plus one server-encoded mask PNG
 * per region, laid out the way the dataset validator expects. */
export async function exportSample(
  state: AuthoringState,
  client: ServiceClient,
): Promise<ExportedFile[]> {
  const issues = state.validate();
  if (issues.length > 0) {
    const msgs = issues.map((i) => `region ${i.region} ${i.field}: ${i.message}`);
    throw new Error(`export blocked:\n${msgs.join("\n")}`);
  }
  const ops = state.toOpPayloads();
  const preview = await client.preview(ops, 0, 50);
  const centroids: Point[] = preview.masks.map((m) => ({
    x: m.centroid[0],
    y: m.centroid[1],
  }));
  const files: ExportedFile[] = [
    {
      name: "instructions.json",
      data: new TextEncoder().encode(renderInstructions(state, centroids)),
    },
  ];
  for (let i = 0; i < state.regions.length; i++) {
    const encoded = await client.encodeMask(state.regions[i]!.bits);
    files.push({ name: `masks/${i}.png`, data: b64ToBytes(encoded.png_b64) });
  }
  return files;
}

export function b64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(b64, "base64"));
}

// --- minimal zip writer (stored entries, enough for a sample download) ---

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(data: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < data.length; i++) {
    c = CRC_TABLE[(c ^ data[i]!) & 0xff]! ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

export function makeZip(files: ExportedFile[]): Uint8Array<ArrayBuffer> {
  const chunks: Uint8Array[] = [];
  const central: Uint8Array[] = [];
  let offset = 0;
  for (const file of files) {
    const name = new TextEncoder().encode(file.name);
    const crc = crc32(file.data);
    const local = new Uint8Array(30 + name.length);
    const lv = new DataView(local.buffer);
    lv.setUint32(0, 0x04034b50, true);
    lv.setUint16(4, 20, true); // version needed
    lv.setUint32(14, crc, true);
    lv.setUint32(18, file.data.length, true); // compressed (stored)
    lv.setUint32(22, file.data.length, true); // uncompressed
    lv.setUint16(26, name.length, true);
    local.set(name, 30);
    chunks.push(local, file.data);

    const entry = new Uint8Array(46 + name.length);
    const ev = new DataView(entry.buffer);
    ev.setUint32(0, 0x02014b50, true);
    ev.setUint16(4, 20, true);
    ev.setUint16(6, 20, true);
    ev.setUint32(16, crc, true);
    ev.setUint32(20, file.data.length, true);
    ev.setUint32(24, file.data.length, true);
    ev.setUint16(28, name.length, true);
    ev.setUint32(42, offset, true);
    entry.set(name, 46);
    central.push(entry);
    offset += local.length + file.data.length;
  }
  const centralSize = central.reduce((n, c) => n + c.length, 0);
  const end = new Uint8Array(22);
  const endv = new DataView(end.buffer);
  endv.setUint32(0, 0x06054b50, true);
  endv.setUint16(8, files.length, true);
  endv.setUint16(10, files.length, true);
  endv.setUint32(12, centralSize, true);
  endv.setUint32(16, offset, true);
  const total = offset + centralSize + 22;
  const out = new Uint8Array(total);
  let pos = 0;
  for (const c of [...chunks, ...central, end]) {
    out.set(c, pos);
    pos += c.length;
  }
  return out;
}
