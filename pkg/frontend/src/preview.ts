import type { ServiceClient } from "./api.js";
import type { AuthoringState } from "./state.js";
import type { PreviewFrame } from "./types.js";

/** Scrubber over the motion schedule: every frame comes from /preview so
 * the overlay always shows exactly what the optimizer will use. Stale
 * responses (from rapid slider moves) are dropped. */
export class PreviewScrubber {
  private seq = 0;
  lastFrame: PreviewFrame | null = null;

  constructor(
    private client: ServiceClient,
    private state: AuthoringState,
    public K = 50,
  ) {}

  async scrub(k: number): Promise<PreviewFrame | null> {
    if (k < 0 || k > this.K) throw new Error(`k must lie in [0, ${this.K}]`);
    const ops = this.state.toOpPayloads();
    const ticket = ++this.seq;
    const frame = await this.client.preview(ops, k, this.K);
    if (ticket !== this.seq) return null; // a newer scrub superseded this one
    this.lastFrame = frame;
    if (k === 0) {
      frame.masks.forEach((m, i) => {
        const region = this.state.regions[i];
        if (region) {
          this.state.setBeginCentroid(region.id, {
            x: m.centroid[0],
            y: m.centroid[1],
          });
        }
      });
    }
    return frame;
  }
}

/** Compose a blue-source / green-target overlay into an RGBA buffer the
 * canvas can blit. Pixels come straight from the server frame. */
export function overlayRgba(
  frame: PreviewFrame,
  width: number,
  height: number,
): Uint8ClampedArray<ArrayBuffer> {
  const out = new Uint8ClampedArray(width * height * 4);
  for (const mask of frame.masks) {
    for (let y = 0; y < height; y++) {
      const srcRow = mask.source_bits[y];
      const tgtRow = mask.bits[y];
      for (let x = 0; x < width; x++) {
        const p = (y * width + x) * 4;
        if (srcRow && srcRow[x]) {
          out[p + 2] = 255; // blue: starting region
          out[p + 3] = Math.max(out[p + 3]!, 160);
        }
        if (tgtRow && tgtRow[x]) {
          out[p + 1] = 255; // green: estimated target region
          out[p + 3] = Math.max(out[p + 3]!, 160);
        }
      }
    }
  }
  return out;
}
