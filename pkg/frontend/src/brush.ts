import type { BitGrid, Point } from "./types.js";

/** Client-side scribble rasterization. This is only a drawing aid: the
 * authoritative mask is the PNG the server echoes back on export. */

export function emptyGrid(width: number, height: number): BitGrid {
  return Array.from({ length: height }, () => new Array<number>(width).fill(0));
}

export function gridWidth(bits: BitGrid): number {
  return bits[0]?.length ?? 0;
}

export function gridHeight(bits: BitGrid): number {
  return bits.length;
}

export function countSet(bits: BitGrid): number {
  let n = 0;
  for (const row of bits) for (const v of row) n += v ? 1 : 0;
  return n;
}

/** Stamp a filled disc of the given radius at a point. */
export function stampBrush(bits: BitGrid, at: Point, radius: number): void {
  const h = gridHeight(bits);
  const w = gridWidth(bits);
  const x0 = Math.max(0, Math.floor(at.x - radius));
  const x1 = Math.min(w - 1, Math.ceil(at.x + radius));
  const y0 = Math.max(0, Math.floor(at.y - radius));
  const y1 = Math.min(h - 1, Math.ceil(at.y + radius));
  for (let y = y0; y <= y1; y++) {
    const row = bits[y]!;
    for (let x = x0; x <= x1; x++) {
      const dx = x - at.x;
      const dy = y - at.y;
      if (dx * dx + dy * dy <= radius * radius) row[x] = 1;
    }
  }
}

/** Stamp along a stroke segment so fast mouse moves leave no gaps. */
export function strokeSegment(bits: BitGrid, from: Point, to: Point, radius: number): void {
  const dist = Math.hypot(to.x - from.x, to.y - from.y);
  const steps = Math.max(1, Math.ceil(dist));
  for (let i = 0; i <= steps; i++) {
    const t = i / steps;
    stampBrush(bits, { x: from.x + t * (to.x - from.x), y: from.y + t * (to.y - from.y) }, radius);
  }
}

export function cloneGrid(bits: BitGrid): BitGrid {
  return bits.map((row) => row.slice());
}

export function gridsEqual(a: BitGrid, b: BitGrid): boolean {
  if (a.length !== b.length) return false;
  for (let y = 0; y < a.length; y++) {
    const ra = a[y]!;
    const rb = b[y]!;
    if (ra.length !== rb.length) return false;
    for (let x = 0; x < ra.length; x++) {
      if ((ra[x] ? 1 : 0) !== (rb[x] ? 1 : 0)) return false;
    }
  }
  return true;
}
