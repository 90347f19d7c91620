/** Tiny dependency-free line chart used for the live loss and centroid
 * traces. The scaling helpers are pure so they can be unit tested. */

export interface ChartScale {
  min: number;
  max: number;
}

export function niceScale(values: number[]): ChartScale {
  if (values.length === 0) return { min: 0, max: 1 };
  let min = Math.min(...values);
  let max = Math.max(...values);
  if (min === max) {
    min -= 0.5;
    max += 0.5;
  }
  const pad = (max - min) * 0.05;
  return { min: min - pad, max: max + pad };
}

export function toPixels(
  values: number[],
  scale: ChartScale,
  width: number,
  height: number,
): [number, number][] {
  const n = values.length;
  if (n === 0) return [];
  const span = scale.max - scale.min;
  return values.map((v, i) => [
    n === 1 ? width / 2 : (i / (n - 1)) * (width - 1),
    height - 1 - ((v - scale.min) / span) * (height - 1),
  ]);
}

export function drawSeries(
  ctx: CanvasRenderingContext2D,
  values: number[],
  color: string,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = "#ccc";
  ctx.strokeRect(0.5, 0.5, width - 1, height - 1);
  const pts = toPixels(values, niceScale(values), width, height);
  if (pts.length < 2) return;
  ctx.strokeStyle = color;
  ctx.beginPath();
  ctx.moveTo(pts[0]![0], pts[0]![1]);
  for (const [x, y] of pts.slice(1)) ctx.lineTo(x, y);
  ctx.stroke();
}
