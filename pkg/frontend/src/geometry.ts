// Client-side geometry helpers: freehand decimation, display paths,
// hit-testing. Display only; the server owns all sketch mutations.

export type Point = [number, number];

export const MAX_FREEHAND_POINTS = 64;

/** Uniform-index decimation to at most `max` points, keeping endpoints. */
export function decimatePolyline(points: Point[], max = MAX_FREEHAND_POINTS): Point[] {
  if (points.length <= max) return points.slice();
  const out: Point[] = [];
  const n = points.length;
  for (let i = 0; i < max; i++) {
    const idx = Math.round((i * (n - 1)) / (max - 1));
    out.push(points[idx]);
  }
  return out;
}

/** SVG path data for a cubic Bezier stroke stored as 3m+1 control points. */
export function strokePathD(points: number[][]): string {
  if (points.length < 4) return "";
  const f = (v: number) => String(Math.round(v * 1000) / 1000);
  let d = `M ${f(points[0][0])} ${f(points[0][1])}`;
  for (let i = 1; i + 2 < points.length; i += 3) {
    const [p1, p2, p3] = [points[i], points[i + 1], points[i + 2]];
    d += ` C ${f(p1[0])} ${f(p1[1])} ${f(p2[0])} ${f(p2[1])} ${f(p3[0])} ${f(p3[1])}`;
  }
  return d;
}

function segDist(p: Point, a: number[], b: number[]): number {
  const ex = b[0] - a[0];
  const ey = b[1] - a[1];
  const ll = ex * ex + ey * ey;
  let u = ll > 0 ? ((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / ll : 0;
  u = Math.min(1, Math.max(0, u));
  const dx = p[0] - (a[0] + u * ex);
  const dy = p[1] - (a[1] + u * ey);
  return Math.hypot(dx, dy);
}

/** Distance from a point to a stroke's control polygon (selection proxy). */
export function strokeHitDistance(p: Point, points: number[][]): number {
  let best = Infinity;
  for (let i = 0; i + 1 < points.length; i++) {
    best = Math.min(best, segDist(p, points[i], points[i + 1]));
  }
  return best;
}

/** Centroid of the selected strokes' control points. */
export function selectionCentroid(strokes: { points: number[][] }[], indices: number[]): Point {
  let sx = 0;
  let sy = 0;
  let n = 0;
  for (const i of indices) {
    for (const [x, y] of strokes[i].points) {
      sx += x;
      sy += y;
      n += 1;
    }
  }
  return n ? [sx / n, sy / n] : [0, 0];
}

/** Axis-aligned bounds of the selected strokes. */
export function selectionBounds(
  strokes: { points: number[][] }[],
  indices: number[],
): { x: number; y: number; w: number; h: number } | null {
  let minX = Infinity;
  let minY = Infinity;
  let maxX = -Infinity;
  let maxY = -Infinity;
  for (const i of indices) {
    for (const [x, y] of strokes[i].points) {
      minX = Math.min(minX, x);
      minY = Math.min(minY, y);
      maxX = Math.max(maxX, x);
      maxY = Math.max(maxY, y);
    }
  }
  if (!isFinite(minX)) return null;
  return { x: minX, y: minY, w: maxX - minX, h: maxY - minY };
}

/** Expand the previous-prompt token for the resolved-prompt preview. */
export function expandPromptPreview(template: string, previous: string | null): string {
  if (!template.includes("[…]") && !template.includes("[...]")) return template;
  if (!previous) return template;
  return template.split("[…]").join(previous).split("[...]").join(previous);
}
