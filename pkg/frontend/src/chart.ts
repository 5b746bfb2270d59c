// Pure SVG chart geometry: raw points in, polyline coordinates out.
// No smoothing, so what is drawn is exactly the exported series.

import type { SeriesPoint } from "./store.js";

export interface ChartGeometry {
  width: number;
  height: number;
  pad: number;
}

export const DEFAULT_GEOMETRY: ChartGeometry = { width: 640, height: 240, pad: 24 };

export interface XY {
  x: number;
  y: number;
}

export function project(points: SeriesPoint[], geometry: ChartGeometry = DEFAULT_GEOMETRY): XY[] {
  if (points.length === 0) return [];
  const { width, height, pad } = geometry;
  const steps = points.map((p) => p.step);
  const values = points.map((p) => p.value);
  const minStep = Math.min(...steps);
  const maxStep = Math.max(...steps);
  const minValue = Math.min(...values);
  const maxValue = Math.max(...values);
  const spanX = Math.max(maxStep - minStep, 1);
  const spanY = Math.max(maxValue - minValue, 1e-12);
  return points.map((p) => ({
    x: pad + ((p.step - minStep) / spanX) * (width - 2 * pad),
    y: height - pad - ((p.value - minValue) / spanY) * (height - 2 * pad),
  }));
}

export function polylinePoints(points: SeriesPoint[], geometry?: ChartGeometry): string {
  return project(points, geometry)
    .map((pt) => `${pt.x.toFixed(2)},${pt.y.toFixed(2)}`)
    .join(" ");
}

// Pixel slope (dy/dx) of the drawn segment entering `step`; what the eye
// sees as the curve's steepness just after a given point.
export function segmentSlope(points: SeriesPoint[], step: number, geometry?: ChartGeometry): number {
  const projected = project(points, geometry);
  const index = points.findIndex((p) => p.step === step);
  if (index <= 0) return 0;
  const a = projected[index - 1];
  const b = projected[index];
  return (b.y - a.y) / (b.x - a.x);
}

export function renderChartSvg(points: SeriesPoint[], geometry: ChartGeometry = DEFAULT_GEOMETRY): string {
  const { width, height } = geometry;
  const line = polylinePoints(points, geometry);
  return (
    `<svg viewBox="0 0 ${width} ${height}" class="chart" role="img">` +
    `<polyline fill="none" stroke="currentColor" stroke-width="1.5" points="${line}"></polyline>` +
    `</svg>`
  );
}
