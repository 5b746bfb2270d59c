import { describe, expect, it } from "vitest";

import { polylinePoints, project, renderChartSvg, segmentSlope } from "../src/chart.js";
import { lossSeriesWithTune } from "./helpers.js";

describe("chart projection", () => {
  it("keeps points in step order", () => {
    const series = lossSeriesWithTune();
    const projected = project(series);
    for (let i = 1; i < projected.length; i++) {
      expect(projected[i].x).toBeGreaterThan(projected[i - 1].x);
    }
  });

  it("maps decreasing loss to descending pixels (larger y)", () => {
    const projected = project(lossSeriesWithTune());
    for (let i = 1; i < projected.length; i++) {
      expect(projected[i].y).toBeGreaterThan(projected[i - 1].y);
    }
  });

  it("tune visibly steepens the slope at the tune step", () => {
    const series = lossSeriesWithTune();
    const before = segmentSlope(series, 10); // entering step 10 (lr = 0.1)
    const after = segmentSlope(series, 11); // first segment after tune (lr = 0.5)
    expect(after).toBeGreaterThan(before * 2);
  });

  it("identity series leaves slope continuous", () => {
    const series = [];
    for (let step = 1; step <= 12; step++) {
      series.push({ step, value: 1 / (1 + 0.1 * step) });
    }
    const before = segmentSlope(series, 10);
    const after = segmentSlope(series, 11);
    expect(Math.abs(after - before)).toBeLessThan(Math.abs(before) * 0.5);
  });

  it("renders one polyline with one coordinate pair per point", () => {
    const series = lossSeriesWithTune();
    const svg = renderChartSvg(series);
    expect(svg).toContain("<polyline");
    const pairs = polylinePoints(series).split(" ");
    expect(pairs).toHaveLength(series.length);
  });

  it("handles empty series", () => {
    expect(project([])).toEqual([]);
    expect(polylinePoints([])).toBe("");
  });
});
