// Single store for one session dashboard. All UI state updates funnel
// through applyEvent/setters; views re-render from snapshots of this store.

import type { MetricPointView, SessionView, StreamEvent } from "./api.js";

export interface SeriesPoint {
  step: number;
  value: number;
}

export class DashboardStore {
  doc: SessionView | null = null;
  series = new Map<string, Map<number, number>>();
  state = "";
  finished = false;
  error: string | null = null;
  private listeners: (() => void)[] = [];

  subscribe(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  setDoc(doc: SessionView): void {
    this.doc = doc;
    this.state = doc.state;
    this.finished = ["DONE", "FAILED", "STOPPED"].includes(doc.state);
    this.notify();
  }

  setError(message: string | null): void {
    this.error = message;
    this.notify();
  }

  seedPoints(points: MetricPointView[]): void {
    for (const point of points) {
      this.upsert(point.name, point.step, point.value);
    }
    this.notify();
  }

  // Idempotent: replayed events after a reconnect cannot corrupt the chart.
  applyEvent(event: StreamEvent): void {
    if (event.type === "metric") {
      this.upsert(event.name, event.step, event.value);
    } else if (event.type === "state") {
      this.state = event.state;
    } else if (event.type === "end") {
      this.state = event.state;
      this.finished = true;
    } else if (event.type === "overflow") {
      this.error = "event stream overflowed; reload to resync";
    }
    this.notify();
  }

  private upsert(name: string, step: number, value: number): void {
    let byStep = this.series.get(name);
    if (!byStep) {
      byStep = new Map();
      this.series.set(name, byStep);
    }
    byStep.set(step, value);
  }

  points(name: string): SeriesPoint[] {
    const byStep = this.series.get(name);
    if (!byStep) return [];
    return [...byStep.entries()]
      .sort((a, b) => a[0] - b[0])
      .map(([step, value]) => ({ step, value }));
  }
}
