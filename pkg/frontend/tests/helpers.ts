// Shared fakes: scripted fetch and a controllable EventSource.

import type { EventSourceLike, FetchLike, StreamEvent } from "../src/api.js";

export type RouteTable = Record<string, unknown | ((body: unknown) => unknown)>;

export function fakeFetch(routes: RouteTable, recorded: string[]): FetchLike {
  return async (url, init = {}) => {
    const method = init.method ?? "GET";
    recorded.push(`${method} ${url}`);
    const key = `${method} ${url}`;
    const bareKey = `${method} ${url.split("?")[0]}`;
    const handler = routes[key] ?? routes[bareKey];
    if (handler === undefined) {
      return jsonResponse({ code: "not_found", message: `no fake for ${key}` }, 404);
    }
    const body = init.body ? JSON.parse(init.body as string) : undefined;
    const result = typeof handler === "function" ? (handler as (b: unknown) => unknown)(body) : handler;
    if (result instanceof Response) return result;
    return jsonResponse(result, 200);
  };
}

export function jsonResponse(body: unknown, status: number): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export class FakeEventSource implements EventSourceLike {
  static instances: FakeEventSource[] = [];
  onmessage: ((ev: { data: string }) => void) | null = null;
  onerror: ((ev: unknown) => void) | null = null;
  closed = false;

  constructor(public url: string) {
    FakeEventSource.instances.push(this);
  }

  emit(event: StreamEvent): void {
    this.onmessage?.({ data: JSON.stringify(event) });
  }

  fail(): void {
    this.onerror?.(new Error("stream dropped"));
  }

  close(): void {
    this.closed = true;
  }

  static reset(): void {
    FakeEventSource.instances = [];
  }

  static latest(): FakeEventSource {
    return FakeEventSource.instances[FakeEventSource.instances.length - 1];
  }
}

export function lossSeriesWithTune(): { step: number; value: number }[] {
  // lr 0.1 for steps 1..10, tuned to 0.5 for 11..12 (l0 = 1)
  const points = [];
  for (let step = 1; step <= 10; step++) {
    points.push({ step, value: 1 / (1 + 0.1 * step) });
  }
  points.push({ step: 11, value: 1 / (1 + 1 + 0.5 * 1) });
  points.push({ step: 12, value: 1 / (1 + 1 + 0.5 * 2) });
  return points;
}

export function sessionDoc(overrides: Record<string, unknown> = {}) {
  return {
    session_id: "kim/mnist/1",
    user: "kim",
    dataset: "mnist@v1",
    entrypoint: "main.py",
    state: "RUNNING",
    priority: 0,
    hyperparams: { l0: 1.0, lr: 0.1, steps: 50 },
    code_digest: "f".repeat(64),
    node_id: "node-0",
    parent: null,
    sweep_id: null,
    best: null,
    created_at: 0,
    history: [
      { at: 0, event: "CREATED", detail: "" },
      { at: 1, event: "SCHEDULED", detail: "on node-0" },
      { at: 2, event: "RUNNING", detail: "" },
    ],
    ...overrides,
  };
}
