// Typed client for the /v1 gateway. Every request the UI makes goes through
// this module so the documented-routes contract can be asserted in tests.

export interface HistoryEntry {
  at: number;
  event: string;
  detail: string;
}

export interface BestScore {
  value: number;
  step: number;
  checkpoint_step: number | null;
}

export interface SessionView {
  session_id: string;
  user: string;
  dataset: string;
  entrypoint: string;
  state: string;
  priority: number;
  hyperparams: Record<string, number | string>;
  code_digest: string;
  node_id: string | null;
  parent: { session_id: string; step: number } | null;
  sweep_id: string | null;
  best: BestScore | null;
  created_at: number;
  history?: HistoryEntry[];
}

export interface MetricPointView {
  step: number;
  name: string;
  value: number;
  at: number;
}

export interface BoardEntry {
  rank: number;
  session_id: string;
  user: string;
  metric: string;
  value: number;
  achieved_at: number;
  hyperparams: Record<string, number | string>;
}

export interface BoardView {
  dataset: string;
  metric: string;
  direction: string;
  entries: BoardEntry[];
}

export interface DatasetView {
  name: string;
  version: number;
  ref: string;
  files: number;
  size_bytes: number;
  created_at: number;
  board: { metric: string; direction: string } | null;
}

export interface InferResult {
  label: number;
  confidence: number;
  checkpoint_step: number;
}

export type StreamEvent =
  | { type: "metric"; session_id: string; step: number; name: string; value: number; at: number }
  | { type: "state"; session_id: string; state: string; detail: string; at: number | null }
  | { type: "end"; session_id: string; state: string }
  | { type: "overflow"; session_id: string };

// The only server surface the UI is allowed to touch.
export const DOCUMENTED_ROUTES: RegExp[] = [
  /^\/v1\/datasets$/,
  /^\/v1\/datasets\/[^/]+\/\d+\/board(\?.*)?$/,
  /^\/v1\/sessions(\?.*)?$/,
  /^\/v1\/sessions\/[^/]+\/[^/]+\/\d+$/,
  /^\/v1\/sessions\/[^/]+\/[^/]+\/\d+\/(tune|stop|fork|reproduce|infer)$/,
  /^\/v1\/sessions\/[^/]+\/[^/]+\/\d+\/logs(\?.*)?$/,
  /^\/v1\/sessions\/[^/]+\/[^/]+\/\d+\/plot\.csv(\?.*)?$/,
  /^\/v1\/sessions\/[^/]+\/[^/]+\/\d+\/events$/,
  /^\/v1\/cluster$/,
  /^\/v1\/sweeps$/,
];

export class ApiError extends Error {
  constructor(public code: string, message: string, public status: number) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface EventSourceLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

// Adapter over the browser EventSource so consumers depend only on the
// narrow interface (tests substitute a scripted fake).
export function domEventSource(url: string): EventSourceLike {
  const source = new EventSource(url);
  const like: EventSourceLike = {
    onmessage: null,
    onerror: null,
    close: () => source.close(),
  };
  source.onmessage = (ev) => like.onmessage?.({ data: ev.data });
  source.onerror = (ev) => like.onerror?.(ev);
  return like;
}

export class Api {
  constructor(
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
    private user: string = "ui",
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = {
      method,
      headers: { "X-MLForge-User": this.user, "Content-Type": "application/json" },
    };
    if (body !== undefined) init.body = JSON.stringify(body);
    const resp = await this.fetchFn(path, init);
    const payload = await resp.json();
    if (!resp.ok) {
      throw new ApiError(payload.code ?? "error", payload.message ?? "request failed", resp.status);
    }
    return payload as T;
  }

  listSessions(): Promise<{ sessions: SessionView[] }> {
    return this.request("GET", "/v1/sessions");
  }

  getSession(id: string): Promise<SessionView> {
    return this.request("GET", `/v1/sessions/${id}`);
  }

  getLogs(id: string): Promise<{ session_id: string; points: MetricPointView[] }> {
    return this.request("GET", `/v1/sessions/${id}/logs`);
  }

  tune(id: string, hyperparams: Record<string, number | string>): Promise<SessionView> {
    return this.request("POST", `/v1/sessions/${id}/tune`, { hyperparams });
  }

  infer(id: string, inputText: string, checkpoint: string | number = "latest"): Promise<InferResult> {
    const input_b64 = btoa(unescape(encodeURIComponent(inputText)));
    return this.request("POST", `/v1/sessions/${id}/infer`, { input_b64, checkpoint });
  }

  listDatasets(): Promise<{ datasets: DatasetView[] }> {
    return this.request("GET", "/v1/datasets");
  }

  getBoard(name: string, version: number): Promise<BoardView> {
    return this.request("GET", `/v1/datasets/${name}/${version}/board`);
  }
}

export interface StreamHandle {
  close(): void;
}

// Live event stream with automatic reconnect. The server replays its recent
// tail on every attach, so reconnecting is lossless for the chart as long as
// the consumer applies events idempotently (the store does).
export function openEventStream(
  sessionId: string,
  onEvent: (ev: StreamEvent) => void,
  makeSource: EventSourceFactory,
  reconnectDelayMs = 1000,
): StreamHandle {
  let source: EventSourceLike | null = null;
  let closed = false;
  let timer: ReturnType<typeof setTimeout> | null = null;

  const connect = () => {
    if (closed) return;
    source = makeSource(`/v1/sessions/${sessionId}/events`);
    source.onmessage = (ev) => {
      const event = JSON.parse(ev.data) as StreamEvent;
      onEvent(event);
      if (event.type === "end") {
        closed = true;
        source?.close();
      }
    };
    source.onerror = () => {
      source?.close();
      if (!closed) timer = setTimeout(connect, reconnectDelayMs);
    };
  };
  connect();
  return {
    close() {
      closed = true;
      if (timer !== null) clearTimeout(timer);
      source?.close();
    },
  };
}
