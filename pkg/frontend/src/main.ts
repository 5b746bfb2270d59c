// Page controllers and hash routing. The dashboard holds no authoritative
// state: a reload rebuilds everything from the API and the event stream.

import { Api, ApiError, domEventSource, openEventStream } from "./api.js";
import type { EventSourceFactory, StreamHandle } from "./api.js";
import { DashboardStore } from "./store.js";
import {
  el,
  renderBanner,
  renderBoard,
  renderChartSection,
  renderDatasetList,
  renderHistory,
  renderInferPanel,
  renderSessionList,
  renderTuneForm,
  stateBadge,
} from "./views.js";

export class DashboardPage {
  store = new DashboardStore();
  metric = "loss";
  private stream: StreamHandle | null = null;

  constructor(
    private root: HTMLElement,
    private api: Api,
    private sessionId: string,
    private makeSource: EventSourceFactory,
  ) {
    this.store.subscribe(() => this.render());
  }

  async open(): Promise<void> {
    try {
      const doc = await this.api.getSession(this.sessionId);
      const logs = await this.api.getLogs(this.sessionId);
      this.store.seedPoints(logs.points);
      this.store.setDoc(doc);
      this.stream = openEventStream(
        this.sessionId,
        (event) => this.store.applyEvent(event),
        this.makeSource,
      );
    } catch (err) {
      this.store.setError(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
    }
  }

  close(): void {
    this.stream?.close();
  }

  async submitTune(hyperparams: Record<string, number | string>): Promise<void> {
    try {
      this.store.setError(null);
      const doc = await this.api.tune(this.sessionId, hyperparams);
      this.store.setDoc(doc);
    } catch (err) {
      if (err instanceof ApiError) this.store.setError(`${err.code}: ${err.message}`);
      else throw err;
    }
  }

  async runInfer(text: string): Promise<void> {
    try {
      const result = await this.api.infer(this.sessionId, text);
      const target = this.root.querySelector(".infer-result");
      if (target) {
        target.textContent = `label ${result.label} · confidence ${result.confidence.toFixed(4)} (checkpoint @${result.checkpoint_step})`;
      }
    } catch (err) {
      const target = this.root.querySelector(".infer-result");
      if (target && err instanceof ApiError) target.textContent = `${err.code}: ${err.message}`;
    }
  }

  render(): void {
    const doc = this.store.doc;
    this.root.innerHTML = "";
    if (this.store.error) this.root.appendChild(renderBanner(this.store.error));
    if (!doc) return;
    const header = el("header", "dash-header");
    header.appendChild(el("h2", "", doc.session_id));
    header.appendChild(stateBadge(this.store.state || doc.state));
    this.root.appendChild(header);

    const picker = el("div", "metric-picker");
    for (const name of [...this.store.series.keys()].sort()) {
      const button = el("button", name === this.metric ? "active" : "") as HTMLButtonElement;
      button.textContent = name;
      button.addEventListener("click", () => {
        this.metric = name;
        this.render();
      });
      picker.appendChild(button);
    }
    this.root.appendChild(picker);
    this.root.appendChild(renderChartSection(this.store, this.metric));
    this.root.appendChild(renderTuneForm(doc, (hp) => void this.submitTune(hp)));
    this.root.appendChild(renderInferPanel((text) => void this.runInfer(text)));
    this.root.appendChild(renderHistory(doc));
  }
}

export class App {
  private page: DashboardPage | null = null;

  constructor(
    private root: HTMLElement,
    private api: Api = new Api(),
    private makeSource: EventSourceFactory = domEventSource,
  ) {}

  async route(hash: string): Promise<void> {
    this.page?.close();
    this.page = null;
    this.root.innerHTML = "";
    const parts = hash.replace(/^#\/?/, "").split("/").filter(Boolean);
    try {
      if (parts[0] === "s" && parts.length === 4) {
        const sessionId = parts.slice(1).join("/");
        this.page = new DashboardPage(this.root, this.api, sessionId, this.makeSource);
        await this.page.open();
      } else if (parts[0] === "board" && parts.length === 3) {
        const board = await this.api.getBoard(parts[1], Number(parts[2]));
        this.root.appendChild(renderBoard(board));
      } else if (parts[0] === "datasets") {
        const { datasets } = await this.api.listDatasets();
        this.root.appendChild(
          renderDatasetList(datasets, (name, version) => {
            location.hash = `#/board/${name}/${version}`;
          }),
        );
      } else {
        const { sessions } = await this.api.listSessions();
        this.root.appendChild(
          renderSessionList(sessions, (id) => {
            location.hash = `#/s/${id}`;
          }),
        );
      }
    } catch (err) {
      this.root.appendChild(
        renderBanner(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err)),
      );
    }
  }

  start(): void {
    window.addEventListener("hashchange", () => void this.route(location.hash));
    void this.route(location.hash);
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  new App(document.getElementById("app") as HTMLElement).start();
}
