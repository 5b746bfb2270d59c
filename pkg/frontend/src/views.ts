// DOM construction for each screen. Render functions are pure given their
// inputs; event wiring happens in the page controllers (main.ts).

import type { BoardView, DatasetView, SessionView } from "./api.js";
import { renderChartSvg } from "./chart.js";
import type { DashboardStore } from "./store.js";

export function el(tag: string, className = "", html = ""): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (html) node.innerHTML = html;
  return node;
}

export function stateBadge(state: string): HTMLElement {
  const badge = el("span", `badge badge-${state.toLowerCase()}`);
  badge.textContent = state;
  return badge;
}

export function renderBanner(message: string): HTMLElement {
  const banner = el("div", "banner");
  banner.textContent = message;
  return banner;
}

export function renderSessionList(
  sessions: SessionView[],
  onOpen: (id: string) => void,
): HTMLElement {
  const root = el("div", "session-list");
  root.appendChild(el("h2", "", "Sessions"));
  const table = el("table");
  table.innerHTML =
    "<thead><tr><th>session</th><th>state</th><th>dataset</th><th>best</th></tr></thead>";
  const body = el("tbody");
  for (const session of sessions) {
    const row = el("tr", "session-row");
    const link = el("a", "session-link");
    link.textContent = session.session_id;
    link.setAttribute("href", `#/s/${session.session_id}`);
    link.addEventListener("click", (ev) => {
      ev.preventDefault();
      onOpen(session.session_id);
    });
    const idCell = el("td");
    idCell.appendChild(link);
    row.appendChild(idCell);
    const stateCell = el("td");
    stateCell.appendChild(stateBadge(session.state));
    row.appendChild(stateCell);
    row.appendChild(el("td", "", session.dataset));
    row.appendChild(el("td", "", session.best ? session.best.value.toPrecision(4) : "-"));
    body.appendChild(row);
  }
  table.appendChild(body);
  root.appendChild(table);
  return root;
}

export function renderChartSection(store: DashboardStore, metric: string): HTMLElement {
  const section = el("section", "chart-section");
  const points = store.points(metric);
  section.appendChild(el("h3", "", `${metric} (${points.length} points)`));
  const holder = el("div", "chart-holder");
  holder.innerHTML = points.length
    ? renderChartSvg(points)
    : '<p class="empty">no points yet</p>';
  section.appendChild(holder);
  return section;
}

export function renderHistory(doc: SessionView): HTMLElement {
  const section = el("section", "history");
  section.appendChild(el("h3", "", "History"));
  const list = el("ul", "history-list");
  for (const entry of doc.history ?? []) {
    const item = el("li", `history-${entry.event.toLowerCase()}`);
    item.textContent = `${entry.event}${entry.detail ? `: ${entry.detail}` : ""}`;
    list.appendChild(item);
  }
  section.appendChild(list);
  return section;
}

export function renderTuneForm(
  doc: SessionView,
  onSubmit: (hp: Record<string, number | string>) => void,
): HTMLElement {
  const section = el("section", "tune");
  section.appendChild(el("h3", "", "Tune hyperparameters"));
  const form = el("form", "tune-form") as HTMLFormElement;
  for (const [key, value] of Object.entries(doc.hyperparams)) {
    const label = el("label", "", `${key} `);
    const input = el("input") as HTMLInputElement;
    input.name = key;
    input.value = String(value);
    label.appendChild(input);
    form.appendChild(label);
  }
  const submit = el("button", "", "apply") as HTMLButtonElement;
  submit.type = "submit";
  form.appendChild(submit);
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const changed: Record<string, number | string> = {};
    for (const [key, original] of Object.entries(doc.hyperparams)) {
      const input = form.querySelector(`input[name="${key}"]`) as HTMLInputElement;
      if (input.value !== String(original)) {
        const asNumber = Number(input.value);
        changed[key] = Number.isFinite(asNumber) && input.value.trim() !== ""
          ? asNumber
          : input.value;
      }
    }
    onSubmit(changed);
  });
  section.appendChild(form);
  return section;
}

export function renderInferPanel(onInfer: (text: string) => void): HTMLElement {
  const section = el("section", "infer");
  section.appendChild(el("h3", "", "Try the model"));
  const input = el("textarea", "infer-input") as HTMLTextAreaElement;
  input.rows = 3;
  input.placeholder = "type input bytes; prediction updates live";
  input.addEventListener("input", () => onInfer(input.value));
  section.appendChild(input);
  section.appendChild(el("div", "infer-result"));
  return section;
}

export function renderBoard(board: BoardView): HTMLElement {
  const root = el("div", "board");
  root.appendChild(el("h2", "", `Leaderboard: ${board.dataset} (${board.metric}, ${board.direction})`));
  const table = el("table");
  table.innerHTML =
    "<thead><tr><th>rank</th><th>session</th><th>user</th><th>value</th></tr></thead>";
  const body = el("tbody");
  for (const entry of board.entries) {
    const row = el("tr");
    row.appendChild(el("td", "", String(entry.rank)));
    row.appendChild(el("td", "", entry.session_id));
    row.appendChild(el("td", "", entry.user));
    row.appendChild(el("td", "", entry.value.toPrecision(6)));
    body.appendChild(row);
  }
  table.appendChild(body);
  root.appendChild(table);
  return root;
}

export function renderDatasetList(
  datasets: DatasetView[],
  onBoard: (name: string, version: number) => void,
): HTMLElement {
  const root = el("div", "datasets");
  root.appendChild(el("h2", "", "Datasets"));
  const list = el("ul");
  for (const ds of datasets) {
    const item = el("li");
    item.textContent = `${ds.ref} (${ds.files} files) `;
    if (ds.board) {
      const link = el("a", "board-link");
      link.textContent = `board: ${ds.board.metric}`;
      link.setAttribute("href", `#/board/${ds.name}/${ds.version}`);
      link.addEventListener("click", (ev) => {
        ev.preventDefault();
        onBoard(ds.name, ds.version);
      });
      item.appendChild(link);
    }
    list.appendChild(item);
  }
  root.appendChild(list);
  return root;
}
