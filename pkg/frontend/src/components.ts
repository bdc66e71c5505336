// DOM rendering for the two panels: the current query's candidate cards
// and the incumbent progress strip.

import type { IncumbentEntry } from "./api";
import { present, sparklinePath } from "./presenters";
import type { PresenterKind } from "./presenters";
import type { SessionViewModel, ViewState } from "./viewmodel";

function clear(el: HTMLElement): void {
  while (el.firstChild) el.removeChild(el.firstChild);
}

/** q clickable cards; q = 2 side by side, larger q wraps into a grid. */
export function renderQuery(
  container: HTMLElement,
  state: ViewState,
  vm: SessionViewModel,
  presenter: PresenterKind,
): void {
  clear(container);

  if (state.banner) {
    const banner = document.createElement("div");
    banner.className = `banner banner-${state.phase}`;
    banner.textContent = state.banner;
    container.appendChild(banner);
  }

  if (!state.query || !state.domain) return;

  const grid = document.createElement("div");
  grid.className = "query-grid";
  grid.style.gridTemplateColumns = `repeat(${Math.min(state.query.length, 2)}, 1fr)`;

  const disabled = state.phase !== "awaiting";
  state.query.forEach((point, index) => {
    const card = document.createElement("button");
    card.className = "candidate-card";
    card.dataset.index = String(index);
    card.disabled = disabled;

    const view = present(point, state.domain!, presenter);
    if (view.color) {
      const swatch = document.createElement("div");
      swatch.className = "swatch";
      swatch.style.backgroundColor = view.color;
      card.appendChild(swatch);
    }
    if (view.marker) {
      const plot = document.createElement("div");
      plot.className = "scatter";
      const dot = document.createElement("div");
      dot.className = "scatter-dot";
      dot.style.left = `${(view.marker.x * 100).toFixed(1)}%`;
      dot.style.bottom = `${(view.marker.y * 100).toFixed(1)}%`;
      plot.appendChild(dot);
      card.appendChild(plot);
    }
    const label = document.createElement("div");
    label.className = "card-values";
    for (const line of view.values ?? []) {
      const row = document.createElement("div");
      row.textContent = line;
      label.appendChild(row);
    }
    card.appendChild(label);

    const caption = document.createElement("div");
    caption.className = "card-caption";
    caption.textContent = `option ${index + 1}`;
    card.appendChild(caption);

    card.addEventListener("click", () => {
      // the view model ignores clicks while a submission is in flight,
      // so a double-click races to a single accepted response
      void vm.choose(index);
    });
    grid.appendChild(card);
  });
  container.appendChild(grid);
}

/** Incumbent parameters, presenter rendering, and the mean sparkline. */
export function renderProgress(
  container: HTMLElement,
  state: ViewState,
  presenter: PresenterKind,
): void {
  clear(container);
  const latest: IncumbentEntry | undefined =
    state.incumbents[state.incumbents.length - 1];
  if (!latest || !state.domain) return;

  const header = document.createElement("div");
  header.className = "progress-header";
  header.textContent = `current best (revision ${latest.revision})`;
  if (state.responses === 0) {
    const badge = document.createElement("span");
    badge.className = "badge";
    badge.textContent = "no data yet";
    header.appendChild(badge);
  }
  container.appendChild(header);

  const view = present(latest.point, state.domain, presenter);
  if (view.color) {
    const swatch = document.createElement("div");
    swatch.className = "swatch incumbent-swatch";
    swatch.style.backgroundColor = view.color;
    container.appendChild(swatch);
  }
  const values = document.createElement("div");
  values.className = "incumbent-values";
  values.textContent = (view.values ?? []).join("  ");
  container.appendChild(values);

  const mean = document.createElement("div");
  mean.className = "incumbent-mean";
  mean.textContent = `predicted utility ${latest.mean.toPrecision(4)}`;
  container.appendChild(mean);

  const path = sparklinePath(state.incumbents.map((e) => e.mean));
  if (path) {
    const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    svg.setAttribute("viewBox", "0 0 160 40");
    svg.setAttribute("class", "sparkline");
    const line = document.createElementNS("http://www.w3.org/2000/svg", "path");
    line.setAttribute("d", path);
    line.setAttribute("fill", "none");
    line.setAttribute("stroke", "currentColor");
    svg.appendChild(line);
    container.appendChild(svg);
  }
}
