// App shell: wire the view model to the two panels and poll at 1s.

import { SessionApi } from "./api";
import { renderProgress, renderQuery } from "./components";
import type { PresenterKind } from "./presenters";
import { SessionViewModel } from "./viewmodel";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

export async function boot(root: HTMLElement): Promise<SessionViewModel> {
  const server = param("server", "");
  const presenter = param("presenter", "swatch") as PresenterKind;
  const api = new SessionApi(server);
  const vm = new SessionViewModel(api);

  root.innerHTML = `
    <header><h1>preference session</h1></header>
    <main>
      <section id="query-panel"></section>
      <aside id="progress-panel"></aside>
    </main>`;
  const queryPanel = root.querySelector<HTMLElement>("#query-panel")!;
  const progressPanel = root.querySelector<HTMLElement>("#progress-panel")!;

  vm.subscribe((state) => {
    renderQuery(queryPanel, state, vm, presenter);
    renderProgress(progressPanel, state, presenter);
  });

  const sessionId = param("session", "");
  if (sessionId) {
    await vm.attach(sessionId);
  } else {
    const dim = Number(param("dim", "3"));
    await vm.start(
      { kind: "box", lower: Array(dim).fill(0), upper: Array(dim).fill(1) },
      Number(param("q", "2")),
      param("algo", "qeubo"),
      Number(param("seed", String(Math.floor(Math.random() * 1e9)))),
    );
  }

  window.setInterval(() => void vm.refresh(), 1000);
  return vm;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void boot(document.getElementById("app")!);
}
