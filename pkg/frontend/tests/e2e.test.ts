// @vitest-environment happy-dom
//
// End-to-end: a scripted browser session against the real service.
// Twenty responses reach the server; two of them are injected behind the
// UI's back so its next click hits a revision conflict, which must be
// surfaced and recovered. The incumbent shown at the end must equal the
// recommendation endpoint's answer.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { SessionApi } from "../src/api";
import { renderProgress, renderQuery } from "../src/components";
import { SessionViewModel } from "../src/viewmodel";
import type { ViewState } from "../src/viewmodel";

const PORT = 8731 + Math.floor(Math.random() * 200);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;

async function waitForServer(timeoutMs = 60_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${BASE}/sessions/none`);
      if (res.status === 404) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error("service did not come up");
}

beforeAll(async () => {
  const dataDir = mkdtempSync(join(tmpdir(), "pbo-e2e-"));
  server = spawn(
    "python3",
    ["-m", "prefbo.cli", "serve", "--port", String(PORT), "--data-dir", dataDir],
    { stdio: "ignore" },
  );
  await waitForServer();
}, 90_000);

afterAll(() => {
  server?.kill();
});

describe("live session through the DOM", () => {
  it(
    "runs 20 responses with two injected conflicts and agrees on the incumbent",
    async () => {
      const api = new SessionApi(BASE);
      const vm = new SessionViewModel(api);
      const queryPanel = document.createElement("div");
      const progressPanel = document.createElement("div");
      document.body.appendChild(queryPanel);
      document.body.appendChild(progressPanel);

      let latest: ViewState = vm.current;
      vm.subscribe((state) => {
        latest = state;
        renderQuery(queryPanel, state, vm, "swatch");
        renderProgress(progressPanel, state, "swatch");
      });

      await vm.start(
        { kind: "box", lower: [0, 0], upper: [1, 1] },
        2,
        "qeubo",
        12345,
      );
      expect(latest.phase).toBe("awaiting");

      // deterministic decision-maker over the 2-d box
      const utility = (x: number[]) =>
        -((x[0] - 0.3) ** 2) - (x[1] - 0.7) ** 2;

      const waitFor = async (pred: () => boolean, ms = 60_000) => {
        const deadline = Date.now() + ms;
        while (!pred()) {
          if (Date.now() > deadline) throw new Error("timed out");
          await new Promise((r) => setTimeout(r, 50));
        }
      };

      let conflictsSeen = 0;
      const conflictAt = new Set([7, 14]);
      while (latest.revision < 20) {
        const before = latest.revision;
        if (conflictAt.has(before) && conflictsSeen < 2) {
          // another client answers first; our next click must conflict
          conflictAt.delete(before);
          await api.submitResponse(latest.sessionId!, before, 0);
          const banners: (string | null)[] = [];
          const unsub = vm.subscribe((s) => banners.push(s.banner));
          const best = latest.query!.map(utility);
          const card = queryPanel.querySelectorAll<HTMLButtonElement>(
            "button.candidate-card",
          )[best[0] >= best[1] ? 0 : 1];
          card.click();
          await waitFor(() => latest.revision > before && latest.phase === "awaiting");
          unsub();
          expect(
            banners.some((b) => b && b.includes("session updated elsewhere")),
          ).toBe(true);
          conflictsSeen += 1;
          continue;
        }
        const values = latest.query!.map(utility);
        const index = values[0] >= values[1] ? 0 : 1;
        const card = queryPanel.querySelectorAll<HTMLButtonElement>(
          "button.candidate-card",
        )[index];
        expect(card).toBeDefined();
        card.click();
        await waitFor(() => latest.revision === before + 1);
      }

      expect(conflictsSeen).toBe(2);
      expect(latest.revision).toBe(20);

      // the incumbent shown equals the recommendation endpoint's answer
      const recommendation = await api.getRecommendation(latest.sessionId!);
      const shown = latest.incumbents[latest.incumbents.length - 1];
      expect(shown.point).toEqual(recommendation.point);
      expect(shown.mean).toBeCloseTo(recommendation.mean, 12);
      const meanText = progressPanel.querySelector(".incumbent-mean")!.textContent!;
      expect(meanText).toContain(recommendation.mean.toPrecision(4));
    },
    300_000,
  );
});
