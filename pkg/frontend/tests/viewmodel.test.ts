import { describe, expect, it } from "vitest";

import { SessionApi } from "../src/api";
import { SessionViewModel } from "../src/viewmodel";

// A scripted fake server: deterministic queries, revision-checked submits.
function fakeServer() {
  let revision = 0;
  let conflictOnce = false;
  let failNetwork = false;
  const incumbent = { point: [0.5, 0.5], mean: 0.1 };
  const queryFor = (rev: number) => [
    [0.1 + rev / 100, 0.2],
    [0.8, 0.9 - rev / 100],
  ];

  const fetchImpl = async (input: string, init?: RequestInit): Promise<Response> => {
    if (failNetwork) throw new Error("connection refused");
    const body = init?.body ? JSON.parse(init.body as string) : {};
    const reply = (status: number, payload: unknown) =>
      new Response(JSON.stringify(payload), { status });

    if (input.endsWith("/sessions") && init?.method === "POST") {
      return reply(200, {
        session_id: "s1",
        revision,
        query: queryFor(revision),
        incumbent: incumbent.point,
        incumbent_mean: incumbent.mean,
      });
    }
    if (input.endsWith("/responses")) {
      if (conflictOnce) {
        conflictOnce = false;
        return reply(409, { code: "revision-conflict", message: "stale" });
      }
      if (body.revision !== revision) {
        return reply(409, { code: "revision-conflict", message: "stale" });
      }
      revision += 1;
      return reply(200, {
        revision,
        query: queryFor(revision),
        incumbent: incumbent.point,
        incumbent_mean: incumbent.mean + revision / 10,
      });
    }
    if (input.endsWith("/sessions/s1")) {
      return reply(200, {
        session_id: "s1",
        revision,
        status: "awaiting-response",
        q: 2,
        algo: "qeubo",
        domain: { kind: "box", lower: [0, 0], upper: [1, 1] },
        query: queryFor(revision),
        responses: Array.from({ length: revision }, (_, i) => ({
          revision: i + 1,
          choice: 0,
          query: queryFor(i),
        })),
        incumbents: Array.from({ length: revision + 1 }, (_, i) => ({
          revision: i,
          point: incumbent.point,
          mean: incumbent.mean + i / 10,
        })),
      });
    }
    return reply(404, { code: "unknown-session", message: "nope" });
  };

  return {
    fetchImpl,
    bumpRevisionBehindClient: () => {
      revision += 1;
    },
    injectConflictOnce: () => {
      conflictOnce = true;
    },
    setNetworkDown: (down: boolean) => {
      failNetwork = down;
    },
    get revision() {
      return revision;
    },
  };
}

async function freshSession() {
  const server = fakeServer();
  const vm = new SessionViewModel(new SessionApi("http://test", server.fetchImpl));
  await vm.start({ kind: "box", lower: [0, 0], upper: [1, 1] }, 2, "qeubo", 0);
  return { server, vm };
}

describe("SessionViewModel", () => {
  it("starts awaiting with the first query", async () => {
    const { vm } = await freshSession();
    const state = vm.current;
    expect(state.phase).toBe("awaiting");
    expect(state.query).toHaveLength(2);
    expect(state.revision).toBe(0);
  });

  it("advances the revision on an accepted choice", async () => {
    const { vm } = await freshSession();
    await vm.choose(1);
    const state = vm.current;
    expect(state.revision).toBe(1);
    expect(state.responses).toBe(1);
    expect(state.incumbents).toHaveLength(2);
  });

  it("ignores out-of-range and non-awaiting clicks", async () => {
    const { vm, server } = await freshSession();
    await vm.choose(5);
    expect(server.revision).toBe(0);
  });

  it("only one of two racing clicks submits", async () => {
    const { vm, server } = await freshSession();
    await Promise.all([vm.choose(0), vm.choose(1)]);
    expect(server.revision).toBe(1);
    expect(vm.current.responses).toBe(1);
  });

  it("surfaces a conflict banner and rehydrates", async () => {
    const { vm, server } = await freshSession();
    server.bumpRevisionBehindClient();
    await vm.choose(0);
    const state = vm.current;
    // rehydrated to the server's revision, input re-enabled
    expect(state.revision).toBe(server.revision);
    expect(state.phase).toBe("awaiting");
    expect(state.responses).toBe(server.revision);
  });

  it("shows the conflict banner before rehydration completes", async () => {
    const { vm, server } = await freshSession();
    server.injectConflictOnce();
    const phases: string[] = [];
    const banners: (string | null)[] = [];
    vm.subscribe((s) => {
      phases.push(s.phase);
      banners.push(s.banner);
    });
    await vm.choose(0);
    expect(phases).toContain("conflict");
    expect(banners).toContain("session updated elsewhere — reloading");
  });

  it("disables input while offline and recovers on refresh", async () => {
    const { vm, server } = await freshSession();
    server.setNetworkDown(true);
    await vm.choose(0);
    expect(vm.current.phase).toBe("offline");
    server.setNetworkDown(false);
    await vm.refresh();
    expect(vm.current.phase).toBe("awaiting");
  });

  it("never fabricates state: every number comes from the server", async () => {
    const { vm } = await freshSession();
    await vm.choose(0);
    const state = vm.current;
    // the fake server's incumbent mean at revision 1 is 0.1 + 1/10
    expect(state.incumbents[1].mean).toBeCloseTo(0.2, 12);
    expect(state.query![0][0]).toBeCloseTo(0.11, 12);
  });
});
