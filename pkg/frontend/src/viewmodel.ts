// Session view model: the single mutable state the UI renders from.
//
// Revision-gated: exactly one submission may be in flight, always carrying
// the last server-acknowledged revision. A conflict (the session moved on
// without us) surfaces as a banner and triggers rehydration from
// GET /sessions/{id}; nothing is mutated optimistically.

import { ServiceError, SessionApi } from "./api";
import type { IncumbentEntry, SessionState } from "./api";

export type Phase = "idle" | "awaiting" | "submitting" | "conflict" | "offline";

export interface ViewState {
  sessionId: string | null;
  revision: number;
  phase: Phase;
  query: number[][] | null;
  incumbents: IncumbentEntry[];
  responses: number;
  banner: string | null;
  q: number;
  domain: SessionState["domain"] | null;
}

type Listener = (state: ViewState) => void;

export class SessionViewModel {
  private state: ViewState = {
    sessionId: null,
    revision: -1,
    phase: "idle",
    query: null,
    incumbents: [],
    responses: 0,
    banner: null,
    q: 2,
    domain: null,
  };
  private listeners: Listener[] = [];
  private inFlight = false;

  constructor(private readonly api: SessionApi) {}

  get current(): ViewState {
    return { ...this.state, incumbents: [...this.state.incumbents] };
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    listener(this.current);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(patch: Partial<ViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) listener(this.current);
  }

  async start(domain: SessionState["domain"], q: number, algo: string, seed: number) {
    const created = await this.api.createSession({ domain, q, algo, seed });
    this.update({
      sessionId: created.session_id,
      revision: created.revision,
      phase: "awaiting",
      query: created.query,
      incumbents: [
        { revision: created.revision, point: created.incumbent, mean: created.incumbent_mean },
      ],
      responses: 0,
      banner: null,
      q,
      domain,
    });
  }

  async attach(sessionId: string) {
    const state = await this.api.getState(sessionId);
    this.hydrate(state);
  }

  private hydrate(state: SessionState) {
    this.update({
      sessionId: state.session_id,
      revision: state.revision,
      phase: state.status === "awaiting-response" ? "awaiting" : "idle",
      query: state.query,
      incumbents: state.incumbents,
      responses: state.responses.length,
      q: state.q,
      domain: state.domain,
      banner: null,
    });
  }

  /** Submit the clicked candidate. Ignored unless awaiting with no submission in flight. */
  async choose(index: number): Promise<void> {
    const { sessionId, revision, phase, q } = this.state;
    if (!sessionId || phase !== "awaiting" || this.inFlight) return;
    if (index < 0 || index >= q) return;
    this.inFlight = true;
    this.update({ phase: "submitting" });
    try {
      const result = await this.api.submitResponse(sessionId, revision, index);
      this.update({
        revision: result.revision,
        phase: "awaiting",
        query: result.query,
        incumbents: [
          ...this.state.incumbents,
          { revision: result.revision, point: result.incumbent, mean: result.incumbent_mean },
        ],
        responses: this.state.responses + 1,
        banner: null,
      });
    } catch (err) {
      if (err instanceof ServiceError && err.isRevisionConflict) {
        this.update({
          phase: "conflict",
          banner: "session updated elsewhere — reloading",
        });
        const state = await this.api.getState(sessionId);
        this.hydrate(state);
      } else {
        this.update({ phase: "offline", banner: "server unreachable — input disabled" });
      }
    } finally {
      this.inFlight = false;
    }
  }

  /** Poll current server state (1s cadence from the app shell). */
  async refresh(): Promise<void> {
    const { sessionId, phase } = this.state;
    if (!sessionId || phase === "submitting" || this.inFlight) return;
    try {
      const state = await this.api.getState(sessionId);
      if (state.revision !== this.state.revision || phase === "offline") {
        this.hydrate(state);
      }
    } catch {
      this.update({ phase: "offline", banner: "server unreachable — input disabled" });
    }
  }
}
