// Service access: a small transport abstraction (so tests can substitute a
// scripted fake) plus the controller that owns the view model. User actions
// are fire-and-confirm; the view only changes when service output arrives.

import type { PersonasFile, StateSnapshot, StreamFrame, TreeDoc } from "./types";
import {
  applyFrame,
  ackEnabled,
  initialViewModel,
  markPending,
  withConnection,
  withPersonas,
  withToast,
  withTree,
  withoutSession,
  type ConsoleViewModel,
} from "./viewmodel";

export interface PostResult {
  status: number;
  body: unknown;
}

export interface Transport {
  /** GET a JSON endpoint; rejects on network failure or non-2xx status. */
  getJson(path: string): Promise<unknown>;
  /** POST JSON; resolves with status and parsed body even on 4xx. */
  postJson(path: string, body: unknown): Promise<PostResult>;
  /**
   * Open the event stream. onFrame receives each data payload string,
   * onClose fires once when the stream ends (with an error if abnormal).
   * Returns a cancel function.
   */
  openStream(
    path: string,
    onFrame: (data: string) => void,
    onClose: (err?: unknown) => void,
  ): () => void;
}

export class HttpError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

// ---------------------------------------------------------------------------
// Live transport (fetch + SSE over a streaming fetch)
// ---------------------------------------------------------------------------

export function liveTransport(baseUrl = ""): Transport {
  return {
    async getJson(path: string): Promise<unknown> {
      const res = await fetch(baseUrl + path, { headers: { accept: "application/json" } });
      if (!res.ok) throw new HttpError(res.status, `${path}: ${res.status}`);
      return res.json();
    },

    async postJson(path: string, body: unknown): Promise<PostResult> {
      const res = await fetch(baseUrl + path, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
      let parsed: unknown = null;
      try {
        parsed = await res.json();
      } catch {
        // non-JSON error body; status alone is enough
      }
      return { status: res.status, body: parsed };
    },

    openStream(path, onFrame, onClose) {
      const abort = new AbortController();
      (async () => {
        const res = await fetch(baseUrl + path, {
          headers: { accept: "text/event-stream" },
          signal: abort.signal,
        });
        if (!res.ok || res.body === null) {
          throw new HttpError(res.status, `${path}: ${res.status}`);
        }
        const reader = res.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          buffer += decoder.decode(value, { stream: true });
          let cut: number;
          while ((cut = buffer.indexOf("\n\n")) >= 0) {
            const chunk = buffer.slice(0, cut);
            buffer = buffer.slice(cut + 2);
            const data = chunk
              .split("\n")
              .filter((line) => line.startsWith("data:"))
              .map((line) => line.slice(5).trimStart())
              .join("\n");
            if (data !== "") onFrame(data);
          }
        }
      })().then(
        () => onClose(),
        (err) => onClose(abort.signal.aborted ? undefined : err),
      );
      return () => abort.abort();
    },
  };
}

// ---------------------------------------------------------------------------
// Controller
// ---------------------------------------------------------------------------

function diagnosticOf(body: unknown): string {
  if (typeof body === "object" && body !== null && "detail" in body) {
    return String((body as { detail: unknown }).detail);
  }
  return JSON.stringify(body);
}

export interface ControllerOptions {
  /** Base delay before a stream reconnect attempt; doubles up to 8x. */
  retryDelayMs?: number;
}

export type Listener = (vm: ConsoleViewModel) => void;

export class ConsoleController {
  vm: ConsoleViewModel = initialViewModel();

  private stopStream: (() => void) | null = null;
  private disposed = false;
  private retryDelayMs: number;
  /** Bumped on every (re)subscribe so a cancelled stream's close is inert. */
  private streamEpoch = 0;

  constructor(
    private transport: Transport,
    private listener: Listener,
    options: ControllerOptions = {},
  ) {
    this.retryDelayMs = options.retryDelayMs ?? 500;
  }

  private update(next: ConsoleViewModel): void {
    this.vm = next;
    this.listener(next);
  }

  /** Fetch roster and tree; resume and follow a session already running. */
  async connect(): Promise<void> {
    this.update(withConnection(this.vm, "connecting"));
    const personas = (await this.transport.getJson("/personas")) as PersonasFile;
    const tree = (await this.transport.getJson("/tree")) as TreeDoc;
    this.update(withTree(withPersonas(this.vm, personas.personas), tree));
    try {
      const snap = (await this.transport.getJson("/state")) as StateSnapshot;
      this.update(applyFrame(this.vm, { type: "state", state: snap }));
      if (snap.phase === "running") this.subscribe();
    } catch (err) {
      if (!(err instanceof HttpError && err.status === 404)) throw err;
    }
    this.update(withConnection(this.vm, "live"));
  }

  async selectPersona(personaId: number): Promise<void> {
    const res = await this.transport.postJson("/session", { persona_id: personaId });
    if (res.status !== 201) {
      this.update(withToast(this.vm, diagnosticOf(res.body)));
      return;
    }
    this.update(applyFrame(this.vm, { type: "state", state: res.body as StateSnapshot }));
    this.subscribe();
  }

  async acknowledge(actionId: string): Promise<void> {
    await this.postInput("human_ack", actionId);
  }

  async fail(actionId: string): Promise<void> {
    await this.postInput("human_fail", actionId);
  }

  /** POST an operator input; the view advances only via the stream echo. */
  private async postInput(kind: string, actionId: string): Promise<void> {
    if (!ackEnabled(this.vm)) return;
    this.update(markPending(this.vm, actionId));
    const res = await this.transport.postJson("/event", { kind, action_id: actionId });
    if (res.status !== 202) {
      this.update(withToast(this.vm, diagnosticOf(res.body)));
    }
  }

  dispose(): void {
    this.disposed = true;
    this.stopStream?.();
    this.stopStream = null;
  }

  private subscribe(): void {
    const epoch = ++this.streamEpoch;
    this.stopStream?.();
    let sawTerminal = false;
    const stop = this.transport.openStream(
      "/events",
      (data) => {
        if (this.disposed || epoch !== this.streamEpoch) return;
        const frame = JSON.parse(data) as StreamFrame;
        this.update(applyFrame(this.vm, frame));
        if (frame.type === "state" && frame.state.phase !== "running") sawTerminal = true;
      },
      (err) => {
        if (this.disposed || epoch !== this.streamEpoch) return;
        if (sawTerminal || this.vm.session?.phase !== "running") {
          this.update(withConnection(this.vm, "live"));
          return;
        }
        void this.resubscribe(err);
      },
    );
    this.stopStream = stop;
  }

  /** Stream died mid-session: banner, re-fetch state, subscribe again. */
  private async resubscribe(_err: unknown): Promise<void> {
    let delay = this.retryDelayMs;
    this.update(withConnection(this.vm, "reconnecting"));
    while (!this.disposed) {
      await sleep(delay);
      delay = Math.min(delay * 2, this.retryDelayMs * 8);
      try {
        const snap = (await this.transport.getJson("/state")) as StateSnapshot;
        this.update(applyFrame(this.vm, { type: "state", state: snap }));
        this.update(withConnection(this.vm, "live"));
        if (snap.phase === "running") this.subscribe();
        return;
      } catch (err) {
        if (err instanceof HttpError && err.status === 404) {
          // Session gone while we were away; back to the roster.
          this.update(withConnection(withoutSession(this.vm), "live"));
          return;
        }
      }
    }
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
