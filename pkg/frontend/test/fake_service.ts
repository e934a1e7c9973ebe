// Scripted fake transport: tests decide exactly what the service returns and
// when each stream frame arrives, and every POST the console makes is
// recorded for inspection. Nothing advances unless a test pushes it.

import { HttpError, type PostResult, type Transport } from "../src/client";
import type { StreamFrame } from "../src/types";

export interface RecordedPost {
  path: string;
  body: unknown;
}

export class FakeService implements Transport {
  posts: RecordedPost[] = [];
  gets: string[] = [];
  streamOpens = 0;

  getRoutes = new Map<string, () => unknown>();
  postRoutes = new Map<string, (body: unknown) => PostResult>();

  private sink: ((data: string) => void) | null = null;
  private closer: ((err?: unknown) => void) | null = null;

  getJson(path: string): Promise<unknown> {
    this.gets.push(path);
    const handler = this.getRoutes.get(path);
    if (handler === undefined) {
      return Promise.reject(new HttpError(404, `${path}: 404`));
    }
    return Promise.resolve(handler());
  }

  postJson(path: string, body: unknown): Promise<PostResult> {
    this.posts.push({ path, body: structuredClone(body) });
    const handler = this.postRoutes.get(path);
    if (handler === undefined) {
      return Promise.resolve({ status: 404, body: { detail: `no route for ${path}` } });
    }
    return Promise.resolve(handler(body));
  }

  openStream(
    _path: string,
    onFrame: (data: string) => void,
    onClose: (err?: unknown) => void,
  ): () => void {
    this.streamOpens += 1;
    this.sink = onFrame;
    this.closer = onClose;
    return () => this.closeStream();
  }

  get streamOpen(): boolean {
    return this.sink !== null;
  }

  /** Deliver one stream frame to the console, exactly as SSE data would. */
  pushFrame(frame: StreamFrame): void {
    if (this.sink === null) throw new Error("no open stream to push to");
    this.sink(JSON.stringify(frame));
  }

  /** End the stream; pass an error to simulate an abnormal disconnect. */
  closeStream(err?: unknown): void {
    const close = this.closer;
    this.sink = null;
    this.closer = null;
    close?.(err);
  }
}
