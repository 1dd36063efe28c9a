// NDJSON stream client over fetch with automatic resume.
//
// The server replays from index 0 by default; after a disconnection the
// client reconnects with ?from=<next index> so no sample is ever lost or
// duplicated. Sample indexes are verified to be contiguous.

import type { SampleEvent, StreamEvent, SummaryEvent } from "./types.js";

export interface StreamCallbacks {
  onSample: (sample: SampleEvent) => void;
  onSummary?: (event: SummaryEvent) => void;
  onError?: (message: string) => void;
  onReconnect?: (attempt: number) => void;
}

export interface StreamOptions {
  /** base URL of the stream endpoint, without query parameters */
  url: string;
  /** maximum reconnect attempts after drops (default 10) */
  maxRetries?: number;
  /** delay between reconnects in ms (default 250) */
  retryDelayMs?: number;
  fetchImpl?: typeof fetch;
}

export function splitLines(buffer: string, chunk: string): [string, string[]] {
  const combined = buffer + chunk;
  const parts = combined.split("\n");
  const rest = parts.pop() ?? "";
  return [rest, parts.filter((p) => p.length > 0)];
}

export class RunStream {
  private nextIndex = 0;
  private closed = false;
  private retries = 0;
  readonly receivedIndexes: number[] = [];

  constructor(private options: StreamOptions, private callbacks: StreamCallbacks) {}

  get lastIndex(): number {
    return this.nextIndex - 1;
  }

  /** true iff every received sample index was contiguous from 0 */
  get contiguous(): boolean {
    return this.receivedIndexes.every((value, i) => value === i);
  }

  close(): void {
    this.closed = true;
  }

  async run(): Promise<void> {
    const fetchImpl = this.options.fetchImpl ?? fetch;
    const maxRetries = this.options.maxRetries ?? 10;
    const retryDelay = this.options.retryDelayMs ?? 250;

    while (!this.closed) {
      const url = `${this.options.url}?from=${this.nextIndex}`;
      let sawTerminal = false;
      try {
        const resp = await fetchImpl(url);
        if (!resp.ok || !resp.body) {
          throw new Error(`stream request failed: ${resp.status}`);
        }
        sawTerminal = await this.consume(resp.body);
      } catch (err) {
        if (this.closed) return;
        this.retries += 1;
        if (this.retries > maxRetries) {
          this.callbacks.onError?.(`stream lost after ${maxRetries} retries: ${err}`);
          return;
        }
        this.callbacks.onReconnect?.(this.retries);
        await new Promise((resolve) => setTimeout(resolve, retryDelay));
        continue;
      }
      if (sawTerminal || this.closed) return;
      // connection ended without a terminal event: resume
      this.retries += 1;
      if (this.retries > maxRetries) {
        this.callbacks.onError?.("stream ended repeatedly without summary");
        return;
      }
      this.callbacks.onReconnect?.(this.retries);
      await new Promise((resolve) => setTimeout(resolve, retryDelay));
    }
  }

  private async consume(body: ReadableStream<Uint8Array>): Promise<boolean> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    while (true) {
      const { done, value } = await reader.read();
      if (done) break;
      const [rest, lines] = splitLines(buffer, decoder.decode(value, { stream: true }));
      buffer = rest;
      for (const line of lines) {
        if (this.handleEvent(JSON.parse(line) as StreamEvent)) return true;
      }
    }
    if (buffer.trim().length > 0) {
      if (this.handleEvent(JSON.parse(buffer) as StreamEvent)) return true;
    }
    return false;
  }

  private handleEvent(event: StreamEvent): boolean {
    if (event.type === "sample") {
      if (event.index < this.nextIndex) return false; // replayed duplicate
      this.receivedIndexes.push(event.index);
      this.nextIndex = event.index + 1;
      this.callbacks.onSample(event);
      return false;
    }
    if (event.type === "summary") {
      this.callbacks.onSummary?.(event);
      return true;
    }
    this.callbacks.onError?.(event.error);
    return true;
  }
}
