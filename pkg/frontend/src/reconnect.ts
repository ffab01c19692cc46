/** Exponential backoff schedule for WebSocket reconnection. */

export interface BackoffOptions {
  initialMs?: number;
  maxMs?: number;
  factor?: number;
}

export class Backoff {
  readonly initialMs: number;
  readonly maxMs: number;
  readonly factor: number;
  private attempt = 0;

  constructor(options: BackoffOptions = {}) {
    this.initialMs = options.initialMs ?? 500;
    this.maxMs = options.maxMs ?? 10_000;
    this.factor = options.factor ?? 1.8;
  }

  /** Delay to wait before the next attempt (grows until maxMs). */
  nextDelay(): number {
    const delay = Math.min(
      this.initialMs * this.factor ** this.attempt,
      this.maxMs,
    );
    this.attempt += 1;
    return Math.round(delay);
  }

  get attempts(): number {
    return this.attempt;
  }

  reset(): void {
    this.attempt = 0;
  }
}
