/** Latest-wins scheduling for slider-driven requests: trailing-edge debounce
 * for event bursts, plus an abort gate so at most one transfer is in flight
 * and a superseded response is never displayed. */

export interface Debounced<A extends unknown[]> {
  call(...args: A): void;
  cancel(): void;
}

/** Trailing-edge debounce; only the last call within `waitMs` fires. */
export function debounceLatest<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  return {
    call(...args: A) {
      if (timer !== null) clearTimeout(timer);
      timer = setTimeout(() => {
        timer = null;
        fn(...args);
      }, waitMs);
    },
    cancel() {
      if (timer !== null) clearTimeout(timer);
      timer = null;
    },
  };
}

/** Runs async tasks so that starting a new one aborts the previous one.
 * Superseded tasks resolve to null instead of surfacing stale results. */
export class LatestWins {
  private current: AbortController | null = null;

  get inFlight(): boolean {
    return this.current !== null;
  }

  async run<T>(task: (signal: AbortSignal) => Promise<T>): Promise<T | null> {
    this.current?.abort();
    const controller = new AbortController();
    this.current = controller;
    try {
      const result = await task(controller.signal);
      return controller.signal.aborted ? null : result;
    } catch (err) {
      if (controller.signal.aborted) return null;
      throw err;
    } finally {
      if (this.current === controller) this.current = null;
    }
  }
}
