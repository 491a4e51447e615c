import { ApiClient, ApiError } from "./api";
import type { ClientReviewItem, QueueStats, Verdict } from "./types";

export type Phase = "loading" | "reviewing" | "empty" | "error";

export interface SessionState {
  phase: Phase;
  item: ClientReviewItem | null;
  stats: QueueStats | null;
  queuedOffline: number;
  lastError: string | null;
}

interface QueuedSubmit {
  itemId: string;
  verdict: Verdict;
}

/**
 * Review flow state machine, DOM-free.
 *
 * One verdict POST per decision: the current item is locked the moment a
 * verdict is taken, so repeated keys are no-ops until the next item arrives.
 * Network failures queue the verdict locally and flush on reconnect; a 409
 * conflict means someone else resolved the item, so it is discarded.
 */
export class ReviewSession {
  private state: SessionState = {
    phase: "loading",
    item: null,
    stats: null,
    queuedOffline: 0,
    lastError: null,
  };
  private locked = false;
  private offlineQueue: QueuedSubmit[] = [];
  private listeners: Array<(s: SessionState) => void> = [];

  constructor(
    private readonly api: ApiClient,
    private readonly reviewer: string,
  ) {}

  onChange(listener: (s: SessionState) => void): void {
    this.listeners.push(listener);
  }

  getState(): SessionState {
    return { ...this.state };
  }

  private update(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch, queuedOffline: this.offlineQueue.length };
    for (const listener of this.listeners) listener(this.getState());
  }

  /** Flush queued offline verdicts; returns false if the network is still down. */
  private async flushQueue(): Promise<boolean> {
    while (this.offlineQueue.length > 0) {
      const next = this.offlineQueue[0];
      try {
        await this.api.submitVerdict(next.itemId, next.verdict, this.reviewer);
        this.offlineQueue.shift();
      } catch (err) {
        if (err instanceof ApiError) {
          // Resolved by someone else (or invalid): drop it, keep flushing.
          this.offlineQueue.shift();
        } else {
          return false; // still offline; keep the verdict queued
        }
      }
    }
    return true;
  }

  async loadNext(): Promise<void> {
    this.update({ phase: "loading", item: null, lastError: null });
    if (!(await this.flushQueue())) {
      this.update({ phase: "error", lastError: "offline: queued verdicts pending" });
      return;
    }
    try {
      const res = await this.api.fetchNext(this.reviewer);
      this.locked = false;
      if (res.item === null) {
        this.update({ phase: "empty", item: null, stats: res.stats });
      } else {
        this.update({ phase: "reviewing", item: res.item, stats: res.stats });
      }
    } catch (err) {
      this.update({ phase: "error", lastError: String(err) });
    }
  }

  /**
   * Take a verdict for the on-screen item. Returns true when the decision was
   * accepted (exactly one POST will result); false for ignored repeats.
   */
  async submit(verdict: Verdict): Promise<boolean> {
    if (this.state.phase !== "reviewing" || this.state.item === null || this.locked) {
      return false;
    }
    this.locked = true;
    const itemId = this.state.item.item_id;
    try {
      await this.api.submitVerdict(itemId, verdict, this.reviewer);
    } catch (err) {
      if (err instanceof ApiError && err.conflict) {
        // Someone else resolved it; discard and move on.
      } else if (err instanceof ApiError) {
        this.update({ lastError: `verdict rejected: ${err.message}` });
      } else {
        // Offline: keep the verdict, advance optimistically.
        this.offlineQueue.push({ itemId, verdict });
      }
    }
    await this.loadNext();
    return true;
  }

  async refreshStats(): Promise<void> {
    try {
      this.update({ stats: await this.api.fetchStats() });
    } catch {
      // stats are cosmetic; ignore transient failures
    }
  }

  queuedSubmits(): readonly QueuedSubmit[] {
    return [...this.offlineQueue];
  }
}
