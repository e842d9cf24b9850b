/**
 * Serialized submission queue: every label mutation goes through here.
 *
 * Submissions run strictly one at a time in FIFO order.  A repeat enqueue
 * for a query that is already waiting or in flight is dropped (rapid
 * duplicate clicks spend nothing).  Retryable failures — transport errors
 * and the service's "busy" phase — put the submission back at the head and
 * retry after a delay, so an answer is never silently lost; definitive
 * server rejections are reported and not retried.
 */

import type { LabelAck } from "./api.js";
import { ApiError, isRetryable } from "./api.js";
import type { Submission } from "./cards.js";

export interface QueueEvents {
  /** Server acknowledged the submission (accepted or duplicate). */
  onAck?(submission: Submission, ack: LabelAck): void;
  /** Server definitively rejected the submission; it will not be retried. */
  onReject?(submission: Submission, error: ApiError): void;
  /** Submission will be retried after the delay (transport failure / busy). */
  onRetry?(submission: Submission, error: Error, attempt: number): void;
  /** The queue just drained. */
  onIdle?(): void;
}

export class SubmissionQueue {
  private readonly items: Submission[] = [];
  private readonly queuedQueries = new Set<string>();
  private inFlight = false;
  private retryAttempt = 0;
  private waiters: (() => void)[] = [];

  constructor(
    private readonly send: (submission: Submission) => Promise<LabelAck>,
    private readonly events: QueueEvents = {},
    private readonly retryDelayMs = 750,
  ) {}

  /** Number of submissions waiting or in flight. */
  get pending(): number {
    return this.items.length + (this.inFlight ? 1 : 0);
  }

  get idle(): boolean {
    return this.pending === 0;
  }

  /** True while the last failure is being retried. */
  get retrying(): boolean {
    return this.retryAttempt > 0;
  }

  /**
   * Queue a submission.  Returns false (and queues nothing) when the same
   * query is already waiting or in flight — the duplicate-click guard.
   */
  enqueue(submission: Submission): boolean {
    if (this.queuedQueries.has(submission.query)) {
      return false;
    }
    this.queuedQueries.add(submission.query);
    this.items.push(submission);
    void this.pump();
    return true;
  }

  /** Resolves once the queue is idle (immediately if it already is). */
  whenIdle(): Promise<void> {
    if (this.idle) return Promise.resolve();
    return new Promise((resolve) => this.waiters.push(resolve));
  }

  private async pump(): Promise<void> {
    if (this.inFlight) return;
    const submission = this.items.shift();
    if (!submission) {
      this.notifyIdle();
      return;
    }
    this.inFlight = true;
    try {
      const ack = await this.send(submission);
      this.retryAttempt = 0;
      this.queuedQueries.delete(submission.query);
      this.inFlight = false;
      this.events.onAck?.(submission, ack);
    } catch (error) {
      if (isRetryable(error)) {
        // Back at the head: order is preserved and nothing is dropped.
        this.items.unshift(submission);
        this.retryAttempt += 1;
        this.inFlight = false;
        this.events.onRetry?.(submission, error as Error, this.retryAttempt);
        setTimeout(() => void this.pump(), this.retryDelayMs);
        return;
      }
      this.retryAttempt = 0;
      this.queuedQueries.delete(submission.query);
      this.inFlight = false;
      if (error instanceof ApiError) {
        this.events.onReject?.(submission, error);
      } else {
        throw error;
      }
    }
    void this.pump();
  }

  private notifyIdle(): void {
    const waiters = this.waiters;
    this.waiters = [];
    for (const resolve of waiters) resolve();
    this.events.onIdle?.();
  }
}
