/**
 * Client-side view model for one pending query.
 *
 * A card is always in exactly one of three states — unanswered, or carrying
 * a candidate pick, or carrying a bachelor mark — and a carried answer is
 * either pending (optimistically applied, submission in flight) or settled
 * (acknowledged by the server).  Illegal transitions throw CardStateError
 * instead of silently double-answering.
 */

import type { Candidate, ContextEdge, QueryPayload } from "./api.js";
import { BACHELOR } from "./api.js";

export class CardStateError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "CardStateError";
  }
}

export type Selection =
  | { kind: "unanswered" }
  | { kind: "candidate"; uri: string; pending: boolean }
  | { kind: "bachelor"; pending: boolean };

export interface Submission {
  query: string;
  outcome: string;
}

/** All scores in the UI render with exactly three decimals. */
export function formatScore(value: number | null | undefined): string {
  return value === null || value === undefined ? "—" : value.toFixed(3);
}

export class QueryCard {
  /** Candidates stay in payload order; rank is 1-based payload position. */
  readonly candidates: readonly Candidate[];
  readonly disabledCandidates = new Set<string>();
  private selection: Selection = { kind: "unanswered" };

  constructor(
    readonly uri: string,
    readonly entityId: number,
    readonly acquisitionScore: number,
    readonly context: readonly ContextEdge[],
    candidates: readonly Candidate[],
  ) {
    this.candidates = [...candidates];
  }

  static fromPayload(payload: QueryPayload): QueryCard {
    const card = new QueryCard(
      payload.entity.uri,
      payload.entity.id,
      payload.acquisition_score,
      payload.context,
      payload.candidates,
    );
    if (payload.answered) {
      card.selection =
        payload.answered.outcome === "bachelor"
          ? { kind: "bachelor", pending: false }
          : { kind: "candidate", uri: payload.answered.counterpart ?? "", pending: false };
    }
    return card;
  }

  get selected(): Selection {
    return this.selection;
  }

  get state(): "unanswered" | "pending" | "answered" {
    if (this.selection.kind === "unanswered") return "unanswered";
    return this.selection.pending ? "pending" : "answered";
  }

  rankOf(uri: string): number | null {
    const index = this.candidates.findIndex((c) => c.uri === uri);
    return index < 0 ? null : index + 1;
  }

  candidateAtRank(rank: number): Candidate | null {
    return this.candidates[rank - 1] ?? null;
  }

  /**
   * Optimistically record a counterpart pick and return the submission to
   * enqueue.  Any KG2 uri is allowed (search results reach beyond the
   * ranked shortlist), except candidates disabled by an earlier conflict.
   */
  chooseCandidate(uri: string): Submission {
    this.assertUnanswered();
    if (this.disabledCandidates.has(uri)) {
      throw new CardStateError(`candidate ${uri} is disabled on this card`);
    }
    this.selection = { kind: "candidate", uri, pending: true };
    return { query: this.uri, outcome: uri };
  }

  /** Optimistically record a bachelor mark and return the submission. */
  markBachelor(): Submission {
    this.assertUnanswered();
    this.selection = { kind: "bachelor", pending: true };
    return { query: this.uri, outcome: BACHELOR };
  }

  /** Server acknowledged the pending answer. */
  settle(): void {
    if (this.selection.kind === "unanswered" || !this.selection.pending) {
      throw new CardStateError(`no pending answer to settle on ${this.uri}`);
    }
    this.selection = { ...this.selection, pending: false };
  }

  /**
   * Server rejected the pending answer: reopen the card, optionally
   * disabling the candidate that caused a one-to-one violation.
   */
  reopen(disableUri?: string): void {
    if (this.selection.kind === "unanswered") {
      throw new CardStateError(`card ${this.uri} is not awaiting an answer`);
    }
    if (disableUri !== undefined) {
      this.disabledCandidates.add(disableUri);
    }
    this.selection = { kind: "unanswered" };
  }

  private assertUnanswered(): void {
    if (this.selection.kind !== "unanswered") {
      throw new CardStateError(`card ${this.uri} already carries an answer`);
    }
  }
}

/** Cards in exactly the order the service returned them. */
export function buildCards(payloads: readonly QueryPayload[]): QueryCard[] {
  return payloads.map((p) => QueryCard.fromPayload(p));
}
