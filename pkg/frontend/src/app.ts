/**
 * Annotation console: renders the pending query batch as interactive cards
 * and keeps the header counters in sync with the service.
 *
 * All mutations flow through one SubmissionQueue; every displayed number is
 * read from an API payload.  The app polls /api/state to drive the busy
 * banner while the engine retrains and refreshes the card list whenever a
 * new batch appears.
 */

import type { LabelAck, QueryPayload, SearchHit, StateView } from "./api.js";
import { ApiClient, ApiError, NetworkError } from "./api.js";
import type { Submission } from "./cards.js";
import { buildCards, formatScore, QueryCard } from "./cards.js";
import { routeKey } from "./keys.js";
import { SubmissionQueue } from "./queue.js";

type Child = Node | string;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: Child[] = [],
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  node.append(...children);
  return node;
}

export class App {
  private cards: QueryCard[] = [];
  private cardsIteration = -1;
  private state: StateView | null = null;
  private focusIndex = 0;
  private offline = false;
  private notice: string | null = null;
  private searchHits: SearchHit[] = [];
  private searchTerm = "";
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private searchTimer: ReturnType<typeof setTimeout> | null = null;
  readonly queue: SubmissionQueue;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
    private readonly pollMs = 1500,
  ) {
    this.queue = new SubmissionQueue((s) => this.api.submitLabel(s.query, s.outcome), {
      onAck: (s, ack) => this.handleAck(s, ack),
      onReject: (s, error) => this.handleReject(s, error),
      onRetry: () => {
        this.offline = true;
        this.render();
      },
    });
  }

  async start(): Promise<void> {
    document.addEventListener("keydown", (event) => this.handleKey(event));
    await this.refresh();
    this.pollTimer = setInterval(() => void this.refresh(), this.pollMs);
  }

  stop(): void {
    if (this.pollTimer) clearInterval(this.pollTimer);
  }

  private async refresh(): Promise<void> {
    try {
      const state = await this.api.state();
      this.offline = false;
      this.state = state;
      if (state.phase === "collecting" && state.iteration !== this.cardsIteration) {
        const payloads = await this.api.queries();
        this.installCards(payloads, state.iteration);
      } else if (state.phase !== "collecting" && this.cards.length) {
        this.cards = [];
        this.cardsIteration = -1;
      }
    } catch (error) {
      if (error instanceof NetworkError) {
        this.offline = true;
      } else {
        this.notice = error instanceof Error ? error.message : String(error);
      }
    }
    this.render();
  }

  private installCards(payloads: QueryPayload[], iteration: number): void {
    this.cards = buildCards(payloads);
    this.cardsIteration = iteration;
    this.focusIndex = Math.min(this.focusIndex, Math.max(0, this.cards.length - 1));
  }

  // -- submissions -----------------------------------------------------

  private submit(card: QueryCard, submission: Submission): void {
    if (!this.queue.enqueue(submission)) {
      // duplicate in flight: roll back the optimistic mark
      card.reopen();
    }
    this.render();
  }

  pickCandidate(card: QueryCard, uri: string): void {
    if (card.state !== "unanswered" || card.disabledCandidates.has(uri)) return;
    this.submit(card, card.chooseCandidate(uri));
  }

  markBachelor(card: QueryCard): void {
    if (card.state !== "unanswered") return;
    this.submit(card, card.markBachelor());
  }

  private cardOf(query: string): QueryCard | undefined {
    return this.cards.find((c) => c.uri === query);
  }

  private handleAck(submission: Submission, ack: LabelAck): void {
    const card = this.cardOf(submission.query);
    if (card && card.state === "pending") card.settle();
    this.notice = null; // an acknowledged answer clears stale error notices
    if (this.state) {
      // budget counters come from the server's acknowledgement
      this.state.remaining = ack.remaining;
      this.state.spent = this.state.budget - ack.remaining;
      this.state.pending = { total: ack.pending_total, answered: ack.pending_answered };
      if (ack.advancing) this.state.phase = "busy";
    }
    this.render();
  }

  private handleReject(submission: Submission, error: ApiError): void {
    const card = this.cardOf(submission.query);
    if (card && card.state === "pending") {
      // a one-to-one violation reopens the card with the candidate greyed out
      card.reopen(error.code === "one_to_one_violation" ? submission.outcome : undefined);
    }
    this.notice = `${submission.query}: ${error.message}`;
    this.render();
  }

  // -- keyboard --------------------------------------------------------

  private handleKey(event: KeyboardEvent): void {
    if (event.target instanceof HTMLInputElement) return;
    const action = routeKey(event.key);
    if (!action || !this.cards.length) return;
    event.preventDefault();
    const card = this.cards[this.focusIndex];
    switch (action.type) {
      case "next":
        this.focusIndex = Math.min(this.focusIndex + 1, this.cards.length - 1);
        break;
      case "prev":
        this.focusIndex = Math.max(this.focusIndex - 1, 0);
        break;
      case "pick": {
        const candidate = card?.candidateAtRank(action.rank);
        if (card && candidate) this.pickCandidate(card, candidate.uri);
        return;
      }
      case "bachelor":
        if (card) this.markBachelor(card);
        return;
    }
    this.render();
  }

  // -- search ----------------------------------------------------------

  private scheduleSearch(term: string): void {
    this.searchTerm = term;
    if (this.searchTimer) clearTimeout(this.searchTimer);
    if (!term) {
      this.searchHits = [];
      this.render();
      return;
    }
    this.searchTimer = setTimeout(() => void this.runSearch(term), 200);
  }

  private async runSearch(term: string): Promise<void> {
    try {
      this.searchHits = await this.api.search(term, 2);
    } catch {
      this.searchHits = [];
    }
    this.render();
  }

  // -- rendering -------------------------------------------------------

  render(): void {
    const next = el("div", { class: "console" }, [
      this.renderHeader(),
      ...this.renderBanners(),
      this.renderSearch(),
      this.renderCards(),
    ]);
    this.root.replaceChildren(next);
  }

  private renderHeader(): HTMLElement {
    const s = this.state;
    if (!s) return el("header", { class: "stats" }, ["connecting…"]);
    const last = s.last_record;
    const stat = (label: string, value: string) =>
      el("span", { class: "stat" }, [el("b", {}, [label]), " ", value]);
    return el("header", { class: "stats" }, [
      stat("strategy", s.strategy),
      stat("iteration", String(s.iteration)),
      stat("budget", `${s.spent}/${s.budget} spent, ${s.remaining} left`),
      stat("pool", String(s.pool_size)),
      stat("labelled", `${s.labelled_pos}+ / ${s.labelled_neg}−`),
      stat("hit@1", formatScore(last?.hit_at_1)),
      stat("micro-F1", formatScore(last?.recognizer_micro_f1)),
      el("span", { class: `phase phase-${s.phase}` }, [s.phase]),
    ]);
  }

  private renderBanners(): HTMLElement[] {
    const banners: HTMLElement[] = [];
    if (this.offline || this.queue.retrying) {
      banners.push(
        el("div", { class: "banner banner-offline", role: "alert" }, [
          "service unreachable — retrying, no answer is lost",
        ]),
      );
    }
    if (this.state?.phase === "busy") {
      banners.push(
        el("div", { class: "banner banner-busy" }, ["engine retraining — next batch shortly"]),
      );
    }
    if (this.state?.phase === "complete") {
      banners.push(el("div", { class: "banner banner-done" }, ["campaign complete — budget exhausted"]));
    }
    if (this.state?.error) {
      banners.push(el("div", { class: "banner banner-error" }, [this.state.error]));
    }
    if (this.notice) {
      banners.push(el("div", { class: "banner banner-notice" }, [this.notice]));
    }
    return banners;
  }

  private renderSearch(): HTMLElement {
    const input = el("input", {
      type: "search",
      placeholder: "search KG2 entities…",
      value: this.searchTerm,
    });
    input.addEventListener("input", () => this.scheduleSearch(input.value));
    const hits = this.searchHits.map((hit) => {
      const button = el(
        "button",
        { class: hit.consumed ? "hit consumed" : "hit", type: "button" },
        [hit.uri, hit.consumed ? " (taken)" : ""],
      );
      button.disabled = hit.consumed;
      button.addEventListener("click", () => {
        const card = this.cards[this.focusIndex];
        if (card) this.pickCandidate(card, hit.uri);
      });
      return el("li", {}, [button]);
    });
    return el("section", { class: "search" }, [input, el("ul", { class: "search-hits" }, hits)]);
  }

  private renderCards(): HTMLElement {
    if (!this.cards.length) {
      return el("main", { class: "cards empty" }, [
        el("p", {}, [this.state?.phase === "collecting" ? "no pending queries" : ""]),
      ]);
    }
    return el(
      "main",
      { class: "cards" },
      this.cards.map((card, index) => this.renderCard(card, index)),
    );
  }

  private renderCard(card: QueryCard, index: number): HTMLElement {
    const classes = ["card", `card-${card.state}`];
    if (index === this.focusIndex) classes.push("focused");

    const title = el("h2", {}, [
      card.uri,
      el("span", { class: "acq" }, [` acquisition ${formatScore(card.acquisitionScore)}`]),
    ]);

    const contextItems = card.context.map((edge) =>
      el("li", { class: `edge edge-${edge.direction}` }, [
        edge.direction === "out" ? `${edge.relation} → ` : `← ${edge.relation} `,
        el("span", { class: "neighbor" }, [edge.neighbor.uri]),
      ]),
    );

    const candidateButtons = card.candidates.map((candidate, rank) => {
      const chosen =
        card.selected.kind === "candidate" && card.selected.uri === candidate.uri;
      const button = el(
        "button",
        { class: chosen ? "candidate chosen" : "candidate", type: "button" },
        [`${rank + 1}. ${candidate.uri} `, el("span", { class: "score" }, [formatScore(candidate.score)])],
      );
      button.disabled = card.state !== "unanswered" || card.disabledCandidates.has(candidate.uri);
      button.addEventListener("click", () => this.pickCandidate(card, candidate.uri));
      return el("li", {}, [button]);
    });

    const bachelor = el(
      "button",
      { class: card.selected.kind === "bachelor" ? "bachelor chosen" : "bachelor", type: "button" },
      ["no counterpart (bachelor)"],
    );
    bachelor.disabled = card.state !== "unanswered";
    bachelor.addEventListener("click", () => this.markBachelor(card));

    const status =
      card.state === "unanswered"
        ? ""
        : card.state === "pending"
          ? "syncing…"
          : "answered";

    const node = el("article", { class: classes.join(" ") }, [
      title,
      el("ul", { class: "context" }, contextItems),
      el("ul", { class: "candidates" }, candidateButtons),
      el("div", { class: "actions" }, [bachelor, el("span", { class: "status" }, [status])]),
    ]);
    node.addEventListener("click", () => {
      if (this.focusIndex !== index) {
        this.focusIndex = index;
        this.render();
      }
    });
    return node;
  }
}
