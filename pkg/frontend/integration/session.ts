/**
 * Scripted annotation session against a live service.
 *
 * Drives the same client modules the browser console uses — ApiClient,
 * QueryCard view models, and the serialized SubmissionQueue — to answer one
 * full batch from a plan file, while exercising the idempotency and
 * conflict paths on the way:
 *
 *   - a rapid duplicate click (second enqueue of an answered card) must be
 *     dropped client-side,
 *   - a raw duplicate POST of an already-acknowledged label must come back
 *     with status "duplicate" and spend nothing,
 *   - picking a counterpart that an earlier card already consumed must be
 *     rejected with one_to_one_violation, reopening the card with that
 *     candidate disabled.
 *
 * Usage: node session.js --base http://127.0.0.1:8765 --plan plan.json --out report.json
 * The plan maps every KG1 uri to its outcome ("bachelor" or a KG2 uri).
 * Writes a JSON report of every acknowledgement plus the before/after
 * service state; exits non-zero if any scripted expectation fails.
 */

import { readFile, writeFile } from "node:fs/promises";
import process from "node:process";

import type { LabelAck, StateView } from "../src/api.js";
import { ApiClient, ApiError, BACHELOR } from "../src/api.js";
import type { Submission } from "../src/cards.js";
import { buildCards, QueryCard } from "../src/cards.js";
import { SubmissionQueue } from "../src/queue.js";

interface Plan {
  answers: Record<string, string>;
}

interface AckRecord {
  query: string;
  outcome: string;
  status: string;
  advancing: boolean;
  remaining: number;
}

interface RejectRecord {
  query: string;
  outcome: string;
  code: string;
}

interface Report {
  state_before: StateView;
  state_after: StateView;
  acks: AckRecord[];
  rejected: RejectRecord[];
  duplicate_click_enqueued: boolean;
  direct_duplicate_status: string | null;
  violation: { query: string; attempted: string; reopened: boolean; disabled: boolean } | null;
  answered: { query: string; outcome: string }[];
}

function expect(condition: boolean, message: string): asserts condition {
  if (!condition) throw new Error(`scripted session expectation failed: ${message}`);
}

function argValue(flag: string): string {
  const index = process.argv.indexOf(flag);
  expect(index >= 0 && index + 1 < process.argv.length, `missing ${flag} argument`);
  return process.argv[index + 1]!;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function waitWhileBusy(api: ApiClient, timeoutMs = 120_000): Promise<StateView> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const state = await api.state();
    if (state.phase !== "busy") return state;
    expect(Date.now() < deadline, "service stayed busy past the timeout");
    await sleep(250);
  }
}

async function main(): Promise<void> {
  const api = new ApiClient(argValue("--base"));
  const plan = JSON.parse(await readFile(argValue("--plan"), "utf-8")) as Plan;

  const stateBefore = await api.state();
  expect(stateBefore.phase === "collecting", `expected a collecting service, got ${stateBefore.phase}`);

  const cards = buildCards(await api.queries());
  expect(cards.length === stateBefore.pending.total, "card count differs from pending total");
  for (const card of cards) {
    expect(card.uri in plan.answers, `plan has no answer for ${card.uri}`);
  }
  const plannedOutcomes = cards.map((c) => plan.answers[c.uri]!);
  expect(plannedOutcomes.some((o) => o === BACHELOR), "batch plan contains no bachelor mark");
  expect(plannedOutcomes.some((o) => o !== BACHELOR), "batch plan contains no counterpart pick");

  const acks: AckRecord[] = [];
  const rejected: RejectRecord[] = [];
  const answered: { query: string; outcome: string }[] = [];

  const queue = new SubmissionQueue((s) => api.submitLabel(s.query, s.outcome), {
    onAck: (s, ack: LabelAck) => {
      const card = cards.find((c) => c.uri === s.query);
      if (card && card.state === "pending") card.settle();
      acks.push({
        query: s.query,
        outcome: s.outcome,
        status: ack.status,
        advancing: ack.advancing,
        remaining: ack.remaining,
      });
    },
    onReject: (s, error: ApiError) => {
      const card = cards.find((c) => c.uri === s.query);
      if (card && card.state === "pending") {
        card.reopen(error.code === "one_to_one_violation" ? s.outcome : undefined);
      }
      rejected.push({ query: s.query, outcome: s.outcome, code: error.code });
    },
  });

  const answer = (card: QueryCard): Submission => {
    const outcome = plan.answers[card.uri]!;
    const submission = outcome === BACHELOR ? card.markBachelor() : card.chooseCandidate(outcome);
    answered.push({ query: submission.query, outcome: submission.outcome });
    expect(queue.enqueue(submission), `submission for ${card.uri} was unexpectedly dropped`);
    return submission;
  };

  // 1. Answer the first card, then fire the rapid duplicate click: the
  //    second enqueue of the same query must be dropped client-side.
  const first = cards[0]!;
  const firstSubmission = answer(first);
  const duplicateClickEnqueued = queue.enqueue({ ...firstSubmission });
  expect(!duplicateClickEnqueued, "duplicate click slipped into the queue");
  await queue.whenIdle();
  expect(first.state === "answered", "first card did not settle");

  // 2. Raw duplicate POST of the acknowledged label: server-side idempotency
  //    must answer "duplicate" without spending budget.
  const directDuplicate = await api.submitLabel(firstSubmission.query, firstSubmission.outcome);
  expect(directDuplicate.status === "duplicate", `direct repost got ${directDuplicate.status}`);

  // 3. One-to-one violation: make sure some counterpart is consumed, then
  //    try to hand it to a different card.
  let consumed: string | null = firstSubmission.outcome !== BACHELOR ? firstSubmission.outcome : null;
  if (consumed === null) {
    const matchCard = cards.find((c) => c.state === "unanswered" && plan.answers[c.uri] !== BACHELOR);
    expect(matchCard !== undefined, "no counterpart pick available for the conflict exercise");
    consumed = plan.answers[matchCard.uri]!;
    answer(matchCard);
    await queue.whenIdle();
  }
  let violation: Report["violation"] = null;
  const victim = cards.find((c) => c.state === "unanswered");
  expect(victim !== undefined, "no unanswered card left for the conflict exercise");
  queue.enqueue(victim.chooseCandidate(consumed));
  await queue.whenIdle();
  expect(
    rejected.some((r) => r.query === victim.uri && r.code === "one_to_one_violation"),
    "conflicting pick was not rejected as one_to_one_violation",
  );
  violation = {
    query: victim.uri,
    attempted: consumed,
    reopened: victim.state === "unanswered",
    disabled: victim.disabledCandidates.has(consumed),
  };
  expect(violation.reopened, "victim card was not reopened after the violation");
  expect(violation.disabled, "conflicting candidate was not disabled after the violation");

  // 4. Answer everything still open, in service order; the final ack is the
  //    one that completes the batch and flips the service to retraining.
  for (const card of cards) {
    if (card.state === "unanswered") answer(card);
  }
  await queue.whenIdle();
  expect(acks.length === cards.length, `expected ${cards.length} acknowledgements, got ${acks.length}`);
  expect(acks.every((a) => a.status === "accepted"), "an acknowledgement was not 'accepted'");
  expect(acks[acks.length - 1]!.advancing, "final acknowledgement did not start the advance");

  const stateAfter = await waitWhileBusy(api);

  const report: Report = {
    state_before: stateBefore,
    state_after: stateAfter,
    acks,
    rejected,
    duplicate_click_enqueued: duplicateClickEnqueued,
    direct_duplicate_status: directDuplicate.status,
    violation,
    answered,
  };
  await writeFile(argValue("--out"), JSON.stringify(report, null, 2));
}

main().catch((error: unknown) => {
  console.error(error instanceof Error ? error.message : error);
  process.exitCode = 1;
});
