/**
 * Session flow state machine.
 *
 * One in-flight request at a time; each step mints exactly one idempotency
 * token that is reused verbatim for every retry of that step, so no answer
 * is ever submitted twice under different tokens.
 */

import {
  ApiClient,
  ApiError,
  DiagnosisReport,
  QuestionPayload,
  freshToken,
} from "./api.js";

export type FlowState =
  | { kind: "idle" }
  | { kind: "busy"; detail: string }
  | { kind: "answering"; question: QuestionPayload; step: number; nSteps: number;
      diagnosis: DiagnosisReport | null }
  | { kind: "finished"; report: DiagnosisReport }
  | { kind: "error"; message: string; recoverable: boolean };

export interface FlowOptions {
  model: string;
  strategy?: string;
  nSteps?: number;
  examineeRef?: number;
  tokenSource?: () => string;
}

export class SessionFlow {
  state: FlowState = { kind: "idle" };
  sessionId: string | null = null;
  readonly usedTokens: string[] = [];
  private nSteps = 0;
  private pendingToken: string | null = null;
  private mintToken: () => string;
  private retryView: FlowState | null = null;

  constructor(private api: ApiClient, private options: FlowOptions,
              private onChange: (state: FlowState) => void = () => {}) {
    this.mintToken = options.tokenSource ?? freshToken;
  }

  private transition(state: FlowState) {
    this.state = state;
    this.onChange(state);
  }

  async start(): Promise<FlowState> {
    this.transition({ kind: "busy", detail: "starting session" });
    try {
      const started = await this.api.startSession({
        model: this.options.model,
        strategy: this.options.strategy ?? "maat",
        n_steps: this.options.nSteps ?? 5,
        examinee_ref: this.options.examineeRef ?? 0,
      });
      this.sessionId = started.session_id;
      this.nSteps = started.n_steps;
      this.transition({
        kind: "answering",
        question: started.question,
        step: started.step,
        nSteps: started.n_steps,
        diagnosis: null,
      });
    } catch (err) {
      this.fail(err, false);
    }
    return this.state;
  }

  async answer(value: 0 | 1): Promise<FlowState> {
    if (this.state.kind !== "answering" || this.sessionId === null) {
      throw new Error(`cannot answer in state ${this.state.kind}`);
    }
    const view = this.state;
    // a retried step keeps its token; only an accepted answer clears it
    if (this.pendingToken === null) {
      this.pendingToken = this.mintToken();
      this.usedTokens.push(this.pendingToken);
    }
    this.transition({ kind: "busy", detail: `submitting answer for step ${view.step}` });
    try {
      const outcome = await this.api.submitAnswer(this.sessionId, value,
                                                  this.pendingToken);
      this.pendingToken = null;
      if (outcome.status === "finished") {
        this.transition({ kind: "finished", report: outcome.report });
      } else {
        const diagnosis = await this.api.getDiagnosis(this.sessionId);
        this.transition({
          kind: "answering",
          question: outcome.question,
          step: outcome.step,
          nSteps: this.nSteps,
          diagnosis,
        });
      }
    } catch (err) {
      // a conflict on our own step means the server already applied it;
      // reconcile from the diagnosis instead of re-submitting
      if (err instanceof ApiError && err.code === 409) {
        const report = await this.api.getDiagnosis(this.sessionId);
        if (report.status === "finished") {
          this.pendingToken = null;
          this.transition({ kind: "finished", report });
          return this.state;
        }
      }
      this.fail(err, true, view);
    }
    return this.state;
  }

  async refreshDiagnosis(): Promise<DiagnosisReport | null> {
    if (this.sessionId === null) return null;
    return this.api.getDiagnosis(this.sessionId);
  }

  /**
   * Rebuild the view for an existing session (page reload): the diagnosis
   * carries everything needed, including the pending question.
   */
  async resume(sessionId: string): Promise<FlowState> {
    this.transition({ kind: "busy", detail: "resuming session" });
    try {
      const report = await this.api.getDiagnosis(sessionId);
      this.sessionId = sessionId;
      this.nSteps = report.n_steps;
      if (report.status === "finished" || !report.pending_question) {
        this.transition({ kind: "finished", report });
      } else {
        this.transition({
          kind: "answering",
          question: report.pending_question,
          step: report.step + 1,
          nSteps: report.n_steps,
          diagnosis: report.history.length > 0 ? report : null,
        });
      }
    } catch (err) {
      this.fail(err, false);
    }
    return this.state;
  }

  /** After a recoverable error, restore the interrupted view (token kept). */
  resumeAfterError(): FlowState {
    if (this.retryView !== null) {
      const view = this.retryView;
      this.retryView = null;
      this.transition(view);
    } else {
      this.transition({ kind: "idle" });
    }
    return this.state;
  }

  private fail(err: unknown, recoverable: boolean,
               retryView: FlowState | null = null) {
    const message = err instanceof Error ? err.message : String(err);
    this.retryView = retryView;
    this.transition({ kind: "error", message, recoverable });
  }
}
