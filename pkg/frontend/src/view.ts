/**
 * Pure render functions: state in, HTML string out.
 *
 * Every number shown comes verbatim from service responses; the view layer
 * formats but never recomputes.
 */

import { DiagnosisReport } from "./api.js";
import { FlowState } from "./flow.js";

const esc = (value: unknown): string =>
  String(value).replace(/[&<>"']/g, (c) =>
    ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;", "'": "&#39;" }[c] as string));

export function renderApp(state: FlowState): string {
  switch (state.kind) {
    case "idle":
      return `<div class="panel">
        <h1>Adaptive test</h1>
        <button data-action="start">Start session</button>
      </div>`;
    case "busy":
      return `<div class="panel"><p class="busy">${esc(state.detail)}…</p></div>`;
    case "answering":
      return `<div class="panel">
        ${renderProgress(state.step, state.nSteps)}
        ${renderQuestionCard(state.question.id, state.question.concepts)}
        <div class="answers">
          <button data-action="answer" data-value="1">I answered correctly</button>
          <button data-action="answer" data-value="0">I answered incorrectly</button>
        </div>
        ${state.diagnosis ? renderDiagnosis(state.diagnosis) : ""}
      </div>`;
    case "finished":
      return `<div class="panel">
        <h1>Session finished</h1>
        ${renderDiagnosis(state.report)}
        <button data-action="start">Start a new session</button>
      </div>`;
    case "error":
      return `<div class="panel error">
        <p>Something went wrong: ${esc(state.message)}</p>
        ${state.recoverable
          ? `<button data-action="retry">Retry</button>`
          : `<button data-action="start">Restart</button>`}
      </div>`;
  }
}

export function renderProgress(step: number, nSteps: number): string {
  return `<p class="progress">Question <span data-field="step">${step}</span> of ` +
         `<span data-field="n-steps">${nSteps}</span></p>`;
}

export function renderQuestionCard(id: number, concepts: number[]): string {
  const tags = concepts.map((k) => `<span class="tag">concept ${k}</span>`).join(" ");
  return `<div class="question-card" data-question-id="${id}">
    <h2>Question #${id}</h2>
    <p class="placeholder">(question content lives in the item bank; this
    pool carries ids and concept tags only)</p>
    <p class="tags">${tags}</p>
  </div>`;
}

export function renderDiagnosis(report: DiagnosisReport): string {
  const coveragePct = (report.coverage * 100).toFixed(1);
  const mastery = Object.entries(report.mastery)
    .map(([concept, value]) => {
      const pct = (value * 100).toFixed(1);
      return `<div class="mastery-row">
        <span class="label">concept ${esc(concept)}</span>
        <div class="bar"><div class="fill" style="width:${pct}%"></div></div>
        <span class="value" data-mastery="${esc(concept)}">${pct}%</span>
      </div>`;
    })
    .join("");
  const history = report.history
    .map((item) => `<li>q${item.question}: predicted ` +
                   `${item.predicted.toFixed(3)}, answered ${item.answer}</li>`)
    .join("");
  const infProxy = report.inf_proxy === null
    ? "n/a"
    : report.inf_proxy.toFixed(3);
  return `<div class="diagnosis">
    <p>Coverage: <span class="gauge" data-field="coverage">${coveragePct}%</span>
       · Prediction quality: <span data-field="inf-proxy">${infProxy}</span></p>
    <div class="mastery">${mastery}</div>
    <ol class="history">${history}</ol>
  </div>`;
}
