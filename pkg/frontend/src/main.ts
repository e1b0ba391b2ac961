/** Browser wiring: render the flow state into #app and dispatch clicks. */

import { ApiClient } from "./api.js";
import { FlowState, SessionFlow } from "./flow.js";
import { renderApp } from "./view.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

const api = new ApiClient("");  // same origin; the service mounts /ui
const SESSION_KEY = "maat-session-id";
let flow = newFlow();

function newFlow(): SessionFlow {
  return new SessionFlow(api, { model: "irt", strategy: "maat", nSteps: 5 },
                         (state) => render(state));
}

function render(state: FlowState) {
  if (flow.sessionId) {
    sessionStorage.setItem(SESSION_KEY, flow.sessionId);
  }
  if (state.kind === "finished" || state.kind === "idle") {
    sessionStorage.removeItem(SESSION_KEY);
  }
  root!.innerHTML = renderApp(state);
}

root.addEventListener("click", (event) => {
  const target = (event.target as HTMLElement).closest("button");
  if (!target) return;
  const action = target.dataset.action;
  if (action === "start") {
    flow = newFlow();
    void flow.start();
  } else if (action === "answer") {
    void flow.answer(target.dataset.value === "1" ? 1 : 0);
  } else if (action === "retry") {
    flow.resumeAfterError();
  }
});

// a reload resumes the open session; the service holds all state
const previous = sessionStorage.getItem(SESSION_KEY);
if (previous) {
  void flow.resume(previous);
} else {
  render(flow.state);
}
