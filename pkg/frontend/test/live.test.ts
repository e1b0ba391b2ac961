/**
 * Integration against a real, seeded service instance.
 *
 * Fixtures (dataset, checkpoint, importance table) are produced through the
 * engine's CLI, and the service is spawned as a subprocess; the flow then
 * completes a scripted five-step session and the rendered report must show
 * exactly the numbers the service returned.
 */

import { ChildProcess, execFileSync, spawn } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, DiagnosisReport } from "../src/api.js";
import { SessionFlow } from "../src/flow.js";
import { renderApp, renderDiagnosis } from "../src/view.js";
import { tokenCounter } from "./mock.js";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;

const SYNTH_TOML = `
n_examinees = 24
n_questions = 30
n_concepts = 6
records_per_historical = 18
seed = 23
`;

let workDir: string;
let server: ChildProcess | null = null;

async function waitForHealthz(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE}/healthz`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 300));
  }
  throw new Error("service did not become healthy in time");
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "maat-ui-live-"));
  const data = join(workDir, "data");
  const spec = join(workDir, "synth.toml");
  writeFileSync(spec, SYNTH_TOML);
  const run = (args: string[]) =>
    execFileSync("maat", args, { stdio: "pipe" }).toString();
  run(["synth", "--spec", spec, "--out", data]);
  run(["pretrain", "--dataset", data, "--model-kind", "irt",
       "--out", join(workDir, "model.irt.json"), "--epochs", "15"]);
  run(["importance", "--dataset", data, "--out", join(workDir, "importance.json"),
       "--dim", "8", "--epochs", "2", "--k-n", "4"]);

  server = spawn("maat", [
    "serve", "--model", join(workDir, "model.irt.json"),
    "--importance", join(workDir, "importance.json"),
    "--port", String(PORT),
  ], { stdio: "ignore" });
  await waitForHealthz();
}, 60_000);

afterAll(() => {
  server?.kill();
  rmSync(workDir, { recursive: true, force: true });
});

describe("live session against a seeded service", () => {
  it("completes five steps and renders the final report verbatim", async () => {
    const api = new ApiClient(BASE);
    const views: string[] = [];
    const flow = new SessionFlow(api, {
      model: "irt", strategy: "maat", nSteps: 5, examineeRef: 3,
      tokenSource: tokenCounter("live"),
    }, (state) => views.push(renderApp(state)));

    await flow.start();
    const script: (0 | 1)[] = [1, 0, 1, 1, 0];
    for (const answer of script) {
      expect(flow.state.kind).toBe("answering");
      await flow.answer(answer);
    }
    expect(flow.state.kind).toBe("finished");
    if (flow.state.kind !== "finished") return;

    const report: DiagnosisReport = flow.state.report;
    expect(report.history.map((h) => h.answer)).toEqual(script);
    expect(report.status).toBe("finished");

    // the rendered view shows exactly the service's numbers (formatted for
    // display, never recomputed)
    const html = renderDiagnosis(report);
    const coverageShown = html.match(/data-field="coverage">([\d.]+)%/)![1];
    expect(coverageShown).toBe((report.coverage * 100).toFixed(1));
    for (const [concept, value] of Object.entries(report.mastery)) {
      const pattern = new RegExp(`data-mastery="${concept}">([\\d.]+)%`);
      const shown = html.match(pattern)![1];
      expect(shown).toBe((value * 100).toFixed(1));
    }

    // and the independently fetched diagnosis agrees with the final report
    const diagnosis = await api.getDiagnosis(report.session_id);
    expect(diagnosis.coverage).toBe(report.coverage);
    expect(diagnosis.mastery).toEqual(report.mastery);
    expect(views.some((v) => v.includes("Session finished"))).toBe(true);
  }, 30_000);

  it("a stale session id yields the error view with a restart action", async () => {
    const api = new ApiClient(BASE, undefined, 1, 1);
    await expect(api.getDiagnosis("does-not-exist")).rejects.toMatchObject({
      code: 404,
    });
  });
});
