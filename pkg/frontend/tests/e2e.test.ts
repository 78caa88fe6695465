/**
 * Scripted UI round-trip against the real annotation service.
 *
 * Spawns the Python service on a synthetic corpus, then drives the actual
 * app controller through its gesture API (no real browser is available in
 * CI): draw a box, receive 3 overlays, commit index 0, verify the persisted
 * record's mask is bit-identical to proposal 0, and watch the budget-5 flag
 * flip after five commits. Skips cleanly when the Python package is absent.
 */

import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { UiController } from "../src/state.js";

const PYTHON = process.env.PYTHON ?? "python3";

function pythonAvailable(): boolean {
  try {
    execFileSync(PYTHON, ["-c", "import distillseg"], { stdio: "ignore" });
    return true;
  } catch {
    return false;
  }
}

const HAVE_PYTHON = pythonAvailable();

describe.skipIf(!HAVE_PYTHON)("UI round-trip against the live service", () => {
  let workDir: string;
  let logDir: string;
  let server: ChildProcess | null = null;
  let base = "";

  beforeAll(async () => {
    workDir = mkdtempSync(join(tmpdir(), "distillseg-ui-"));
    logDir = join(workDir, "annotations");
    const corpus = join(workDir, "corpus");
    execFileSync(PYTHON, [
      "-m", "distillseg.cli", "synth", "--n", "8", "--seed", "3",
      "--size", "128", "--out", corpus,
    ], { stdio: "ignore" });

    const port = 18000 + Math.floor(Math.random() * 20000);
    base = `http://127.0.0.1:${port}`;
    server = spawn(PYTHON, [
      "-m", "distillseg.cli", "serve",
      "--manifest", join(corpus, "manifest.json"),
      "--log", logDir, "--toy-encoder",
      "--port", String(port), "--budgets", "5,10",
    ], { stdio: "ignore" });

    const deadline = Date.now() + 30_000;
    for (;;) {
      try {
        const resp = await fetch(`${base}/progress`);
        if (resp.ok) break;
      } catch {
        /* not up yet */
      }
      if (Date.now() > deadline) throw new Error("service did not start");
      await new Promise((r) => setTimeout(r, 200));
    }
  }, 60_000);

  afterAll(() => {
    server?.kill();
    rmSync(workDir, { recursive: true, force: true });
  });

  it("draw box -> 3 overlays -> commit 0 -> persisted mask bit-identical; budget flips", async () => {
    const controller = new UiController(new ApiClient(base, "e2e-expert"));
    controller.setZoom(4);

    let firstCommittedRle: string | null = null;
    for (let i = 0; i < 5; i++) {
      const sampleId = `synth_000${i}`;
      await controller.loadSample(sampleId);
      expect(controller.session?.sample_id).toBe(sampleId);

      // a drag across most of the 512-px canvas = box (2,2)-(126,126) in image px
      controller.gestureStart(8, 8);
      controller.gestureMove(504, 504);
      const box = await controller.gestureEnd(504, 504);
      expect(box).toEqual({ x0: 2, y0: 2, x1: 126, y1: 126 });
      expect(controller.overlays).toHaveLength(3);
      const scores = controller.overlays.map((o) => o.predictedIou);
      expect([...scores].sort((a, b) => b - a)).toEqual(scores);
      for (const overlay of controller.overlays) {
        expect(overlay.mask.width).toBe(128);
        expect(overlay.mask.height).toBe(128);
      }

      controller.select(0);
      const proposalZeroRle = controller.overlays[0]!.rle;
      const committedRle = await controller.commitSelected();
      expect(committedRle).toBe(proposalZeroRle);
      if (firstCommittedRle === null) firstCommittedRle = committedRle;
    }

    expect(controller.progress).not.toBeNull();
    expect(controller.progress!.annotated).toBe(5);
    expect(controller.progress!.budgets["5"]).toBe(true);
    expect(controller.progress!.budgets["10"]).toBe(false);

    // the mask persisted in the annotations log, decoded from its PNG and
    // re-encoded canonically, must equal what the UI was shown for record 0
    const persisted = execFileSync(PYTHON, ["-c", [
      "import sys",
      "from distillseg.prompts import AnnotationLog",
      "from distillseg.rle import encode_rle",
      "record = AnnotationLog(sys.argv[1]).records()[0]",
      "print(encode_rle(record.mask), record.annotator, record.mode)",
    ].join("\n"), logDir]).toString().trim();
    const [persistedRle, annotator, mode] = persisted.split(" ");
    expect(persistedRle).toBe(firstCommittedRle);
    expect(annotator).toBe("e2e-expert");
    expect(mode).toBe("manual_ui");
  }, 120_000);

  it("re-committing the same nonce is a no-op on progress", async () => {
    const api = new ApiClient(base, "e2e-expert");
    const session = await api.openSession("synth_0005");
    await api.proposeBox(session.session_id, { x0: 2, y0: 2, x1: 126, y1: 126 });
    const before = (await api.progress()).annotated;
    await api.commit(session.session_id, 0, "repeat-nonce");
    await api.commit(session.session_id, 0, "repeat-nonce");
    const after = (await api.progress()).annotated;
    expect(after).toBe(before + 1);
  }, 60_000);
});
