import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ChildProcess, execFileSync, spawn } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { ApiError, Box, FetchLike, LABELS, Label, StudyClient } from "../src/api.js";
import { boxFromDrag } from "../src/boxes.js";
import { SessionController, progressText } from "../src/session.js";
import { View, imageToScreen } from "../src/transform.js";

// Drives a full 30-image participant session against the real Python
// service over HTTP, then audits the export and the recorded traffic.

const PORT = 8917;
const BASE = `http://127.0.0.1:${PORT}`;
const ADMIN_TOKEN = "vitest-admin";
const TOTAL = 30;

interface TrafficEntry {
  method: string;
  path: string;
  headers: Record<string, string>;
  requestBody: unknown | null;
  status: number;
  responseJson: unknown | null;
}

const traffic: TrafficEntry[] = [];

const recordingFetch: FetchLike = async (url, init) => {
  const method = init?.method ?? "GET";
  const headers: Record<string, string> = {};
  if (init?.headers) {
    for (const [k, v] of Object.entries(init.headers as Record<string, string>)) {
      headers[k.toLowerCase()] = v;
    }
  }
  const response = await fetch(url, init);
  const entry: TrafficEntry = {
    method,
    path: new URL(url).pathname,
    headers,
    requestBody: init?.body ? JSON.parse(String(init.body)) : null,
    status: response.status,
    responseJson: null,
  };
  if ((response.headers.get("content-type") ?? "").includes("application/json")) {
    entry.responseJson = await response.clone().json();
  }
  traffic.push(entry);
  return response;
};

function collectKeys(value: unknown, out: Set<string>): void {
  if (Array.isArray(value)) {
    for (const v of value) collectKeys(v, out);
  } else if (value && typeof value === "object") {
    for (const [k, v] of Object.entries(value)) {
      out.add(k);
      collectKeys(v, out);
    }
  }
}

function pngSize(bytes: Uint8Array): { w: number; h: number } {
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  expect([...bytes.slice(0, 4)]).toEqual([137, 80, 78, 71]);
  return { w: view.getUint32(16), h: view.getUint32(20) };
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

let workDir: string;
let server: ChildProcess;
let serverLog = "";

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "annotator-live-"));
  execFileSync("python3", [
    "-m", "cgforensics.democorpus", join(workDir, "corpus"),
    "--per-class", "10", "--seed", "0",
  ], { stdio: "pipe" });
  const ini = [
    "[experiment]",
    `manifest = ${join(workDir, "corpus", "manifest.csv")}`,
    "seed = 0",
    "[psycho]",
    "host = 127.0.0.1",
    `port = ${PORT}`,
    `study_dir = ${join(workDir, "study")}`,
    "",
  ].join("\n");
  const iniPath = join(workDir, "run.ini");
  writeFileSync(iniPath, ini);
  server = spawn("python3", [
    "-m", "cgforensics.cli", "psycho-serve", "--config", iniPath, "--init",
  ], { env: { ...process.env, CGF_ADMIN_TOKEN: ADMIN_TOKEN }, stdio: ["ignore", "pipe", "pipe"] });
  server.stdout?.on("data", (d) => { serverLog += d; });
  server.stderr?.on("data", (d) => { serverLog += d; });
  const deadline = Date.now() + 120000;
  for (;;) {
    if (server.exitCode !== null) {
      throw new Error(`service exited early:\n${serverLog}`);
    }
    try {
      await fetch(`${BASE}/sessions/absent/next`);
      break;
    } catch {
      if (Date.now() > deadline) throw new Error(`service never came up:\n${serverLog}`);
      await sleep(250);
    }
  }
});

afterAll(async () => {
  if (server && server.exitCode === null) {
    server.kill("SIGTERM");
    await new Promise((r) => server.once("exit", r));
  }
  if (workDir) rmSync(workDir, { recursive: true, force: true });
});

const sent = new Map<number, { label: Label; boxes: Box[] }>();

describe("S1: scripted 30-image session against the live service", () => {
  it("annotates every image to completion and the export round-trips", async () => {
    const client = new StudyClient(BASE, recordingFetch);
    const controller = new SessionController(client, { studyId: "study" });

    let state = await controller.start("scripted-participant");
    expect(state.phase).toBe("active");
    expect(state.total).toBe(TOTAL);
    expect(progressText(state)).toBe("1/30");

    const zooms = [0.5, 1, 1.6, 2, 2.5, 3.3, 4];
    let i = 0;
    while (state.phase === "active") {
      const step = state.step!;
      expect(step.index).toBe(i);

      const bytes = new Uint8Array(await client.fetchImage(step));
      const size = pngSize(bytes);
      expect(size).toEqual({ w: 224, h: 224 });
      controller.markDisplayed();

      // draw one box through the real view transform for most images
      let boxes: Box[] = [];
      if (i % 5 !== 4) {
        const view: View = {
          zoom: zooms[i % zooms.length],
          panX: ((i * 13) % 50) - 25 + 0.5,
          panY: 40 - ((i * 7) % 80),
        };
        const target: Box = {
          x: (i * 7) % 180,
          y: (i * 11) % 180,
          w: 10 + (i % 20),
          h: 12 + (i % 15),
        };
        const start = imageToScreen(view, { x: target.x, y: target.y });
        const end = imageToScreen(view, { x: target.x + target.w, y: target.y + target.h });
        const box = boxFromDrag(view, start, end, size.w, size.h);
        expect(box).toEqual(target);
        boxes = [box!];
      }

      const label = state.labelOrder[i % 3];
      sent.set(step.image_id, { label, boxes });
      state = await controller.submit(label, boxes);
      i += 1;
      expect(state.answered).toBe(i);
    }

    expect(state.phase).toBe("done");
    expect(i).toBe(TOTAL);
    expect(progressText(state)).toBe("30/30");
    expect(sent.size).toBe(TOTAL);

    // resubmitting an already answered image is rejected, not double counted
    const plain = new StudyClient(BASE);
    const someId = [...sent.keys()][0];
    await expect(
      plain.submitAnnotation(state.sessionId, {
        image_id: someId, label: "Real", boxes: [], elapsed_ms: 1,
      }),
    ).rejects.toMatchObject({ code: "duplicate", status: 409 });

    // the single session drained the 30-image pool
    const second = new SessionController(plain, { studyId: "study" });
    const full = await second.start("late-participant");
    expect(full.phase).toBe("full");
  });

  it("export needs the admin token and returns all 30 records intact", async () => {
    const forbidden = await fetch(`${BASE}/studies/study/export`);
    expect(forbidden.status).toBe(403);
    const wrong = await fetch(`${BASE}/studies/study/export`, {
      headers: { "x-admin-token": "nope" },
    });
    expect(wrong.status).toBe(403);

    const response = await fetch(`${BASE}/studies/study/export`, {
      headers: { "x-admin-token": ADMIN_TOKEN },
    });
    expect(response.status).toBe(200);
    const lines = (await response.text()).trim().split("\n");
    expect(lines.length).toBe(TOTAL + 1);

    const records = lines.slice(0, TOTAL).map((line) => JSON.parse(line));
    for (const rec of records) {
      expect(rec.session_id).toBe("s0000");
      expect(rec.participant).toBe("scripted-participant");
      expect((LABELS as readonly string[]).includes(rec.label)).toBe(true);
      expect(Number.isInteger(rec.elapsed_ms)).toBe(true);
      expect(rec.elapsed_ms).toBeGreaterThanOrEqual(0);
      const expected = sent.get(rec.image_id);
      expect(expected).toBeDefined();
      expect(rec.label).toBe(expected!.label);
      expect(rec.boxes).toEqual(expected!.boxes);
      for (const b of rec.boxes) {
        expect(b.x).toBeGreaterThanOrEqual(0);
        expect(b.y).toBeGreaterThanOrEqual(0);
        expect(b.w).toBeGreaterThanOrEqual(1);
        expect(b.h).toBeGreaterThanOrEqual(1);
        expect(b.x + b.w).toBeLessThanOrEqual(224);
        expect(b.y + b.h).toBeLessThanOrEqual(224);
      }
    }
    expect(new Set(records.map((r) => r.image_id)).size).toBe(TOTAL);

    const summary = JSON.parse(lines[TOTAL]).summary;
    expect(summary.annotations).toBe(TOTAL);
    expect(summary.scored).toBe(TOTAL);
  });
});

describe("S2: recorded session traffic never requests ground-truth labels", () => {
  it("only touches participant endpoints and no response carries a label", () => {
    // 1 create + 31 next + 30 images + 30 annotations
    expect(traffic.length).toBe(92);

    const allowed = [
      /^\/studies\/study\/sessions$/,
      /^\/sessions\/s\d{4}\/next$/,
      /^\/sessions\/s\d{4}\/annotations$/,
      /^\/images\/\d+$/,
    ];
    for (const entry of traffic) {
      expect(allowed.some((re) => re.test(entry.path)), entry.path).toBe(true);
      expect(entry.path).not.toContain("export");
      expect(entry.headers["x-admin-token"]).toBeUndefined();
      if (entry.method === "GET") {
        expect(entry.requestBody).toBeNull();
      }
    }

    // outbound bodies carry only the participant id or their own annotation
    for (const entry of traffic.filter((t) => t.requestBody !== null)) {
      const keys = new Set<string>();
      collectKeys(entry.requestBody, keys);
      for (const key of keys) {
        expect(["participant", "image_id", "label", "boxes",
                "x", "y", "w", "h", "elapsed_ms"]).toContain(key);
      }
    }

    // nothing the service sends back contains truth labels
    for (const entry of traffic.filter((t) => t.responseJson !== null)) {
      const keys = new Set<string>();
      collectKeys(entry.responseJson, keys);
      expect(keys.has("label")).toBe(false);
      expect(keys.has("truth")).toBe(false);
      expect(keys.has("category")).toBe(false);
    }
  });
});
