import { describe, expect, it } from "vitest";
import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { PassThrough } from "node:stream";
import { fileURLToPath } from "node:url";
import { echoClassifier, thresholdSegmenter } from "../src/demos.js";
import { AdapterHandler, serve } from "../src/protocol.js";
import { Dtype, decodeSvol, encodeSvol } from "../src/svol.js";

const fixturesDir = fileURLToPath(new URL("../fixtures", import.meta.url));
const mainJs = fileURLToPath(new URL("../dist/main.js", import.meta.url));

async function transcript(handler: AdapterHandler, lines: string[]): Promise<string[]> {
  const input = new PassThrough();
  const output = new PassThrough();
  const done = serve(handler, input, output);
  for (const line of lines) input.write(line + "\n");
  input.end();
  await done;
  return output.read().toString("utf-8").trim().split("\n");
}

describe("serve", () => {
  it("answers classify, survives junk, and exits on shutdown", async () => {
    const out = await transcript(echoClassifier(), [
      `{"op":"classify","volume":"${join(fixturesDir, "tiny.svol")}"}`,
      "garbage here",
      '{"op":"wat"}',
      '{"op":"shutdown"}',
    ]);
    expect(out).toEqual([
      '{"ok":true,"scores":{"PLD":0.5,"MCC":0.5}}',
      '{"ok":false,"error":"invalid request line"}',
      '{"ok":false,"error":"unknown op: wat"}',
      '{"ok":true}',
    ]);
  });

  it("reports handler exceptions in-band and keeps serving", async () => {
    const handler: AdapterHandler = {
      classify() {
        throw new Error("deliberate failure");
      },
    };
    const out = await transcript(handler, [
      `{"op":"classify","volume":"${join(fixturesDir, "tiny.svol")}"}`,
      '{"op":"shutdown"}',
    ]);
    expect(out).toEqual([
      '{"ok":false,"error":"deliberate failure"}',
      '{"ok":true}',
    ]);
  });

  it("segments via svol files on disk", async () => {
    const dir = mkdtempSync(join(tmpdir(), "adapter-test-"));
    const volPath = join(dir, "in.svol");
    const outPath = join(dir, "out.svol");
    const data = Float32Array.from([0.1, 0.5, 0.6, 0.9, 0.45, 0.55, 0.2, 0.8]);
    writeFileSync(
      volPath,
      encodeSvol({ dims: [2, 2, 2], spacing: [1, 1, 1], orientation: "LPS", dtype: Dtype.Real, data }),
    );
    const out = await transcript(
      thresholdSegmenter({ lo: 0.4, hi: 0.7, closingRadius: 0, keepLargest: false }),
      [
        `{"op":"segment","volume":"${volPath}","output":"${outPath}"}`,
        '{"op":"shutdown"}',
      ],
    );
    expect(out).toEqual(['{"ok":true}', '{"ok":true}']);
    const mask = decodeSvol(readFileSync(outPath));
    expect(mask.dtype).toBe(Dtype.Mask);
    expect(Array.from(mask.data)).toEqual([0, 1, 1, 0, 1, 1, 0, 0]);
  });
});

describe("golden transcript", () => {
  it("the echo demo reproduces the recorded bytes exactly", () => {
    const requests = readFileSync(join(fixturesDir, "transcript_requests.txt"));
    const expected = readFileSync(join(fixturesDir, "transcript_responses.golden"));
    const proc = spawnSync("node", [mainJs, "echo-classifier"], {
      input: requests,
      cwd: fixturesDir,
    });
    expect(proc.status).toBe(0);
    expect(proc.stdout.equals(expected)).toBe(true);
  });
});
