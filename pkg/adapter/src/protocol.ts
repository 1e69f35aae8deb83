/**
 * Server side of the model wire protocol: newline-delimited JSON requests on
 * stdin, one JSON response line per request on stdout.
 *
 *   {"op":"classify","volume":"<svol path>"}            -> {"ok":true,"scores":{...}}
 *   {"op":"segment","volume":"<in>","output":"<out>"}   -> {"ok":true}
 *   {"op":"shutdown"}                                   -> {"ok":true} then exit 0
 *
 * Any failure answers {"ok":false,"error":"..."} and the loop keeps running;
 * malformed input never crashes the server.  Requests are handled strictly
 * one at a time.
 */

import { createInterface } from "node:readline";
import { Volume, readSvol, writeSvol } from "./svol.js";

export interface AdapterHandler {
  classify?: (volume: Volume) => Record<string, number>;
  segment?: (volume: Volume) => Volume;
}

type Response =
  | { ok: true; scores?: Record<string, number> }
  | { ok: false; error: string };

function handleLine(line: string, handler: AdapterHandler): { response: Response; shutdown: boolean } {
  let request: unknown;
  try {
    request = JSON.parse(line);
  } catch {
    return { response: { ok: false, error: "invalid request line" }, shutdown: false };
  }
  if (typeof request !== "object" || request === null || Array.isArray(request)) {
    return { response: { ok: false, error: "request must be a JSON object" }, shutdown: false };
  }
  const req = request as Record<string, unknown>;
  const op = req.op;
  try {
    if (op === "shutdown") {
      return { response: { ok: true }, shutdown: true };
    }
    if (op === "classify") {
      if (!handler.classify) {
        return { response: { ok: false, error: "this model does not classify" }, shutdown: false };
      }
      const volume = readSvol(String(req.volume));
      const scores = handler.classify(volume);
      return { response: { ok: true, scores }, shutdown: false };
    }
    if (op === "segment") {
      if (!handler.segment) {
        return { response: { ok: false, error: "this model does not segment" }, shutdown: false };
      }
      const volume = readSvol(String(req.volume));
      const mask = handler.segment(volume);
      writeSvol(mask, String(req.output));
      return { response: { ok: true }, shutdown: false };
    }
    return { response: { ok: false, error: `unknown op: ${String(op)}` }, shutdown: false };
  } catch (err) {
    const message = err instanceof Error ? err.message : String(err);
    return { response: { ok: false, error: message }, shutdown: false };
  }
}

/** Run the request loop until shutdown (resolves) or stdin ends. */
export async function serve(
  handler: AdapterHandler,
  input: NodeJS.ReadableStream = process.stdin,
  output: NodeJS.WritableStream = process.stdout,
): Promise<void> {
  if (!handler.classify && !handler.segment) {
    throw new Error("handler must provide a classify or segment callback");
  }
  const lines = createInterface({ input, crlfDelay: Number.POSITIVE_INFINITY });
  for await (const line of lines) {
    if (!line.trim()) continue;
    const { response, shutdown } = handleLine(line, handler);
    output.write(JSON.stringify(response) + "\n");
    if (shutdown) {
      lines.close();
      return;
    }
  }
}
