/**
 * CLI entry point.
 *
 *   main.js echo-classifier
 *   main.js threshold-segmenter [--lo F] [--hi F] [--closing N] [--keep-largest]
 *   main.js svol-copy <in> <out>
 *
 * The first two serve the wire protocol on stdio until shutdown; svol-copy
 * decodes and re-encodes one volume file (a byte-fidelity check).
 */

import { echoClassifier, thresholdSegmenter } from "./demos.js";
import { serve } from "./protocol.js";
import { readSvol, writeSvol } from "./svol.js";

function parseSegmenterFlags(argv: string[]) {
  const params = { lo: 0.0, hi: 1.0, closingRadius: 0, keepLargest: false };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    if (flag === "--lo") params.lo = Number(argv[++i]);
    else if (flag === "--hi") params.hi = Number(argv[++i]);
    else if (flag === "--closing") params.closingRadius = Number(argv[++i]);
    else if (flag === "--keep-largest") params.keepLargest = true;
    else throw new Error(`unknown flag: ${flag}`);
  }
  if (!(params.lo < params.hi) || params.closingRadius < 0 || !Number.isInteger(params.closingRadius)) {
    throw new Error(`bad segmenter parameters: ${JSON.stringify(params)}`);
  }
  return params;
}

async function main(argv: string[]): Promise<number> {
  const command = argv[0];
  if (command === "echo-classifier") {
    await serve(echoClassifier());
    return 0;
  }
  if (command === "threshold-segmenter") {
    await serve(thresholdSegmenter(parseSegmenterFlags(argv.slice(1))));
    return 0;
  }
  if (command === "svol-copy") {
    const [src, dst] = argv.slice(1);
    if (!src || !dst) throw new Error("usage: svol-copy <in> <out>");
    writeSvol(readSvol(src), dst);
    return 0;
  }
  process.stderr.write(
    "usage: main.js echo-classifier | threshold-segmenter [flags] | svol-copy <in> <out>\n",
  );
  return 2;
}

main(process.argv.slice(2)).then(
  (code) => process.exit(code),
  (err) => {
    process.stderr.write(`${err instanceof Error ? err.message : String(err)}\n`);
    process.exit(1);
  },
);
