#!/usr/bin/env node
/**
 * gevk-extract: turn an image directory and/or a prompt list into binary
 * embedding files readable by the scoring toolkit.
 *
 * Exit codes: 0 success, 2 usage or input error, 1 anything unexpected.
 */

import { readFileSync } from "node:fs";
import { parseArgs } from "node:util";

import { makeEncoder } from "./encoder.js";
import { runExtraction } from "./extract.js";

const USAGE = `usage: gevk-extract [options]

  --images DIR         directory of images to encode
  --prompts-file FILE  prompt list, one per line ('#' comments allowed)
  --encoder ID         encoder identifier (default deterministic-v1)
  --out-images FILE    where to write the image embedding file
  --out-prompts FILE   where to write the prompt embedding file
  --no-normalize       keep raw feature rows instead of unit-normalizing
`;

export function loadPrompts(path: string): string[] {
  return readFileSync(path, "utf-8")
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0 && !line.startsWith("#"));
}

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      options: {
        images: { type: "string" },
        "prompts-file": { type: "string" },
        encoder: { type: "string", default: "deterministic-v1" },
        "out-images": { type: "string" },
        "out-prompts": { type: "string" },
        "no-normalize": { type: "boolean", default: false },
        help: { type: "boolean", default: false },
      },
      strict: true,
    });
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    console.error(USAGE);
    return 2;
  }
  const opts = parsed.values;
  if (opts.help) {
    console.log(USAGE);
    return 0;
  }

  try {
    const report = runExtraction({
      imageDir: opts.images,
      prompts:
        opts["prompts-file"] !== undefined ? loadPrompts(opts["prompts-file"]) : undefined,
      encoder: makeEncoder(opts.encoder as string),
      outImages: opts["out-images"],
      outPrompts: opts["out-prompts"],
      normalizeRows: !opts["no-normalize"],
    });
    for (const line of report.skipped) {
      console.error(`skipped ${line}`);
    }
    if (report.imagesWritten > 0) {
      console.error(`wrote ${report.imagesWritten} image rows to ${opts["out-images"]}`);
    }
    if (report.promptsWritten > 0) {
      console.error(`wrote ${report.promptsWritten} prompt rows to ${opts["out-prompts"]}`);
    }
    return 0;
  } catch (err) {
    if (err instanceof Error) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    console.error(err);
    return 1;
  }
}

// Run only when invoked as a script, not when imported by tests.
if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}
