/**
 * Extraction jobs: directory of images and/or a prompt list in, binary
 * embedding files out. Output rows are sorted by row id so repeated runs
 * are byte-identical, and every output file round-trips through the
 * format reader before it is written.
 */

import { createHash } from "node:crypto";
import { readFileSync, readdirSync, writeFileSync } from "node:fs";
import { basename, extname, join } from "node:path";

import { Encoder } from "./encoder.js";
import { EmbeddingMatrix, decodeEmbeddings, encodeEmbeddings } from "./format.js";

export interface ExtractionJob {
  imageDir?: string;
  prompts?: string[];
  encoder: Encoder;
  outImages?: string;
  outPrompts?: string;
  /** Scale every row to unit L2 norm (default true). */
  normalizeRows?: boolean;
}

export interface ExtractionReport {
  imagesWritten: number;
  promptsWritten: number;
  /** One human-readable line per skipped file. */
  skipped: string[];
}

const IMAGE_EXTENSIONS = new Set([".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"]);

/** First 16 hex digits of the SHA-256 of the prompt text. */
export function promptRowId(text: string): string {
  return createHash("sha256").update(Buffer.from(text, "utf-8")).digest("hex").slice(0, 16);
}

function normalized(row: Float32Array): Float32Array {
  let sumSquares = 0;
  for (const v of row) {
    sumSquares += v * v;
  }
  const norm = Math.sqrt(sumSquares);
  if (norm === 0) {
    throw new Error("zero feature vector cannot be normalized");
  }
  const out = new Float32Array(row.length);
  for (let i = 0; i < row.length; i++) {
    out[i] = row[i] / norm;
  }
  return out;
}

function assemble(
  rows: Array<{ id: string; row: Float32Array }>,
  dims: number,
  normalizeRows: boolean,
): EmbeddingMatrix {
  rows.sort((a, b) => (a.id < b.id ? -1 : a.id > b.id ? 1 : 0));
  const values = new Float32Array(rows.length * dims);
  rows.forEach(({ row }, i) => {
    values.set(normalizeRows ? normalized(row) : row, i * dims);
  });
  return { rowIds: rows.map((r) => r.id), values, dims };
}

export function extractImageEmbeddings(
  imageDir: string,
  encoder: Encoder,
  normalizeRows = true,
): { matrix: EmbeddingMatrix; skipped: string[] } {
  const entries = readdirSync(imageDir, { withFileTypes: true })
    .filter((e) => e.isFile())
    .map((e) => e.name)
    .sort();

  const skipped: string[] = [];
  const rows: Array<{ id: string; row: Float32Array }> = [];
  const seen = new Map<string, string>();
  for (const name of entries) {
    if (!IMAGE_EXTENSIONS.has(extname(name).toLowerCase())) {
      skipped.push(`${name}: not an image file`);
      continue;
    }
    const row = encoder.encodeImage(readFileSync(join(imageDir, name)));
    if (row === null) {
      skipped.push(`${name}: not a decodable image`);
      continue;
    }
    const id = basename(name, extname(name));
    const clash = seen.get(id);
    if (clash !== undefined) {
      throw new Error(`row id ${JSON.stringify(id)} from both ${clash} and ${name}`);
    }
    seen.set(id, name);
    rows.push({ id, row });
  }
  if (rows.length === 0) {
    throw new Error(`no decodable images in ${imageDir}`);
  }
  return { matrix: assemble(rows, encoder.dims, normalizeRows), skipped };
}

export function extractTextEmbeddings(
  prompts: string[],
  encoder: Encoder,
  normalizeRows = true,
): EmbeddingMatrix {
  if (prompts.length === 0) {
    throw new Error("no prompts to extract");
  }
  // A repeated prompt encodes to an identical row; its id gets a counter
  // suffix because row ids must stay unique.
  const counts = new Map<string, number>();
  const rows = prompts.map((text) => {
    const base = promptRowId(text);
    const n = counts.get(base) ?? 0;
    counts.set(base, n + 1);
    return { id: n === 0 ? base : `${base}-${n}`, row: encoder.encodeText(text) };
  });
  return assemble(rows, encoder.dims, normalizeRows);
}

function writeMatrix(
  matrix: EmbeddingMatrix,
  path: string,
  kind: "images" | "prompts",
  encoder: Encoder,
  normalizeRows: boolean,
): void {
  const blob = encodeEmbeddings(matrix);
  decodeEmbeddings(blob); // refuse to write anything the reader would reject
  writeFileSync(path, blob);
  const meta = {
    kind,
    encoder_id: encoder.id,
    dims: matrix.dims,
    n_rows: matrix.rowIds.length,
    normalize_rows: normalizeRows,
  };
  writeFileSync(`${path}.meta.json`, JSON.stringify(meta, null, 2) + "\n");
}

export function runExtraction(job: ExtractionJob): ExtractionReport {
  const normalizeRows = job.normalizeRows ?? true;
  const report: ExtractionReport = { imagesWritten: 0, promptsWritten: 0, skipped: [] };

  let images: EmbeddingMatrix | undefined;
  let texts: EmbeddingMatrix | undefined;
  if (job.outImages !== undefined) {
    if (job.imageDir === undefined) {
      throw new Error("--out-images requires an image directory");
    }
    const result = extractImageEmbeddings(job.imageDir, job.encoder, normalizeRows);
    images = result.matrix;
    report.skipped = result.skipped;
  }
  if (job.outPrompts !== undefined) {
    if (job.prompts === undefined || job.prompts.length === 0) {
      throw new Error("--out-prompts requires a non-empty prompt list");
    }
    texts = extractTextEmbeddings(job.prompts, job.encoder, normalizeRows);
  }
  if (images === undefined && texts === undefined) {
    throw new Error("nothing to do: pass --out-images and/or --out-prompts");
  }
  if (images !== undefined && texts !== undefined && images.dims !== texts.dims) {
    throw new Error(`image dims ${images.dims} != prompt dims ${texts.dims}`);
  }

  if (images !== undefined && job.outImages !== undefined) {
    writeMatrix(images, job.outImages, "images", job.encoder, normalizeRows);
    report.imagesWritten = images.rowIds.length;
  }
  if (texts !== undefined && job.outPrompts !== undefined) {
    writeMatrix(texts, job.outPrompts, "prompts", job.encoder, normalizeRows);
    report.promptsWritten = texts.rowIds.length;
  }
  return report;
}
