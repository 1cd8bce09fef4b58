/**
 * Feature encoders.
 *
 * An encoder turns raw image bytes or prompt text into a fixed-width float
 * vector. The encoder id travels with every output file so downstream
 * scoring can tell which feature space it is looking at.
 *
 * The shipped encoder is hash-derived rather than a neural network: feature
 * values are expanded from the SHA-256 of the input with a counter, which
 * keeps the full pipeline runnable and byte-reproducible on any machine.
 * Identical inputs give identical rows, and the file-format, manifest, and
 * scoring plumbing cannot tell the difference. Swap in a real
 * vision-language model by implementing the same interface.
 */

import { createHash } from "node:crypto";

export interface Encoder {
  readonly id: string;
  readonly dims: number;
  /** Returns null when the bytes are not a decodable image. */
  encodeImage(bytes: Buffer): Float32Array | null;
  encodeText(text: string): Float32Array;
}

// Magic-byte sniffing: enough to reject files that plainly are not images
// without pulling in a decoder.
const IMAGE_SIGNATURES: Array<{ offset: number; bytes: number[] }> = [
  { offset: 0, bytes: [0x89, 0x50, 0x4e, 0x47] }, // PNG
  { offset: 0, bytes: [0xff, 0xd8, 0xff] }, // JPEG
  { offset: 0, bytes: [0x42, 0x4d] }, // BMP
  { offset: 0, bytes: [0x47, 0x49, 0x46, 0x38] }, // GIF
  { offset: 8, bytes: [0x57, 0x45, 0x42, 0x50] }, // RIFF....WEBP
];

export function looksLikeImage(bytes: Buffer): boolean {
  return IMAGE_SIGNATURES.some(({ offset, bytes: sig }) =>
    sig.every((b, i) => bytes[offset + i] === b),
  );
}

/** Expand a digest into dims floats in [-1, 1) via counter-mode hashing. */
function expandDigest(digest: Buffer, dims: number): Float32Array {
  const out = new Float32Array(dims);
  let block = Buffer.alloc(0);
  let counter = 0;
  let used = 0;
  for (let i = 0; i < dims; i++) {
    if (used + 4 > block.length) {
      const ctr = Buffer.alloc(4);
      ctr.writeUInt32LE(counter++, 0);
      block = createHash("sha256").update(digest).update(ctr).digest();
      used = 0;
    }
    out[i] = block.readUInt32LE(used) / 2 ** 31 - 1;
    used += 4;
  }
  return out;
}

export class DeterministicEncoder implements Encoder {
  readonly id = "deterministic-v1";
  readonly dims: number;

  constructor(dims = 512) {
    if (!Number.isInteger(dims) || dims < 1) {
      throw new Error(`dims must be a positive integer, got ${dims}`);
    }
    this.dims = dims;
  }

  encodeImage(bytes: Buffer): Float32Array | null {
    if (!looksLikeImage(bytes)) {
      return null;
    }
    return expandDigest(createHash("sha256").update(bytes).digest(), this.dims);
  }

  encodeText(text: string): Float32Array {
    return expandDigest(
      createHash("sha256").update(Buffer.from(text, "utf-8")).digest(),
      this.dims,
    );
  }
}

export const ENCODERS: Record<string, (dims?: number) => Encoder> = {
  "deterministic-v1": (dims?: number) => new DeterministicEncoder(dims),
};

export function makeEncoder(encoderId: string, dims?: number): Encoder {
  const factory = ENCODERS[encoderId];
  if (!factory) {
    throw new Error(
      `unknown encoder ${JSON.stringify(encoderId)}, expected one of: ` +
        Object.keys(ENCODERS).join(", "),
    );
  }
  return factory(dims);
}
