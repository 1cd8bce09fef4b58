/**
 * Binary embedding file IO.
 *
 * Layout (all integers little-endian):
 *   magic   4 bytes  "GEVK"
 *   version u32      1
 *   n_rows  u64
 *   dims    u64
 *   dtype   u8       0x01 = float32 LE
 *   ids     n_rows × (u32 length prefix + UTF-8 bytes)
 *   payload n_rows × dims × 4 bytes, row-major float32
 */

export const MAGIC = "GEVK";
export const FORMAT_VERSION = 1;
export const DTYPE_FLOAT32_LE = 0x01;

const HEADER_SIZE = 4 + 4 + 8 + 8 + 1;

export class EmbeddingFormatError extends Error {}

export interface EmbeddingMatrix {
  rowIds: string[];
  /** Row-major values, rowIds.length × dims. */
  values: Float32Array;
  dims: number;
}

function checkMatrix(matrix: EmbeddingMatrix): void {
  const { rowIds, values, dims } = matrix;
  if (rowIds.length < 1 || dims < 1) {
    throw new EmbeddingFormatError("matrix must be at least 1x1");
  }
  if (values.length !== rowIds.length * dims) {
    throw new EmbeddingFormatError(
      `values length ${values.length} != ${rowIds.length} rows x ${dims} dims`,
    );
  }
  if (new Set(rowIds).size !== rowIds.length) {
    throw new EmbeddingFormatError("row ids must be unique");
  }
  for (const v of values) {
    if (!Number.isFinite(v)) {
      throw new EmbeddingFormatError("values must be finite");
    }
  }
}

export function encodeEmbeddings(matrix: EmbeddingMatrix): Buffer {
  checkMatrix(matrix);
  const idBlobs = matrix.rowIds.map((id) => Buffer.from(id, "utf-8"));
  const idTableSize = idBlobs.reduce((sum, blob) => sum + 4 + blob.length, 0);
  const payloadSize = matrix.values.length * 4;
  const out = Buffer.alloc(HEADER_SIZE + idTableSize + payloadSize);

  out.write(MAGIC, 0, "ascii");
  out.writeUInt32LE(FORMAT_VERSION, 4);
  out.writeBigUInt64LE(BigInt(matrix.rowIds.length), 8);
  out.writeBigUInt64LE(BigInt(matrix.dims), 16);
  out.writeUInt8(DTYPE_FLOAT32_LE, 24);

  let offset = HEADER_SIZE;
  for (const blob of idBlobs) {
    out.writeUInt32LE(blob.length, offset);
    offset += 4;
    blob.copy(out, offset);
    offset += blob.length;
  }
  for (const v of matrix.values) {
    out.writeFloatLE(v, offset);
    offset += 4;
  }
  return out;
}

export function decodeEmbeddings(buf: Buffer): EmbeddingMatrix {
  if (buf.length < HEADER_SIZE) {
    throw new EmbeddingFormatError(
      `truncated header: ${buf.length} bytes, need ${HEADER_SIZE}`,
    );
  }
  const magic = buf.toString("ascii", 0, 4);
  if (magic !== MAGIC) {
    throw new EmbeddingFormatError(`bad magic: ${JSON.stringify(magic)}`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== FORMAT_VERSION) {
    throw new EmbeddingFormatError(
      `version mismatch: file has ${version}, reader supports ${FORMAT_VERSION}`,
    );
  }
  const nRows = buf.readBigUInt64LE(8);
  const dims = buf.readBigUInt64LE(16);
  if (nRows < 1n || dims < 1n) {
    throw new EmbeddingFormatError(`invalid shape: ${nRows} x ${dims}`);
  }
  const dtype = buf.readUInt8(24);
  if (dtype !== DTYPE_FLOAT32_LE) {
    throw new EmbeddingFormatError(`unknown dtype tag 0x${dtype.toString(16)}`);
  }

  const n = Number(nRows);
  const d = Number(dims);
  let offset = HEADER_SIZE;
  const rowIds: string[] = [];
  for (let i = 0; i < n; i++) {
    if (offset + 4 > buf.length) {
      throw new EmbeddingFormatError(`truncated row-id table at row ${i}`);
    }
    const len = buf.readUInt32LE(offset);
    offset += 4;
    if (offset + len > buf.length) {
      throw new EmbeddingFormatError(`truncated row-id table at row ${i}`);
    }
    rowIds.push(buf.toString("utf-8", offset, offset + len));
    offset += len;
  }

  const expected = n * d * 4;
  const remaining = buf.length - offset;
  if (remaining < expected) {
    throw new EmbeddingFormatError(
      `truncated payload: expected ${expected} bytes, found ${remaining}`,
    );
  }
  if (remaining > expected) {
    throw new EmbeddingFormatError(
      `dims/rows inconsistent with file size: ${remaining - expected} trailing bytes`,
    );
  }

  const values = new Float32Array(n * d);
  for (let i = 0; i < values.length; i++) {
    values[i] = buf.readFloatLE(offset + i * 4);
  }
  const matrix = { rowIds, values, dims: d };
  checkMatrix(matrix);
  return matrix;
}
