import { describe, expect, it } from "vitest";

import {
  EmbeddingFormatError,
  decodeEmbeddings,
  encodeEmbeddings,
} from "../src/format.js";

function sample() {
  return {
    rowIds: ["a", "b", "c"],
    values: new Float32Array([1, 2, 3, 4, 5, 6]),
    dims: 2,
  };
}

describe("binary embedding format", () => {
  it("round-trips bit-exactly", () => {
    const matrix = sample();
    const decoded = decodeEmbeddings(encodeEmbeddings(matrix));
    expect(decoded.rowIds).toEqual(matrix.rowIds);
    expect(decoded.dims).toBe(2);
    expect(Buffer.from(decoded.values.buffer)).toEqual(
      Buffer.from(matrix.values.buffer),
    );
  });

  it("writes the documented header", () => {
    const blob = encodeEmbeddings(sample());
    expect(blob.toString("ascii", 0, 4)).toBe("GEVK");
    expect(blob.readUInt32LE(4)).toBe(1);
    expect(blob.readBigUInt64LE(8)).toBe(3n);
    expect(blob.readBigUInt64LE(16)).toBe(2n);
    expect(blob.readUInt8(24)).toBe(0x01);
  });

  it("rejects bad magic", () => {
    const blob = encodeEmbeddings(sample());
    blob.write("NOPE", 0, "ascii");
    expect(() => decodeEmbeddings(blob)).toThrow(EmbeddingFormatError);
    expect(() => decodeEmbeddings(blob)).toThrow(/bad magic/);
  });

  it("rejects an unsupported version", () => {
    const blob = encodeEmbeddings(sample());
    blob.writeUInt32LE(9, 4);
    expect(() => decodeEmbeddings(blob)).toThrow(/version mismatch/);
  });

  it("rejects truncation anywhere", () => {
    const blob = encodeEmbeddings(sample());
    expect(() => decodeEmbeddings(blob.subarray(0, 10))).toThrow(/truncated header/);
    expect(() => decodeEmbeddings(blob.subarray(0, 27))).toThrow(/row-id table/);
    expect(() => decodeEmbeddings(blob.subarray(0, blob.length - 1))).toThrow(
      /truncated payload/,
    );
  });

  it("rejects trailing bytes", () => {
    const blob = Buffer.concat([encodeEmbeddings(sample()), Buffer.from([0])]);
    expect(() => decodeEmbeddings(blob)).toThrow(/inconsistent/);
  });

  it("refuses duplicate ids and non-finite values", () => {
    expect(() =>
      encodeEmbeddings({ rowIds: ["a", "a"], values: new Float32Array(4), dims: 2 }),
    ).toThrow(/unique/);
    expect(() =>
      encodeEmbeddings({
        rowIds: ["a"],
        values: new Float32Array([Infinity]),
        dims: 1,
      }),
    ).toThrow(/finite/);
  });
});
