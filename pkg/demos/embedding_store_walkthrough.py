"""
Embedding store round-trip
==========================

Write a feature matrix to the binary embedding format, read it back
bit-exactly, and see what the reader does with a damaged file.
"""

import struct
import tempfile
from pathlib import Path

import numpy as np

from gevkit.featurestore import (
    EmbeddingFormatError,
    EmbeddingMatrix,
    read_embeddings,
    write_embeddings,
)

work = Path(tempfile.mkdtemp())

###############################################################################
# A feature matrix is float32 rows plus one string id per row. Ids must be
# unique and every value finite; the constructor enforces both.

rng = np.random.default_rng(0)
matrix = EmbeddingMatrix(
    rng.standard_normal((5, 8)).astype(np.float32),
    [f"img-{i:03d}" for i in range(5)],
)
print("rows:", matrix.n_rows, "dims:", matrix.dims)

###############################################################################
# The on-disk layout is a fixed header (magic, version, row count, dims,
# dtype tag), a length-prefixed id table, then the raw little-endian float32
# payload. Nothing else — the format is meant to be trivially parseable from
# any language.

path = work / "demo.gevk"
write_embeddings(matrix, path)
blob = path.read_bytes()
magic, version, n_rows, dims, dtype_tag = struct.unpack_from("<4sIQQB", blob)
print("header:", magic, version, n_rows, dims, hex(dtype_tag))

###############################################################################
# Reading back reproduces the payload bit for bit, not merely to within
# rounding: the bytes on disk ARE the float32 values.

loaded = read_embeddings(path)
print("ids match:", loaded.row_ids == matrix.row_ids)
print("payload bit-exact:", loaded.values.tobytes() == matrix.values.tobytes())

###############################################################################
# Damaged files are rejected with a diagnostic naming what went wrong rather
# than producing garbage arrays.

for label, corrupted in [
    ("wrong magic", b"NOPE" + blob[4:]),
    ("truncated payload", blob[:-3]),
    ("trailing bytes", blob + b"\x00\x00"),
]:
    bad = work / "bad.gevk"
    bad.write_bytes(corrupted)
    try:
        read_embeddings(bad)
    except EmbeddingFormatError as exc:
        print(f"{label}: rejected ({exc})")
