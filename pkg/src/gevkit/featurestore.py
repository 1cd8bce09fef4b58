"""Feature-matrix persistence, dataset manifests, splits, and training-config files.

The embedding file format is binary and bit-exact: a header (magic, version,
shape, dtype code), a row-id table, then the float32 payload in row-major
order. Everything else in this module is UTF-8 JSON.
"""

from __future__ import annotations

import json
import math
import os
import random
import struct
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"GEVK"
FORMAT_VERSION = 1
DTYPE_FLOAT32_LE = 0x01

VARIANT_LABELS = ("M0", "M1", "M2", "M3", "M4")
SPLIT_NAMES = ("train", "val", "test")

# Seed vocabulary for prompt annotation; an editable copy can be passed to
# load_prompt_vocabulary instead.
DEFAULT_PROMPT_VOCABULARY = (
    "open shelving",
    "transparent cabinetry",
    "non-slip flooring",
    "under-cabinet lighting",
)

UNSPLASH_API_KEY_ENV = "UNSPLASH_ACCESS_KEY"
UNSPLASH_BASE_URL = "https://api.unsplash.com"


class EmbeddingFormatError(ValueError):
    """Raised when an embedding file violates the binary format contract."""


@dataclass
class EmbeddingMatrix:
    """Dense row-major matrix of feature vectors, one row per image or prompt."""

    values: np.ndarray
    row_ids: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {self.values.shape}")
        n_rows, dims = self.values.shape
        if n_rows < 1 or dims < 1:
            raise ValueError(f"matrix must be at least 1x1, got {n_rows}x{dims}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("matrix contains non-finite values")
        self.row_ids = [str(r) for r in self.row_ids]
        if len(self.row_ids) != n_rows:
            raise ValueError(
                f"row_ids length {len(self.row_ids)} != n_rows {n_rows}"
            )
        if len(set(self.row_ids)) != n_rows:
            raise ValueError("row_ids must be unique")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def dims(self) -> int:
        return self.values.shape[1]

    def row(self, row_id: str) -> np.ndarray:
        return self.values[self.row_ids.index(row_id)]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return self.row_ids == other.row_ids and np.array_equal(
            self.values, other.values
        )


def write_embeddings(matrix: EmbeddingMatrix, destination: str | Path) -> None:
    """Write *matrix* to *destination* in the binary embedding format."""
    header = struct.pack(
        "<4sIQQB", MAGIC, FORMAT_VERSION, matrix.n_rows, matrix.dims, DTYPE_FLOAT32_LE
    )
    parts = [header]
    for row_id in matrix.row_ids:
        encoded = row_id.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
    payload = np.ascontiguousarray(matrix.values, dtype="<f4")
    parts.append(payload.tobytes())
    Path(destination).write_bytes(b"".join(parts))


def read_embeddings(source: str | Path) -> EmbeddingMatrix:
    """Read an embedding file, validating the header before the payload."""
    data = Path(source).read_bytes()
    header_size = struct.calcsize("<4sIQQB")
    if len(data) < header_size:
        raise EmbeddingFormatError(f"truncated header: {len(data)} bytes")
    magic, version, n_rows, dims, dtype_code = struct.unpack(
        "<4sIQQB", data[:header_size]
    )
    if magic != MAGIC:
        raise EmbeddingFormatError(f"bad magic: {magic!r}")
    if version != FORMAT_VERSION:
        raise EmbeddingFormatError(
            f"version mismatch: file has {version}, reader supports {FORMAT_VERSION}"
        )
    if dtype_code != DTYPE_FLOAT32_LE:
        raise EmbeddingFormatError(f"unsupported dtype code 0x{dtype_code:02x}")
    if n_rows < 1 or dims < 1:
        raise EmbeddingFormatError(f"invalid shape in header: {n_rows}x{dims}")

    offset = header_size
    row_ids = []
    for _ in range(n_rows):
        if offset + 4 > len(data):
            raise EmbeddingFormatError("truncated row-id table")
        (length,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if offset + length > len(data):
            raise EmbeddingFormatError("truncated row-id table")
        row_ids.append(data[offset : offset + length].decode("utf-8"))
        offset += length

    expected = n_rows * dims * 4
    remaining = len(data) - offset
    if remaining < expected:
        raise EmbeddingFormatError(
            f"truncated payload: expected {expected} bytes, found {remaining}"
        )
    if remaining > expected:
        raise EmbeddingFormatError(
            f"dims/rows inconsistent with file size: {remaining - expected} trailing bytes"
        )
    values = np.frombuffer(data, dtype="<f4", count=n_rows * dims, offset=offset)
    return EmbeddingMatrix(values.reshape(n_rows, dims).copy(), row_ids)


@dataclass(frozen=True)
class ModelVariantId:
    """One of the compared model variants; M0 is the baseline input distribution."""

    label: str

    def __post_init__(self):
        if self.label not in VARIANT_LABELS:
            raise ValueError(
                f"unknown variant label {self.label!r}, expected one of {VARIANT_LABELS}"
            )

    @property
    def is_baseline(self) -> bool:
        return self.label == "M0"


@dataclass
class ImageRecord:
    """A single dataset image with its annotation and assignment metadata.

    ``split`` is None until a split has been assigned; ``variant`` is None for
    source photos that do not belong to a generated variant set.
    """

    id: str
    source_uri: str = ""
    prompt: str = ""
    negative_prompts: list[str] = field(default_factory=list)
    split: str | None = None
    variant: ModelVariantId | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if self.split is not None and self.split not in SPLIT_NAMES:
            raise ValueError(f"split must be one of {SPLIT_NAMES}, got {self.split!r}")


@dataclass
class DatasetManifest:
    """Image records plus the split configuration that governs them."""

    records: list[ImageRecord]
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        self.split_ratios = tuple(float(r) for r in self.split_ratios)
        if len(self.split_ratios) != 3:
            raise ValueError("split_ratios must have exactly three entries")
        if any(r < 0 for r in self.split_ratios):
            raise ValueError("split ratios must be non-negative")
        if abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ValueError(
                f"split ratios must sum to 1, got {sum(self.split_ratios)!r}"
            )
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("record ids must be unique within a manifest")

    def to_json(self) -> str:
        payload = {
            "split_ratios": list(self.split_ratios),
            "seed": self.seed,
            "records": [
                {
                    "id": r.id,
                    "source_uri": r.source_uri,
                    "prompt": r.prompt,
                    "negative_prompts": list(r.negative_prompts),
                    "split": r.split,
                    "variant": r.variant.label if r.variant else None,
                }
                for r in self.records
            ],
        }
        return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        payload = json.loads(text)
        records = [
            ImageRecord(
                id=r["id"],
                source_uri=r.get("source_uri", ""),
                prompt=r.get("prompt", ""),
                negative_prompts=list(r.get("negative_prompts", [])),
                split=r.get("split"),
                variant=ModelVariantId(r["variant"]) if r.get("variant") else None,
            )
            for r in payload["records"]
        ]
        return cls(
            records=records,
            split_ratios=tuple(payload.get("split_ratios", (0.8, 0.1, 0.1))),
            seed=int(payload.get("seed", 0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def split_dataset(manifest: DatasetManifest) -> DatasetManifest:
    """Assign every record to exactly one split with a seeded shuffle.

    val and test sizes are floor(ratio * n); the remainder goes to train.
    Re-running with the same seed reproduces the assignment exactly.
    """
    n = len(manifest.records)
    if n < 3:
        raise ValueError(f"fewer than 3 records ({n}); cannot split")
    _, r_val, r_test = manifest.split_ratios
    n_val = math.floor(r_val * n)
    n_test = math.floor(r_test * n)
    if n_val == 0 or n_test == 0:
        warnings.warn(
            f"split of {n} records leaves val={n_val}, test={n_test}; "
            "floor rule sends the remainder to train",
            stacklevel=2,
        )

    order = list(range(n))
    random.Random(manifest.seed).shuffle(order)
    assignment = {}
    for pos, idx in enumerate(order):
        if pos < n_val:
            assignment[idx] = "val"
        elif pos < n_val + n_test:
            assignment[idx] = "test"
        else:
            assignment[idx] = "train"

    records = [
        ImageRecord(
            id=r.id,
            source_uri=r.source_uri,
            prompt=r.prompt,
            negative_prompts=list(r.negative_prompts),
            split=assignment[i],
            variant=r.variant,
        )
        for i, r in enumerate(manifest.records)
    ]
    return DatasetManifest(
        records=records, split_ratios=manifest.split_ratios, seed=manifest.seed
    )


def resize_normalize(pixels, width: int, height: int) -> np.ndarray:
    """Bilinearly resample an 8-bit RGB buffer to 512x512 and scale to [0, 1].

    *pixels* may be bytes or any array-like of uint8 with width*height*3
    entries (or an (height, width, 3) array). Sampling uses half-pixel
    centers with edge clamping, so a 512x512 input passes through unchanged
    up to the division by 255.
    """
    if width < 1 or height < 1:
        raise ValueError(f"width and height must be >= 1, got {width}x{height}")
    buf = np.frombuffer(pixels, dtype=np.uint8) if isinstance(
        pixels, (bytes, bytearray)
    ) else np.asarray(pixels, dtype=np.uint8)
    if buf.size == 0:
        raise ValueError("empty pixel buffer")
    if buf.size != width * height * 3:
        raise ValueError(
            f"buffer length {buf.size} does not match {width}x{height}x3"
        )
    img = buf.reshape(height, width, 3).astype(np.float64)

    out_size = 512
    # Half-pixel-center sample positions, clamped to the valid range so the
    # borders replicate edge pixels.
    src_y = np.clip(
        (np.arange(out_size) + 0.5) * (height / out_size) - 0.5, 0, height - 1
    )
    src_x = np.clip(
        (np.arange(out_size) + 0.5) * (width / out_size) - 0.5, 0, width - 1
    )
    y0 = np.floor(src_y).astype(int)
    x0 = np.floor(src_x).astype(int)
    y1 = np.minimum(y0 + 1, height - 1)
    x1 = np.minimum(x0 + 1, width - 1)
    fy = (src_y - y0)[:, None, None]
    fx = (src_x - x0)[None, :, None]

    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bottom = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    out = top * (1 - fy) + bottom * fy
    return out / 255.0


def load_prompt_vocabulary(path: str | Path | None = None) -> list[str]:
    """Load the prompt vocabulary, one phrase per line; '#' lines are comments."""
    if path is None:
        from importlib import resources

        text = (
            resources.files("gevkit").joinpath("data/hdg_prompts.txt").read_text("utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    phrases = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            phrases.append(line)
    return phrases


def prompt_row_id(text: str) -> str:
    """Deterministic row id for a prompt string (joins prompts to text embeddings)."""
    import hashlib

    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def fetch_images(
    query: str,
    count: int,
    api_key: str | None = None,
    dest_dir: str | Path | None = None,
    base_url: str = UNSPLASH_BASE_URL,
    requests_per_second: float = 5.0,
    timeout: float = 30.0,
) -> list[ImageRecord]:
    """Search the stock-photo API and return up to *count* image records.

    When *dest_dir* is given, each photo is also downloaded there; download
    failures are reported per item and do not abort the batch. With
    ``api_key=None`` the key is taken from the UNSPLASH_ACCESS_KEY
    environment variable.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return []
    if api_key is None:
        api_key = os.environ.get(UNSPLASH_API_KEY_ENV, "")
    if not api_key:
        raise ValueError(
            f"missing API key: pass api_key or set {UNSPLASH_API_KEY_ENV}"
        )

    import requests

    min_interval = 1.0 / requests_per_second if requests_per_second > 0 else 0.0
    last_request = 0.0

    def throttled_get(url, **kwargs):
        nonlocal last_request
        wait = min_interval - (time.monotonic() - last_request)
        if wait > 0:
            time.sleep(wait)
        last_request = time.monotonic()
        return requests.get(url, timeout=timeout, **kwargs)

    headers = {"Authorization": f"Client-ID {api_key}"}
    records: list[ImageRecord] = []
    page = 1
    while len(records) < count:
        resp = throttled_get(
            f"{base_url}/search/photos",
            params={"query": query, "per_page": min(count - len(records), 30), "page": page},
            headers=headers,
        )
        if resp.status_code == 403:
            raise RuntimeError(f"quota exceeded: {resp.text[:200]}")
        resp.raise_for_status()
        results = resp.json().get("results", [])
        if not results:
            break
        for item in results:
            try:
                photo_id = item["id"]
                uri = item["urls"].get("regular") or item["urls"]["full"]
            except (KeyError, TypeError):
                continue
            records.append(ImageRecord(id=photo_id, source_uri=uri))
            if len(records) >= count:
                break
        page += 1

    if dest_dir is not None:
        dest = Path(dest_dir)
        dest.mkdir(parents=True, exist_ok=True)
        for record in records:
            try:
                resp = throttled_get(record.source_uri, headers=headers)
                resp.raise_for_status()
                (dest / f"{record.id}.jpg").write_bytes(resp.content)
            except Exception as exc:  # per-item failures are not fatal
                warnings.warn(f"download failed for {record.id}: {exc}", stacklevel=2)
    return records


@dataclass
class TrainConfig:
    """Hyperparameters serialized for an external fine-tuning run."""

    learning_rate: float = 1e-4
    batch_size: int = 4
    steps: int = 10000
    prompt_dropout: float = 0.5
    negative_prompts: list[str] = field(
        default_factory=lambda: ["clutter", "dark"]
    )
    conditioning: set[str] = field(default_factory=set)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.prompt_dropout <= 1:
            raise ValueError("prompt_dropout must be within [0, 1]")
        if self.steps <= 0:
            raise ValueError("steps must be > 0")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be > 0")
        allowed = {"canny_edge", "depth"}
        unknown = set(self.conditioning) - allowed
        if unknown:
            raise ValueError(f"unknown conditioning modes: {sorted(unknown)}")
        self.conditioning = set(self.conditioning)


def emit_train_config(config: TrainConfig, destination: str | Path) -> None:
    """Serialize *config* as JSON consumable by an external trainer."""
    payload = {
        "learning_rate": config.learning_rate,
        "batch_size": config.batch_size,
        "steps": config.steps,
        "prompt_dropout": config.prompt_dropout,
        "negative_prompts": list(config.negative_prompts),
        "conditioning": sorted(config.conditioning),
    }
    Path(destination).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def parse_train_config(source: str | Path) -> TrainConfig:
    payload = json.loads(Path(source).read_text(encoding="utf-8"))
    return TrainConfig(
        learning_rate=payload["learning_rate"],
        batch_size=payload["batch_size"],
        steps=payload["steps"],
        prompt_dropout=payload["prompt_dropout"],
        negative_prompts=list(payload["negative_prompts"]),
        conditioning=set(payload.get("conditioning", [])),
    )
