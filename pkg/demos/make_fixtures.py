"""Generate the deterministic fixture set shipped under fixtures/.

Everything here is seeded, so re-running the script reproduces the committed
files byte for byte (same numpy build). The fixtures stand in for the private
assets a real study would hold: extracted feature files, a dataset manifest,
a survey export, and a run configuration wired to all of them.

Usage:
    python3 demos/make_fixtures.py [--out fixtures]
"""

import argparse
import json
from pathlib import Path

import numpy as np

from gevkit.featurestore import (
    DatasetManifest,
    EmbeddingMatrix,
    ImageRecord,
    load_prompt_vocabulary,
    prompt_row_id,
    write_embeddings,
)

VARIANTS = ("M0", "M1", "M2", "M3", "M4")

# Noise scale per variant: M1 closest to the reference distribution, M4
# farthest, M0 (the input distribution) in between — mirrors the ordering
# the comparison tables exhibit.
VARIANT_SPREAD = {"M0": 1.15, "M1": 1.02, "M2": 1.25, "M3": 1.30, "M4": 1.40}

SURVEY_TARGETS = {
    "pair-1": 33,
    "pair-2": 26,
    "pair-3": 29,
    "pair-4": 30,
    "pair-5": 27,
    "pair-6": 28,
}
ROLES = ("homeowner", "designer", "realtor")


def write_embedding_fixtures(out: Path, rng: np.random.Generator) -> None:
    dims = 16
    emb_dir = out / "embeddings"
    emb_dir.mkdir(parents=True, exist_ok=True)

    real = rng.standard_normal((100, dims)).astype(np.float32)
    write_embeddings(
        EmbeddingMatrix(real, [f"real-{i:03d}" for i in range(100)]),
        emb_dir / "real.gevk",
    )

    prompts = load_prompt_vocabulary()
    vectors = rng.standard_normal((len(prompts), dims))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    write_embeddings(
        EmbeddingMatrix(vectors.astype(np.float32), [prompt_row_id(p) for p in prompts]),
        emb_dir / "prompts.gevk",
    )

    for label in VARIANTS:
        rows = rng.standard_normal((10, dims)) * VARIANT_SPREAD[label]
        write_embeddings(
            EmbeddingMatrix(rows.astype(np.float32), [f"img-{i:03d}" for i in range(10)]),
            emb_dir / f"gen_{label}.gevk",
        )


def write_manifest_fixture(out: Path) -> None:
    prompts = load_prompt_vocabulary()
    records = [
        ImageRecord(
            id=f"kitchen-{i:03d}",
            source_uri=f"https://images.example/kitchen-{i:03d}.jpg",
            prompt=prompts[i % len(prompts)],
            negative_prompts=["clutter", "dark"],
        )
        for i in range(20)
    ]
    DatasetManifest(records=records, seed=7).save(out / "manifest.json")


def write_survey_fixture(out: Path) -> None:
    lines = ["respondent_id,pair_id,choice,confidence,helpfulness,role"]
    for r in range(1, 34):
        for j, (pair_id, k) in enumerate(sorted(SURVEY_TARGETS.items()), start=1):
            choice = "optimized" if r <= k else "original"
            confidence = 5 + (r + j) % 3
            helpfulness = 4 + (r + 2 * j) % 4
            role = ROLES[r % len(ROLES)]
            lines.append(f"r{r:02d},{pair_id},{choice},{confidence},{helpfulness},{role}")
    (out / "survey_responses.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_run_config(out: Path) -> None:
    emb = f"{out.name}/embeddings"
    config = {
        "manifest_path": f"{out.name}/manifest.json",
        "output_dir": "out",
        "formats": ["markdown", "json"],
        "normalization": {"kind": "global_min_max"},
        "giqa": {"K": 2, "q": 8, "max_iter": 200, "tol": 1e-6, "seed": 0, "knn_K": 5},
        "embeddings": {
            "clip": {
                "prompt_path": f"{emb}/prompts.gevk",
                "generated_paths": {v: f"{emb}/gen_{v}.gevk" for v in VARIANTS},
            },
            "giqa_gmm": {
                "reference_path": f"{emb}/real.gevk",
                "generated_paths": {v: f"{emb}/gen_{v}.gevk" for v in VARIANTS},
            },
            "giqa_knn": {
                "reference_path": f"{emb}/real.gevk",
                "generated_paths": {v: f"{emb}/gen_{v}.gevk" for v in VARIANTS},
            },
        },
        "report_means": {
            "clip": {
                "orientation": "higher_better",
                "means": {
                    "M0": 28.9447,
                    "M1": 30.9256,
                    "M2": 29.8510,
                    "M3": 29.5998,
                    "M4": 29.5652,
                },
            },
            "giqa_gmm": {
                "orientation": "lower_cost",
                "means": {
                    "M0": -7640876.0659,
                    "M1": -7668629.0891,
                    "M2": -9083346.2760,
                    "M3": -9135986.5661,
                    "M4": -9643285.8763,
                },
            },
            "giqa_knn": {
                "orientation": "lower_cost",
                "means": {
                    "M0": 9.3586,
                    "M1": 8.8503,
                    "M2": 9.7139,
                    "M3": 9.7910,
                    "M4": 9.9784,
                },
            },
        },
    }
    (out / "run_config.json").write_text(
        json.dumps(config, indent=2) + "\n", encoding="utf-8"
    )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="fixtures", help="output directory")
    parser.add_argument("--seed", type=int, default=20240817)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    write_embedding_fixtures(out, rng)
    write_manifest_fixture(out)
    write_survey_fixture(out)
    write_run_config(out)
    print(f"fixtures written to {out}/")


if __name__ == "__main__":
    main()
