"""
Semantic alignment scoring
==========================

Score image embeddings against a text prompt embedding with the scaled
clamped-cosine score, then normalize the raw scores for cross-metric
comparison.
"""

import numpy as np

from gevkit.featurestore import EmbeddingMatrix, ModelVariantId
from gevkit.metrics_clip import (
    NormalizationStrategy,
    clip_score,
    cosine,
    mean_score,
    normalize_scores,
    score_images,
)

###############################################################################
# The score is w * max(cos(u, v), 0) with w = 100: identical directions give
# exactly 100, orthogonal or opposed directions give 0.

u = np.array([1.0, 0.0, 0.0])
print("aligned:   ", clip_score(u, u))
print("orthogonal:", clip_score(u, np.array([0.0, 1.0, 0.0])))
print("opposed:   ", clip_score(u, -u))
print("cosine at 45 degrees:", round(cosine(u, np.array([1.0, 1.0, 0.0])), 6))

###############################################################################
# Batch scoring: one series per model variant, each image embedding scored
# against the same prompt embedding.

rng = np.random.default_rng(3)
prompt = rng.standard_normal(8)
images = EmbeddingMatrix(
    rng.standard_normal((6, 8)).astype(np.float32),
    [f"img-{i}" for i in range(6)],
)
series = score_images(images, prompt, variant=ModelVariantId("M1"))
print("\nper-image raw scores:")
for image_id, value in sorted(series.per_image.items()):
    print(f"  {image_id}: {value:8.4f}")
print("mean:", round(mean_score(series), 4))

###############################################################################
# Normalization maps raw scores onto [0, 1] so different metrics can share an
# axis. The global min-max strategy pools every series handed to it; the
# per-image strategy rescales each image across variants instead.

other = score_images(images, rng.standard_normal(8), variant=ModelVariantId("M2"))
normalized = normalize_scores(
    [series, other], NormalizationStrategy(kind="global_min_max")
)
for s in normalized:
    values = [round(v, 3) for _, v in sorted(s.per_image.items())]
    print(f"{s.variant.label} normalized: {values}")
