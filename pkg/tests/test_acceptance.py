"""Acceptance gate: one test per headline guarantee, at its stated tolerance.

Each test below pins an end-to-end behaviour of the toolkit against reference
numbers or an independent oracle: the three comparison tables derive
cell-for-cell from their raw means, the survey fixture reproduces the
reference preference outcomes with exact-method confidence intervals checked
against a 60-digit bisection oracle, and the numerical core (EM, KNN,
special functions, binary format) matches independent constructions at the
tolerances stated inline. Run with -v to get one pass/fail line per
guarantee.
"""

import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from gevkit.featurestore import (
    EmbeddingFormatError,
    EmbeddingMatrix,
    read_embeddings,
    write_embeddings,
)
from gevkit.metrics_giqa import KnnIndex, gmm_fit, knn_score
from gevkit.ranking import build_report, round_half_away
from gevkit.surveystats import (
    LikertSummary,
    aggregate_preferences,
    beta_inv,
    binom_test_one_sided,
    clopper_pearson,
    one_sample_t,
    parse_survey_csv,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# Reference raw means and the derived columns they must reproduce exactly
# at 1-decimal half-away-from-zero rounding: label -> (% quality, vs M0, rank).

CLIP_MEANS = {
    "M0": 28.9447,
    "M1": 30.9256,
    "M2": 29.8510,
    "M3": 29.5998,
    "M4": 29.5652,
}
CLIP_DERIVED = {
    "M1": (100.0, 6.8, 1),
    "M2": (96.5, 3.1, 2),
    "M3": (95.7, 2.3, 3),
    "M4": (95.6, 2.1, 4),
}

GMM_MEANS = {
    "M0": -7640876.0659,
    "M1": -7668629.0891,
    "M2": -9083346.2760,
    "M3": -9135986.5661,
    "M4": -9643285.8763,
}
GMM_DERIVED = {
    "M1": (100.0, -0.4, 1),
    "M2": (84.4, -18.9, 2),
    "M3": (83.9, -19.6, 3),
    "M4": (79.5, -26.2, 4),
}

KNN_MEANS = {
    "M0": 9.3586,
    "M1": 8.8503,
    "M2": 9.7139,
    "M3": 9.7910,
    "M4": 9.9784,
}
KNN_DERIVED = {
    "M1": (100.0, 5.4, 1),
    "M2": (91.1, -3.8, 2),
    "M3": (90.4, -4.6, 3),
    "M4": (88.7, -6.6, 4),
}

# 95% Clopper-Pearson bounds frozen from a 220-step bisection of the
# regularized incomplete beta at 60 decimal digits (mpmath); the defining
# equations I_lo(k, n-k+1) = 0.025 and I_hi(k+1, n-k) = 0.975 were verified
# to 1e-45 before freezing.
CP_ORACLE = {
    (33, 33): ("0.89423718992542069904", "1.0"),
    (26, 33): ("0.61091908032588654157", "0.91019575545729865039"),
    (29, 33): ("0.71798377146277964298", "0.9659671185770213185"),
    (30, 33): ("0.75668364924084494785", "0.98084505701259507417"),
    (27, 33): ("0.64539944054973107983", "0.93021211633369001683"),
    (28, 33): ("0.68101018028956359441", "0.94891130064391878494"),
    (173, 198): ("0.81927574645914731119", "0.91659601683062709128"),
}

# Reference interval cells as quoted alongside the survey results, in
# display percent. Four of the six match the exact construction; see
# test_quoted_intervals_all_match_exact_construction for the two that don't.
QUOTED_INTERVALS = {
    "pair-1": (89.4, 100.0),
    "pair-2": (60.3, 91.3),
    "pair-3": (71.8, 96.6),
    "pair-4": (75.7, 98.1),
    "pair-5": (64.5, 93.0),
    "pair-6": (67.5, 95.2),
}
CONSISTENT_PAIRS = ("pair-1", "pair-3", "pair-4", "pair-5")

EXPECTED_COUNTS = {
    "pair-1": 33,
    "pair-2": 26,
    "pair-3": 29,
    "pair-4": 30,
    "pair-5": 27,
    "pair-6": 28,
}
EXPECTED_PERCENTS = {
    "pair-1": 100,
    "pair-2": 79,
    "pair-3": 88,
    "pair-4": 91,
    "pair-5": 82,
    "pair-6": 85,
}


def derived_cells(means, orientation):
    report = build_report(means, orientation, metric="clip")
    return {
        s.variant.label: (
            round_half_away(s.pct_quality, 1),
            round_half_away(s.vs_input, 1),
            s.rank,
        )
        for s in report.summaries
        if not s.variant.is_baseline
    }


def test_clip_table_columns_exact():
    start = time.perf_counter()
    assert derived_cells(CLIP_MEANS, "higher_better") == CLIP_DERIVED
    assert time.perf_counter() - start < 1.0


def test_gmm_table_columns_exact():
    start = time.perf_counter()
    assert derived_cells(GMM_MEANS, "lower_cost") == GMM_DERIVED
    assert time.perf_counter() - start < 1.0


def test_knn_table_columns_exact():
    start = time.perf_counter()
    assert derived_cells(KNN_MEANS, "lower_cost") == KNN_DERIVED
    assert time.perf_counter() - start < 1.0


def test_survey_fixture_reproduces_reference_outcomes():
    start = time.perf_counter()
    pairs, _, diagnostics = parse_survey_csv(FIXTURES / "survey_responses.csv")
    assert diagnostics == []
    assert {p.pair_id: p.k for p in pairs} == EXPECTED_COUNTS
    assert all(p.n == 33 for p in pairs)

    overall, per_pair = aggregate_preferences(pairs)
    assert per_pair == EXPECTED_PERCENTS
    assert (overall.k, overall.n) == (173, 198)
    assert round_half_away(overall.percent, 1) == 87.4

    for outcome in pairs + [overall]:
        result = binom_test_one_sided(outcome.k, outcome.n)
        assert result.p_value < 0.001
        lo_ref, hi_ref = (float(v) for v in CP_ORACLE[(outcome.k, outcome.n)])
        lo, hi = result.ci
        # stated tolerance is 0.1 display points; the implementation agrees
        # with the oracle far below that
        assert abs(100.0 * lo - 100.0 * lo_ref) < 0.1
        assert abs(100.0 * hi - 100.0 * hi_ref) < 0.1
        assert abs(lo - lo_ref) < 1e-9
        assert abs(hi - hi_ref) < 1e-9

    for pair_id in CONSISTENT_PAIRS:
        outcome = next(p for p in pairs if p.pair_id == pair_id)
        lo, hi = clopper_pearson(outcome.k, outcome.n)
        lo_q, hi_q = QUOTED_INTERVALS[pair_id]
        assert abs(100.0 * lo - lo_q) <= 0.1
        assert abs(100.0 * hi - hi_q) <= 0.1

    assert time.perf_counter() - start < 1.0


def test_unanimous_ci_lower_bound_closed_form():
    # for k = n the lower bound solves x^n = alpha/2 exactly
    lo, hi = clopper_pearson(33, 33)
    assert hi == 1.0
    assert abs(lo - 0.025 ** (1.0 / 33.0)) < 1e-10
    assert round_half_away(100.0 * lo, 1) == 89.4


def test_likert_t_statistic_against_midpoint():
    result = one_sample_t(LikertSummary(mean=5.92, sd=1.1, n=33), 4.0)
    assert abs(result.statistic - 10.03) <= 0.01
    assert result.df == 32
    assert result.p_value < 1e-4


def test_em_loglik_monotone_and_k1_closed_form():
    start = time.perf_counter()
    rng = np.random.default_rng(29)
    for trial in range(100):
        n = int(rng.integers(6, 61))
        d = int(rng.integers(1, 5))
        K = int(rng.integers(1, 4))
        X = rng.normal(
            loc=rng.normal(size=d), scale=rng.uniform(0.5, 3.0), size=(n, d)
        )
        features = EmbeddingMatrix(
            X.astype(np.float32), [f"s{i}" for i in range(n)]
        )
        model = gmm_fit(features, K=K, seed=trial)
        history = np.asarray(model.loglik_history)
        assert history.size >= 1
        assert np.all(np.diff(history) >= -1e-9)
        if K == 1:
            Xd = features.values.astype(np.float64)
            assert np.allclose(model.weights, [1.0], atol=1e-12)
            assert np.allclose(model.means[0], Xd.mean(axis=0), atol=1e-9)
            expected_cov = np.maximum(Xd.var(axis=0, ddof=0), model.eps)
            assert np.allclose(model.covariances[0], expected_cov, atol=1e-9)
    assert time.perf_counter() - start < 30.0


def test_knn_scores_match_brute_force_oracle():
    rng = np.random.default_rng(41)
    reference = EmbeddingMatrix(
        rng.normal(size=(200, 16)).astype(np.float32),
        [f"r{i}" for i in range(200)],
    )
    ref = reference.values.astype(np.float64)
    queries = rng.normal(size=(50, 16))
    for K in (1, 5):
        index = KnnIndex(reference=reference, K=K)
        for x in queries:
            all_distances = sorted(
                math.sqrt(np.sum((row - x) * (row - x))) for row in ref
            )
            expected = float(np.mean(np.asarray(all_distances)[:K]))
            assert knn_score(index, x) == expected


def test_special_function_suite():
    # binomial upper tail vs a big-integer rational oracle: n <= 40, all k
    for n in range(1, 41):
        denom = 2**n
        for k in range(0, n + 1):
            exact = Fraction(
                sum(math.comb(n, j) for j in range(k, n + 1)), denom
            )
            p = binom_test_one_sided(k, n).p_value
            assert abs(p - float(exact)) <= 1e-12 * float(exact)

    # beta_inv round-trip through the forward map on an (a, b, q) grid
    from gevkit.surveystats import reg_inc_beta

    grid = [0.5, 1.0, 2.0, 5.0, 17.0, 33.0]
    for a in grid:
        for b in grid:
            for q in (0.001, 0.025, 0.5, 0.975, 0.999):
                x = beta_inv(a, b, q)
                assert abs(reg_inc_beta(a, b, x) - q) < 1e-10

    # exhaustive Clopper-Pearson coverage for all n <= 15 over a p grid
    for n in range(1, 16):
        bounds = [clopper_pearson(k, n) for k in range(n + 1)]
        for step in range(1, 20):
            p = step * 0.05
            coverage = sum(
                math.comb(n, k) * p**k * (1.0 - p) ** (n - k)
                for k, (lo, hi) in enumerate(bounds)
                if lo <= p <= hi
            )
            assert coverage >= 0.95 - 1e-9


def test_embedding_format_round_trip_and_rejection(tmp_path):
    rng = np.random.default_rng(7)
    values = rng.normal(size=(100, 512)).astype(np.float32)
    matrix = EmbeddingMatrix(values, [f"img-{i:05d}" for i in range(100)])
    path = tmp_path / "large.gevk"
    write_embeddings(matrix, path)
    loaded = read_embeddings(path)
    assert loaded.row_ids == matrix.row_ids
    assert loaded.values.dtype == np.float32
    assert loaded.values.tobytes() == values.tobytes()  # bit-exact

    blob = path.read_bytes()
    cases = [
        (b"XXXX" + blob[4:], "bad magic"),
        (blob[:4] + b"\x02\x00\x00\x00" + blob[8:], "version mismatch"),
        (blob[:10], "truncated"),
        (blob[: len(blob) // 2], "truncated"),
        (blob[:-1], "truncated payload"),
        (blob + b"\x00", "inconsistent"),
    ]
    for corrupted, fragment in cases:
        bad = tmp_path / "bad.gevk"
        bad.write_bytes(corrupted)
        with pytest.raises(EmbeddingFormatError, match=fragment):
            read_embeddings(bad)


@pytest.mark.xfail(
    strict=True,
    reason=(
        "the quoted intervals for pair-2 [60.3, 91.3] and pair-6 "
        "[67.5, 95.2] do not come from the exact construction (or any "
        "standard binomial interval): exact bounds are [61.1, 91.0] and "
        "[68.1, 94.9]"
    ),
)
def test_quoted_intervals_all_match_exact_construction():
    for pair_id, (lo_q, hi_q) in QUOTED_INTERVALS.items():
        k = EXPECTED_COUNTS[pair_id]
        lo, hi = clopper_pearson(k, 33)
        assert abs(100.0 * lo - lo_q) <= 0.1, pair_id
        assert abs(100.0 * hi - hi_q) <= 0.1, pair_id
