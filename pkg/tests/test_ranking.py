import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gevkit.featurestore import ModelVariantId
from gevkit.metrics_clip import ScoreSeries
from gevkit.ranking import (
    ModelComparisonReport,
    ModelSummary,
    average_normalized,
    build_report,
    derive_columns,
    emit_report,
    parse_report,
    rank_models,
    round_half_away,
    to_cost,
)

CLIP_MEANS = {
    "M0": 28.9447,
    "M1": 30.9256,
    "M2": 29.8510,
    "M3": 29.5998,
    "M4": 29.5652,
}
GMM_MEANS = {
    "M0": -7640876.0659,
    "M1": -7668629.0891,
    "M2": -9083346.2760,
    "M3": -9135986.5661,
    "M4": -9643285.8763,
}
KNN_MEANS = {
    "M0": 9.3586,
    "M1": 8.8503,
    "M2": 9.7139,
    "M3": 9.7910,
    "M4": 9.9784,
}


def derived_map(means, orientation):
    rows = rank_models(derive_columns(means, orientation))
    return {
        s.variant.label: (
            round_half_away(s.pct_quality, 1),
            round_half_away(s.vs_input, 1),
            s.rank,
        )
        for s in rows
        if not s.variant.is_baseline
    }


# --------------------------------------------------------------------- to_cost


def test_to_cost_cases():
    assert to_cost(-7668629.0891, "lower_cost") == 7668629.0891
    assert to_cost(8.8503, "lower_cost") == 8.8503
    assert to_cost(30.9256, "higher_better") == 30.9256
    with pytest.raises(ValueError, match="zero mean"):
        to_cost(0.0, "lower_cost")
    with pytest.raises(ValueError, match="unknown orientation"):
        to_cost(1.0, "sideways")


# --------------------------------------------------- reference derived columns


def test_alignment_table_reference_values():
    got = derived_map(CLIP_MEANS, "higher_better")
    assert got == {
        "M1": (100.0, 6.8, 1),
        "M2": (96.5, 3.1, 2),
        "M3": (95.7, 2.3, 3),
        "M4": (95.6, 2.1, 4),
    }


def test_gmm_table_reference_values():
    got = derived_map(GMM_MEANS, "lower_cost")
    assert got == {
        "M1": (100.0, -0.4, 1),
        "M2": (84.4, -18.9, 2),
        "M3": (83.9, -19.6, 3),
        "M4": (79.5, -26.2, 4),
    }


def test_knn_table_reference_values():
    got = derived_map(KNN_MEANS, "lower_cost")
    assert got == {
        "M1": (100.0, 5.4, 1),
        "M2": (91.1, -3.8, 2),
        "M3": (90.4, -4.6, 3),
        "M4": (88.7, -6.6, 4),
    }


def test_best_model_is_exactly_100():
    for means, orientation in [
        (CLIP_MEANS, "higher_better"),
        (GMM_MEANS, "lower_cost"),
        (KNN_MEANS, "lower_cost"),
    ]:
        rows = derive_columns(means, orientation)
        pcts = [s.pct_quality for s in rows if not s.variant.is_baseline]
        assert max(pcts) == 100.0
        assert sum(1 for p in pcts if p == 100.0) == 1
        assert all(p < 100.0 for p in pcts if p != 100.0)


def test_derive_columns_validation():
    with pytest.raises(ValueError, match="baseline"):
        derive_columns({"M1": 1.0, "M2": 2.0}, "higher_better")
    with pytest.raises(ValueError, match="non-baseline"):
        derive_columns({"M0": 1.0}, "higher_better")
    with pytest.raises(ValueError, match="non-finite"):
        derive_columns({"M0": 1.0, "M1": float("inf")}, "higher_better")


def test_baseline_row_carries_no_derived_columns():
    rows = derive_columns(CLIP_MEANS, "higher_better")
    m0 = rows[0]
    assert m0.variant.is_baseline
    assert m0.pct_quality is None and m0.vs_input is None and m0.rank is None
    with pytest.raises(ValueError, match="baseline row"):
        ModelSummary(ModelVariantId("M0"), 1.0, 1.0, pct_quality=50.0)


# --------------------------------------------------------------------- ranking


def test_rank_tie_broken_by_label():
    rows = rank_models(derive_columns({"M0": 1.0, "M2": 3.0, "M1": 3.0}, "higher_better"))
    ranks = {s.variant.label: s.rank for s in rows}
    assert ranks == {"M0": None, "M1": 1, "M2": 2}


def test_rank_single_model():
    rows = rank_models(derive_columns({"M0": 2.0, "M3": 5.0}, "higher_better"))
    m3 = [s for s in rows if s.variant.label == "M3"][0]
    assert m3.rank == 1 and m3.pct_quality == 100.0


def test_rank_requires_derived():
    bare = [
        ModelSummary(ModelVariantId("M0"), 1.0, 1.0),
        ModelSummary(ModelVariantId("M1"), 2.0, 2.0),
    ]
    with pytest.raises(ValueError, match="derive_columns"):
        rank_models(bare)


positive_means = st.dictionaries(
    st.sampled_from(["M1", "M2", "M3", "M4"]),
    st.floats(0.1, 1e4, allow_nan=False),
    min_size=1,
    max_size=4,
)


@settings(max_examples=80, deadline=None)
@given(contenders=positive_means, m0=st.floats(0.1, 1e4), scale=st.floats(0.01, 100.0))
def test_rank_invariant_under_rescaling(contenders, m0, scale):
    means = dict(contenders, M0=m0)
    base = rank_models(derive_columns(means, "higher_better"))
    scaled = rank_models(
        derive_columns({k: v * scale for k, v in means.items()}, "higher_better")
    )
    assert [s.rank for s in base] == [s.rank for s in scaled]
    assert [s.variant.label for s in base] == [s.variant.label for s in scaled]


@settings(max_examples=80, deadline=None)
@given(contenders=positive_means, m0=st.floats(0.1, 1e4))
def test_vs_input_sign_convention(contenders, m0):
    means = dict(contenders, M0=m0)
    for orientation, better in [
        ("higher_better", lambda v: v > m0),
        ("lower_cost", lambda v: abs(v) < abs(m0)),
    ]:
        for s in derive_columns(means, orientation):
            if s.variant.is_baseline:
                continue
            if better(means[s.variant.label]):
                assert s.vs_input > 0
            elif means[s.variant.label] != m0:
                assert s.vs_input < 0


# -------------------------------------------------------------------- emission


def test_markdown_rows_exact():
    text = emit_report(build_report(CLIP_MEANS, "higher_better", "clip"), "markdown")
    assert "| Model | Mean | % Quality | vs Input | Rank |" in text
    assert "| M0 | 28.9447 | — | — | — |" in text
    assert "| M1 | 30.9256 | 100.0% | +6.8% | #1 |" in text
    assert "| M4 | 29.5652 | 95.6% | +2.1% | #4 |" in text
    assert text.endswith("\n")


def test_markdown_negative_vs_input():
    text = emit_report(build_report(GMM_MEANS, "lower_cost", "giqa_gmm"), "markdown")
    assert "| M1 | -7668629.0891 | 100.0% | -0.4% | #1 |" in text
    assert "| M4 | -9643285.8763 | 79.5% | -26.2% | #4 |" in text


def test_csv_layout():
    text = emit_report(build_report(KNN_MEANS, "lower_cost", "giqa_knn"), "csv")
    lines = text.splitlines()
    assert lines[0] == "model,mean,pct_quality,vs_input,rank"
    assert lines[1] == "M0,9.3586,,,"
    assert lines[2] == "M1,8.8503,100.0,5.4,1"
    assert "\r" not in text


def test_json_round_trip():
    report = build_report(CLIP_MEANS, "higher_better", "clip")
    back = parse_report(emit_report(report, "json"))
    assert back == report


def test_unsupported_format():
    report = build_report(CLIP_MEANS, "higher_better", "clip")
    with pytest.raises(ValueError, match="unsupported format"):
        emit_report(report, "yaml")


def test_report_validation():
    rows = rank_models(derive_columns(CLIP_MEANS, "higher_better"))
    with pytest.raises(ValueError, match="exactly one baseline"):
        ModelComparisonReport("clip", [s for s in rows if not s.variant.is_baseline])
    broken = [
        ModelSummary(ModelVariantId("M0"), 1.0, 1.0),
        ModelSummary(ModelVariantId("M1"), 2.0, 2.0, 100.0, 10.0, rank=2),
    ]
    with pytest.raises(ValueError, match="permutation"):
        ModelComparisonReport("clip", broken)


# ------------------------------------------------------------------- rounding


def test_round_half_away_from_zero():
    assert round_half_away(0.15, 1) == 0.2
    assert round_half_away(-0.15, 1) == -0.2
    assert round_half_away(2.25, 1) == 2.3
    assert round_half_away(96.45, 1) == 96.5
    assert round_half_away(-26.15, 1) == -26.2
    assert round_half_away(28.94466, 4) == 28.9447


# --------------------------------------------------------- figure aggregation


def normalized_series(variant, values, metric="clip"):
    return ScoreSeries(
        metric=metric,
        variant=ModelVariantId(variant),
        per_image={f"img-{i}": v for i, v in enumerate(values)},
    )


def test_average_normalized_trivial_cases():
    means, _ = average_normalized({"clip": [normalized_series("M1", [1.0, 1.0, 1.0])]})
    assert means == {"M1": {"clip": 1.0}}
    means, _ = average_normalized({"clip": [normalized_series("M2", [0.2, 0.8])]})
    assert means["M2"]["clip"] == pytest.approx(0.5, abs=1e-15)


def test_average_normalized_fixture_matches_fsum_oracle():
    import numpy as np

    rng = np.random.default_rng(77)
    table = {v: rng.uniform(0, 1, 10).tolist() for v in ("M0", "M1", "M2", "M3", "M4")}
    means, csv_text = average_normalized(
        {"clip": [normalized_series(v, vals) for v, vals in table.items()]}
    )
    for v, vals in table.items():
        assert means[v]["clip"] == pytest.approx(math.fsum(vals) / 10, abs=1e-12)
    lines = csv_text.splitlines()
    assert lines[0] == "variant,metric,mean_normalized"
    assert len(lines) == 6
    assert lines[1].startswith("M0,clip,")


def test_average_normalized_id_mismatch():
    a = normalized_series("M0", [0.1, 0.2])
    b = ScoreSeries(
        metric="clip",
        variant=ModelVariantId("M1"),
        per_image={"img-0": 0.5, "img-9": 0.5},
    )
    with pytest.raises(ValueError, match="image-id mismatch.*M1.*img-1.*img-9"):
        average_normalized({"clip": [a, b]})


def test_average_normalized_rejects_raw_values():
    with pytest.raises(ValueError, match="not normalized"):
        average_normalized({"clip": [normalized_series("M1", [30.9, 29.1])]})


def test_average_normalized_rejects_duplicates():
    a = normalized_series("M1", [0.1])
    with pytest.raises(ValueError, match="duplicate series"):
        average_normalized({"clip": [a, a]})
