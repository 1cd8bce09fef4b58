"""
Preference survey analysis
==========================

Parse a two-alternative forced-choice survey export, test each image pair
with the exact binomial test, attach Clopper-Pearson intervals, and check
the Likert ratings against the scale midpoint with a one-sample t-test.
"""

from pathlib import Path

from gevkit.surveystats import (
    aggregate_preferences,
    binom_test_one_sided,
    one_sample_t,
    parse_survey_csv,
    summarize_likert,
    survey_table,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

###############################################################################
# The parser tallies choices per pair and keeps the raw 1-7 rating columns;
# malformed rows come back as line-numbered diagnostics instead of killing
# the run.

pairs, likert, diagnostics = parse_survey_csv(FIXTURES / "survey_responses.csv")
print("pairs:", [(p.pair_id, p.k, p.n) for p in pairs])
print("diagnostics:", diagnostics)

###############################################################################
# The display table: per-pair preference percent, exact one-sided binomial
# p-value against chance, and the exact 95% interval.

print()
print(survey_table(pairs))

###############################################################################
# Pooling all pairs gives the overall preference rate with the same exact
# machinery.

overall, per_pair = aggregate_preferences(pairs)
result = binom_test_one_sided(overall.k, overall.n)
print(
    f"\noverall: {overall.k}/{overall.n} ({overall.percent:.1f}%), "
    f"p = {result.p_value:.3g}, CI [{100 * result.ci[0]:.1f}, {100 * result.ci[1]:.1f}]"
)

###############################################################################
# Ratings: mean confidence versus the scale midpoint of 4. The t statistic
# uses only the summary (mean, sd, n), so published summaries can be checked
# without raw data.

confidence = summarize_likert([float(v) for v in likert["confidence"]])
t = one_sample_t(confidence, confidence.midpoint)
print(
    f"confidence mean {confidence.mean:.2f} (sd {confidence.sd:.2f}, n {confidence.n}): "
    f"t({t.df:.0f}) = {t.statistic:.2f}, p = {t.p_value:.3g}"
)
