"""
Model comparison reports
========================

Turn per-variant raw metric means into the derived comparison columns
(% quality, delta versus the input distribution, rank) and emit the table
in markdown, CSV, and JSON.
"""

from gevkit.ranking import build_report, emit_report, parse_report

###############################################################################
# Higher-is-better metric: % quality is each mean as a share of the best
# contender's, and "vs input" is growth over the M0 baseline.

alignment_means = {
    "M0": 28.9447,
    "M1": 30.9256,
    "M2": 29.8510,
    "M3": 29.5998,
    "M4": 29.5652,
}
report = build_report(alignment_means, "higher_better", metric="clip")
print(emit_report(report, "markdown"))

###############################################################################
# Lower-is-better metric: the same columns derive from cost magnitudes, so a
# mean farther below zero ranks worse even though its raw value is "larger"
# in magnitude.

distance_means = {
    "M0": 9.3586,
    "M1": 8.8503,
    "M2": 9.7139,
    "M3": 9.7910,
    "M4": 9.9784,
}
report = build_report(distance_means, "lower_cost", metric="giqa_knn")
print(emit_report(report, "markdown"))

###############################################################################
# The CSV and JSON emissions carry the same rows; JSON keeps full-precision
# floats so a report survives a round-trip through parse_report unchanged.

csv_text = emit_report(report, "csv")
print(csv_text)

json_text = emit_report(report, "json")
recovered = parse_report(json_text)
print("round-trip intact:", recovered == report)
