"""Exact statistics for paired-preference survey data.

Everything here is built on two special functions implemented from scratch —
log-gamma (Lanczos) and the regularized incomplete beta (continued fraction) —
so results carry no dependency beyond the standard library and are checked
against big-integer and multiprecision oracles in the test suite.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

# Lanczos coefficients, g = 7, n = 9 — the classic double-precision set.
_LANCZOS_G = 7.0
_LANCZOS_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def log_gamma(x: float) -> float:
    """ln Gamma(x) for x > 0 via the Lanczos approximation.

    With g = 7 and 9 coefficients the series is accurate to ~1e-13 relative
    over the positive axis; no reflection formula is needed since the domain
    is restricted to x > 0.
    """
    if x <= 0:
        raise ValueError(f"log_gamma requires x > 0, got {x}")
    if x < 0.5:
        # reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1.0 - x)
    z = x - 1.0
    acc = _LANCZOS_COEFFS[0]
    for k in range(1, 9):
        acc += _LANCZOS_COEFFS[k] / (z + k)
    t = z + _LANCZOS_G + 0.5
    return HALF_LOG_2PI + (z + 0.5) * math.log(t) - t + math.log(acc)


def log_beta(a: float, b: float) -> float:
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b)


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta, evaluated by the modified
    Lentz method.

    The fraction converges rapidly for x < (a+1)/(a+b+2); reg_inc_beta applies
    the symmetry transformation to keep evaluations in that region.
    """
    tiny = 1e-300
    eps = 1e-16
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 301):
        m2 = 2 * m
        # even step
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        # odd step
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b).

    I_x(a,b) = B(x; a,b) / B(a,b), the CDF of the Beta(a,b) distribution.
    Uses the continued fraction directly when x < (a+1)/(a+b+2) and the
    symmetry I_x(a,b) = 1 - I_{1-x}(b,a) otherwise.
    """
    if a <= 0 or b <= 0:
        raise ValueError(f"reg_inc_beta requires a, b > 0, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"reg_inc_beta requires x in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(a * math.log(x) + b * math.log1p(-x) - log_beta(a, b))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - math.exp(b * math.log1p(-x) + a * math.log(x) - log_beta(a, b)) * _betacf(
        b, a, 1.0 - x
    ) / b


def beta_inv(a: float, b: float, q: float) -> float:
    """Inverse of reg_inc_beta in x: the Beta(a,b) quantile function.

    Bisection brings the bracket down to ~1e-15, with safeguarded Newton
    steps (derivative = beta density) polishing the root; the result
    satisfies |I_x(a,b) - q| < 1e-10.
    """
    if a <= 0 or b <= 0:
        raise ValueError(f"beta_inv requires a, b > 0, got a={a}, b={b}")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"beta_inv requires q in [0, 1], got {q}")
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return 1.0

    lo, hi = 0.0, 1.0
    x = 0.5
    for _ in range(60):
        x = 0.5 * (lo + hi)
        if reg_inc_beta(a, b, x) < q:
            lo = x
        else:
            hi = x

    log_b = log_beta(a, b)
    for _ in range(20):
        f = reg_inc_beta(a, b, x) - q
        if abs(f) < 1e-14:
            break
        if x <= 0.0 or x >= 1.0:
            break
        pdf = math.exp((a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - log_b)
        if pdf <= 0.0 or not math.isfinite(pdf):
            break
        step = f / pdf
        candidate = x - step
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)  # fall back to bisection inside bracket
        if reg_inc_beta(a, b, candidate) < q:
            lo = candidate
        else:
            hi = candidate
        x = candidate

    if abs(reg_inc_beta(a, b, x) - q) > 1e-10:
        raise RuntimeError(
            f"beta_inv did not converge (a={a}, b={b}, q={q}, residual at x={x})"
        )
    return x


@dataclass
class PairOutcome:
    """Respondent tallies for one image pair: k of n chose the optimized one."""

    pair_id: str
    n: int
    k: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not 0 <= self.k <= self.n:
            raise ValueError(f"k must be within [0, {self.n}], got {self.k}")

    @property
    def percent(self) -> float:
        return 100.0 * self.k / self.n


@dataclass
class LikertSummary:
    """Summary of a 1-7 rating column."""

    mean: float
    sd: float
    n: int
    scale_min: int = 1
    scale_max: int = 7
    midpoint: float = 4.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.sd < 0:
            raise ValueError("sd must be >= 0")
        if not self.scale_min <= self.mean <= self.scale_max:
            raise ValueError(
                f"mean {self.mean} outside scale [{self.scale_min}, {self.scale_max}]"
            )


@dataclass
class TestResult:
    __test__ = False  # keep pytest from collecting this as a test class

    statistic: float
    df: float | None
    p_value: float
    ci: tuple[float, float]
    method: str

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p_value {self.p_value} outside [0, 1]")
        lo, hi = self.ci
        if lo > hi:
            raise ValueError(f"ci lower bound {lo} exceeds upper {hi}")


def binom_tail_log_terms(k: int, n: int, p0: float) -> list[float]:
    """The upper-tail terms C(n,i) p0^i (1-p0)^(n-i) for i = k..n."""
    log_p = math.log(p0)
    log_q = math.log1p(-p0)
    log_n_fact = log_gamma(n + 1.0)
    terms = []
    for i in range(k, n + 1):
        log_c = log_n_fact - log_gamma(i + 1.0) - log_gamma(n - i + 1.0)
        terms.append(math.exp(log_c + i * log_p + (n - i) * log_q))
    return terms


def binom_test_one_sided(k: int, n: int, p0: float = 0.5) -> TestResult:
    """Exact one-sided (upper-tail) binomial test.

    p = sum_{i=k}^{n} C(n,i) p0^i (1-p0)^(n-i), each term computed in
    log-space and the sum compensated with math.fsum. The attached CI is the
    two-sided 95% Clopper-Pearson interval for k/n.
    """
    if n < 1 or not 0 <= k <= n:
        raise ValueError(f"invalid counts k={k}, n={n}")
    if not 0.0 < p0 < 1.0:
        raise ValueError(f"p0 must be in (0, 1), got {p0}")
    if k == 0:
        p = 1.0
    else:
        p = min(1.0, math.fsum(binom_tail_log_terms(k, n, p0)))
    return TestResult(
        statistic=float(k),
        df=None,
        p_value=p,
        ci=clopper_pearson(k, n),
        method="exact binomial, one-sided upper tail",
    )


def clopper_pearson(
    k: int, n: int, conf: float = 0.95, sided: str = "two"
) -> tuple[float, float]:
    """Clopper-Pearson (exact) confidence interval for a binomial proportion.

    two-sided: lo = BetaInv(alpha/2; k, n-k+1), hi = BetaInv(1-alpha/2; k+1, n-k)
    with the usual endpoint conventions lo = 0 at k = 0 and hi = 1 at k = n.
    lower_one: one-sided lower bound at level conf, upper bound fixed at 1.
    """
    if n < 1 or not 0 <= k <= n:
        raise ValueError(f"invalid counts k={k}, n={n}")
    if not 0.0 < conf < 1.0:
        raise ValueError(f"conf must be in (0, 1), got {conf}")
    alpha = 1.0 - conf
    if sided == "two":
        lo = 0.0 if k == 0 else beta_inv(k, n - k + 1.0, alpha / 2.0)
        hi = 1.0 if k == n else beta_inv(k + 1.0, float(n - k), 1.0 - alpha / 2.0)
        return (lo, hi)
    if sided == "lower_one":
        lo = 0.0 if k == 0 else beta_inv(k, n - k + 1.0, alpha)
        return (lo, 1.0)
    raise ValueError(f"sided must be 'two' or 'lower_one', got {sided!r}")


def wald_lower(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Normal-approximation lower bound with the upper end clipped at 1."""
    p_hat = k / n
    se = math.sqrt(p_hat * (1.0 - p_hat) / n)
    return (max(0.0, p_hat - z * se), 1.0)


def student_t_upper_tail(t: float, df: float) -> float:
    """P(T >= t) for Student's t with df degrees of freedom.

    Uses the identity P(|T| >= |t|) = I_x(df/2, 1/2) with x = df/(df + t^2).
    """
    if df <= 0:
        raise ValueError(f"df must be > 0, got {df}")
    x = df / (df + t * t)
    half_two_sided = 0.5 * reg_inc_beta(df / 2.0, 0.5, x)
    return half_two_sided if t >= 0 else 1.0 - half_two_sided


def t_critical(df: float, conf: float = 0.95) -> float:
    """Two-sided critical value: P(|T| <= t_crit) = conf."""
    alpha = 1.0 - conf
    x = beta_inv(df / 2.0, 0.5, alpha)
    return math.sqrt(df * (1.0 - x) / x)


def one_sample_t(summary: LikertSummary, mu0: float) -> TestResult:
    """One-sample t-test of the summary mean against mu0 (one-sided, upper).

    The CI is the conventional two-sided 95% interval for the mean, in scale
    units.
    """
    if summary.sd == 0:
        raise ValueError("sd = 0: degenerate sample, t undefined")
    se = summary.sd / math.sqrt(summary.n)
    t = (summary.mean - mu0) / se
    df = summary.n - 1
    half_width = t_critical(df) * se
    return TestResult(
        statistic=t,
        df=float(df),
        p_value=student_t_upper_tail(t, df),
        ci=(summary.mean - half_width, summary.mean + half_width),
        method="one-sample t, one-sided upper tail",
    )


def summarize_likert(samples: list[float], **kwargs) -> LikertSummary:
    """Mean and sample SD (ddof = 1) of raw 1-7 ratings."""
    n = len(samples)
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    mean = math.fsum(samples) / n
    var = math.fsum((s - mean) ** 2 for s in samples) / (n - 1)
    return LikertSummary(mean=mean, sd=math.sqrt(var), n=n, **kwargs)


def aggregate_preferences(
    pairs: list[PairOutcome],
) -> tuple[PairOutcome, dict[str, int]]:
    """Pool per-pair tallies into an overall outcome plus display percents.

    Per-pair percents round to the nearest integer (ties away from zero);
    the overall percent is conventionally shown at 1 decimal via .percent.
    """
    if not pairs:
        raise ValueError("no pairs to aggregate")
    overall = PairOutcome(
        pair_id="overall",
        n=sum(p.n for p in pairs),
        k=sum(p.k for p in pairs),
    )
    per_pair = {
        p.pair_id: int(_round_half_away(p.percent, 0)) for p in pairs
    }
    return overall, per_pair


def _round_half_away(value: float, places: int) -> float:
    from decimal import ROUND_HALF_UP, Decimal

    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_UP))


SURVEY_HEADER = ["respondent_id", "pair_id", "choice", "confidence", "helpfulness", "role"]
CHOICES = ("optimized", "original")


def parse_survey_csv(
    source: str | Path,
) -> tuple[list[PairOutcome], dict[str, list[int]], list[str]]:
    """Tally a survey export: choices per pair plus raw Likert columns.

    Malformed rows are reported with their line numbers in the returned
    diagnostics and skipped; well-formed rows are always retained.
    """
    text = Path(source).read_text(encoding="utf-8")
    if not text.strip():
        raise ValueError(f"empty survey file: {source}")
    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != SURVEY_HEADER:
        raise ValueError(
            f"missing or wrong header: expected {','.join(SURVEY_HEADER)}"
        )

    tallies: dict[str, dict[str, int]] = {}
    likert: dict[str, list[int]] = {"confidence": [], "helpfulness": []}
    diagnostics: list[str] = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(SURVEY_HEADER):
            diagnostics.append(f"line {line_no}: expected {len(SURVEY_HEADER)} fields, got {len(row)}")
            continue
        _respondent, pair_id, choice, conf_s, help_s, _role = [c.strip() for c in row]
        if choice not in CHOICES:
            diagnostics.append(f"line {line_no}: choice must be one of {CHOICES}, got {choice!r}")
            continue
        try:
            conf_v = int(conf_s)
            help_v = int(help_s)
        except ValueError:
            diagnostics.append(f"line {line_no}: non-integer rating ({conf_s!r}, {help_s!r})")
            continue
        if not (1 <= conf_v <= 7 and 1 <= help_v <= 7):
            diagnostics.append(
                f"line {line_no}: rating outside 1-7 (confidence={conf_v}, helpfulness={help_v})"
            )
            continue
        cell = tallies.setdefault(pair_id, {"n": 0, "k": 0})
        cell["n"] += 1
        if choice == "optimized":
            cell["k"] += 1
        likert["confidence"].append(conf_v)
        likert["helpfulness"].append(help_v)

    pairs = [
        PairOutcome(pair_id=pid, n=cell["n"], k=cell["k"])
        for pid, cell in sorted(tallies.items())
    ]
    return pairs, likert, diagnostics


# ---------------------------------------------------------------- presentation


def format_p(p: float) -> str:
    """Table-style p display: values below .001 print as '< .001'."""
    if p < 0.001:
        return "< .001"
    return f"{p:.3f}".lstrip("0")


def format_ci_percent(ci: tuple[float, float]) -> str:
    """Proportion CI as bracketed percents, 1 decimal, '.0' trimmed."""

    def fmt(v: float) -> str:
        s = f"{_round_half_away(100.0 * v, 1):.1f}"
        return s[:-2] if s.endswith(".0") else s

    return f"[{fmt(ci[0])}, {fmt(ci[1])}]"


def survey_table(pairs: list[PairOutcome], conf: float = 0.95) -> str:
    """Markdown table of per-pair results plus the pooled overall row."""
    if not pairs:
        raise ValueError("no pairs to report")
    overall, per_pair = aggregate_preferences(pairs)
    lines = [
        "| Image Pair | Percent Choosing Optimized | Successes | p-value | 95% CI |",
        "| --- | --- | --- | --- | --- |",
    ]
    for p in pairs:
        result = binom_test_one_sided(p.k, p.n)
        ci = clopper_pearson(p.k, p.n, conf)
        lines.append(
            f"| {p.pair_id} | {per_pair[p.pair_id]} % | {p.k}/{p.n} "
            f"| {format_p(result.p_value)} | {format_ci_percent(ci)} |"
        )
    o_result = binom_test_one_sided(overall.k, overall.n)
    o_ci = clopper_pearson(overall.k, overall.n, conf)
    lines.append(
        f"| Overall | {_round_half_away(overall.percent, 1)} % | {overall.k}/{overall.n} "
        f"| {format_p(o_result.p_value)} | {format_ci_percent(o_ci)} |"
    )
    return "\n".join(lines) + "\n"


def survey_json(pairs: list[PairOutcome], conf: float = 0.95) -> str:
    """Machine-readable survey results with full-precision p-values.

    The overall row carries three interval methods side by side: the exact
    two-sided interval, the exact one-sided lower bound, and the clipped
    normal approximation. Published overall intervals sometimes mix methods,
    so all three are reported rather than guessing.
    """
    if not pairs:
        raise ValueError("no pairs to report")
    overall, per_pair = aggregate_preferences(pairs)
    rows = []
    for p in pairs:
        result = binom_test_one_sided(p.k, p.n)
        rows.append(
            {
                "pair_id": p.pair_id,
                "n": p.n,
                "k": p.k,
                "percent": per_pair[p.pair_id],
                "p_value": result.p_value,
                "ci_two_sided": list(clopper_pearson(p.k, p.n, conf)),
            }
        )
    o_result = binom_test_one_sided(overall.k, overall.n)
    payload = {
        "pairs": rows,
        "overall": {
            "n": overall.n,
            "k": overall.k,
            "percent": _round_half_away(overall.percent, 1),
            "p_value": o_result.p_value,
            "ci_methods": {
                "clopper_pearson_two_sided": list(clopper_pearson(overall.k, overall.n, conf)),
                "clopper_pearson_lower_one_sided": list(
                    clopper_pearson(overall.k, overall.n, conf, sided="lower_one")
                ),
                "normal_approx_lower_clipped": list(wald_lower(overall.k, overall.n)),
            },
            "note": "interval methods can disagree; all three are reported",
        },
    }
    return json.dumps(payload, indent=2) + "\n"
