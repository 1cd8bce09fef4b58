"""Command-line entry points: fetch, split, score, report, survey.

Exit codes are a stable scripting contract: 0 success, 1 internal fault,
2 user/input error. Logs go to stderr; data goes to files or stdout only.
Manifest updates are copy-on-write with a timestamped backup.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import featurestore, metrics_giqa
from .featurestore import DatasetManifest, ModelVariantId
from .metrics_clip import (
    HIGHER_BETTER,
    LOWER_COST,
    METRIC_IDS,
    NormalizationStrategy,
    ScoreSeries,
    clip_score,
    mean_score,
    normalize_scores,
    export_series_csv,
)
from .metrics_giqa import KnnIndex, giqa_gmm_score, giqa_knn_score, gmm_fit, pca_fit, pca_project
from .ranking import average_normalized, build_report, emit_report
from .surveystats import (
    one_sample_t,
    parse_survey_csv,
    summarize_likert,
    survey_json,
    survey_table,
)

log = logging.getLogger("gevkit")

# How each metric's raw means are ranked in reports. The gmm column compares
# log-likelihood magnitudes, so its table arithmetic runs in cost space even
# though the per-image series reads higher-is-better.
REPORT_ORIENTATIONS = {
    "clip": HIGHER_BETTER,
    "giqa_gmm": LOWER_COST,
    "giqa_knn": LOWER_COST,
}

FORMAT_EXTENSIONS = {"markdown": "md", "csv": "csv", "json": "json"}


@dataclass
class GiqaSettings:
    K: int = 8
    q: int = 64
    max_iter: int = 200
    tol: float = 1e-6
    seed: int = 0
    knn_K: int = 5


@dataclass
class RunConfig:
    """One JSON document that makes a whole run reproducible."""

    manifest_path: str = "manifest.json"
    output_dir: str = "."
    formats: list[str] = field(default_factory=lambda: ["markdown"])
    normalization: NormalizationStrategy = field(default_factory=NormalizationStrategy)
    giqa: GiqaSettings = field(default_factory=GiqaSettings)
    embeddings: dict[str, dict] = field(default_factory=dict)
    report_means: dict[str, dict] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        unknown = set(self.formats) - set(FORMAT_EXTENSIONS)
        if unknown:
            raise ValueError(f"unknown formats: {sorted(unknown)}")
        for metric, entry in self.embeddings.items():
            if metric not in METRIC_IDS:
                raise ValueError(f"unknown metric {metric!r} in embeddings config")
            generated = entry.get("generated_paths", {})
            baselines = [l for l in generated if ModelVariantId(l).is_baseline]
            if generated and len(baselines) != 1:
                raise ValueError(
                    f"embeddings[{metric}].generated_paths needs exactly one "
                    f"baseline variant, got {len(baselines)}"
                )


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    norm = payload.get("normalization", {})
    bounds = norm.get("bounds")
    return RunConfig(
        manifest_path=payload.get("manifest_path", "manifest.json"),
        output_dir=payload.get("output_dir", "."),
        formats=list(payload.get("formats", ["markdown"])),
        normalization=NormalizationStrategy(
            kind=norm.get("kind", "global_min_max"),
            bounds=tuple(bounds) if bounds else None,
        ),
        giqa=GiqaSettings(**payload.get("giqa", {})),
        embeddings=dict(payload.get("embeddings", {})),
        report_means=dict(payload.get("report_means", {})),
        seed=int(payload.get("seed", 0)),
    )


def _backup_and_save(manifest: DatasetManifest, path: Path) -> None:
    """Copy-on-write: stash the previous manifest before replacing it."""
    if path.exists():
        stamp = datetime.datetime.now().strftime("%Y%m%dT%H%M%S%f")
        shutil.copy2(path, path.with_name(f"{path.name}.{stamp}.bak"))
    manifest.save(path)


def _load_or_new_manifest(path: Path, seed: int) -> DatasetManifest:
    if path.exists():
        return DatasetManifest.load(path)
    return DatasetManifest(records=[], seed=seed)


# ----------------------------------------------------------------- subcommands


def cmd_fetch(args) -> int:
    config = load_config(args.config)
    if args.count == 0:
        log.info("count=0: nothing to fetch")
        return 0
    try:
        records = featurestore.fetch_images(
            args.query,
            args.count,
            api_key=args.api_key,
            dest_dir=args.dest_dir,
            base_url=args.base_url,
        )
    except (ValueError, RuntimeError) as exc:
        log.error("fetch failed: %s", exc)
        return 2
    if not records:
        log.error("fetch returned no records")
        return 2

    manifest_path = Path(args.manifest or config.manifest_path)
    manifest = _load_or_new_manifest(manifest_path, args.seed)
    existing = {r.id for r in manifest.records}
    added = 0
    for record in records:
        if record.id in existing:
            log.warning("skipping duplicate record id %s", record.id)
            continue
        manifest.records.append(record)
        existing.add(record.id)
        added += 1
    _backup_and_save(manifest, manifest_path)
    log.info("appended %d records to %s", added, manifest_path)
    return 0


def cmd_split(args) -> int:
    config = load_config(args.config)
    manifest_path = Path(args.manifest or config.manifest_path)
    manifest = DatasetManifest.load(manifest_path)
    if args.ratios:
        parts = [float(r) for r in args.ratios.split(",")]
        manifest = DatasetManifest(
            records=manifest.records, split_ratios=tuple(parts), seed=manifest.seed
        )
    if args.seed is not None:
        manifest = DatasetManifest(
            records=manifest.records, split_ratios=manifest.split_ratios, seed=args.seed
        )
    updated = featurestore.split_dataset(manifest)
    _backup_and_save(updated, manifest_path)
    counts = {"train": 0, "val": 0, "test": 0}
    for r in updated.records:
        counts[r.split] += 1
    log.info(
        "split %d records into train=%d val=%d test=%d (seed %d)",
        len(updated.records), counts["train"], counts["val"], counts["test"], updated.seed,
    )
    return 0


def _read_matrix(path: str) -> featurestore.EmbeddingMatrix:
    return featurestore.read_embeddings(path)


def _clip_series(entry: dict, w: float = 100.0) -> list[ScoreSeries]:
    """Each image scored against every prompt row, averaged.

    Per-image prompt matching is possible through the library (score against
    a chosen prompt row); the batch command keeps the average so it needs no
    manifest join.
    """
    prompts = _read_matrix(entry["prompt_path"])
    series = []
    for label in sorted(entry["generated_paths"]):
        images = _read_matrix(entry["generated_paths"][label])
        if images.dims != prompts.dims:
            raise ValueError(
                f"dims mismatch: prompts {prompts.dims}, generated[{label}] {images.dims}"
            )
        per_image = {}
        for i, rid in enumerate(images.row_ids):
            scores = [
                clip_score(images.values[i], prompts.values[j], w)
                for j in range(prompts.n_rows)
            ]
            per_image[rid] = sum(scores) / len(scores)
        series.append(ScoreSeries("clip", ModelVariantId(label), per_image))
    return series


def _giqa_series(metric: str, entry: dict, settings: GiqaSettings) -> list[ScoreSeries]:
    reference = _read_matrix(entry["reference_path"])
    generated = {
        label: _read_matrix(path)
        for label, path in sorted(entry["generated_paths"].items())
    }
    for label, m in generated.items():
        if m.dims != reference.dims:
            raise ValueError(
                f"dims mismatch: reference {reference.dims}, generated[{label}] {m.dims}"
            )
    if metric == "giqa_gmm":
        q = min(settings.q, reference.n_rows - 1, reference.dims,
                metrics_giqa.numerical_rank(reference))
        pca = pca_fit(reference, q)
        projected = featurestore.EmbeddingMatrix(
            pca_project(pca, reference.values).astype("float32"), reference.row_ids
        )
        model = gmm_fit(
            projected,
            K=min(settings.K, projected.n_rows),
            max_iter=settings.max_iter,
            tol=settings.tol,
            seed=settings.seed,
        )
        return [
            giqa_gmm_score(model, pca, m, ModelVariantId(label))
            for label, m in generated.items()
        ]
    index = KnnIndex(reference=reference, K=min(settings.knn_K, reference.n_rows))
    return [
        giqa_knn_score(index, m, variant=ModelVariantId(label))
        for label, m in generated.items()
    ]


def _compute_series(config: RunConfig, metric: str) -> list[ScoreSeries]:
    entry = config.embeddings.get(metric)
    if not entry or not entry.get("generated_paths"):
        raise ValueError(f"no embeddings configured for metric {metric!r}")
    if metric == "clip":
        return _clip_series(entry)
    return _giqa_series(metric, entry, config.giqa)


def cmd_score(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.output_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    raw = _compute_series(config, args.metric)
    normalized = normalize_scores(raw, config.normalization)
    for raw_s, norm_s in zip(raw, normalized):
        path = out_dir / f"scores_{args.metric}_{raw_s.variant.label}.csv"
        path.write_text(export_series_csv([raw_s], [norm_s]), encoding="utf-8")
        log.info("wrote %s (%d rows)", path, len(raw_s.per_image))
    return 0


def cmd_report(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.output_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = [args.format] if args.format else config.formats

    means_by_metric: dict[str, dict[str, float]] = {}
    orientations: dict[str, str] = {}
    normalized_by_metric: dict[str, list[ScoreSeries]] = {}

    for metric, entry in config.report_means.items():
        if metric not in METRIC_IDS:
            raise ValueError(f"unknown metric {metric!r} in report_means")
        means_by_metric[metric] = {k: float(v) for k, v in entry["means"].items()}
        orientations[metric] = entry.get("orientation", REPORT_ORIENTATIONS[metric])
    for metric in config.embeddings:
        if metric in means_by_metric:
            continue
        raw = _compute_series(config, metric)
        means_by_metric[metric] = {s.variant.label: mean_score(s) for s in raw}
        orientations[metric] = REPORT_ORIENTATIONS[metric]
        normalized_by_metric[metric] = normalize_scores(raw, config.normalization)

    if not means_by_metric:
        raise ValueError("nothing to report: no report_means and no embeddings configured")

    for metric, means in means_by_metric.items():
        report = build_report(means, orientations[metric], metric)
        for fmt in formats:
            path = out_dir / f"report_{metric}.{FORMAT_EXTENSIONS[fmt]}"
            path.write_text(emit_report(report, fmt), encoding="utf-8")
            log.info("wrote %s", path)

    if normalized_by_metric:
        _, csv_text = average_normalized(normalized_by_metric)
        path = out_dir / "figure_mean_normalized.csv"
        path.write_text(csv_text, encoding="utf-8")
        log.info("wrote %s", path)
    return 0


def cmd_survey(args) -> int:
    config = load_config(args.config)
    pairs, likert, diagnostics = parse_survey_csv(args.csv_path)
    for line in diagnostics:
        log.warning("survey: %s", line)
    if not pairs:
        log.error("no valid survey rows in %s", args.csv_path)
        return 2

    table = survey_table(pairs)
    out_dir = args.output_dir or (None if args.config is None else config.output_dir)
    if out_dir is None:
        sys.stdout.write(table)
    else:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        formats = [args.format] if args.format else config.formats
        if "markdown" in formats:
            (out / "survey.md").write_text(table, encoding="utf-8")
            log.info("wrote %s", out / "survey.md")
        if "json" in formats:
            payload = json.loads(survey_json(pairs))
            payload["likert"] = _likert_block(likert)
            (out / "survey.json").write_text(
                json.dumps(payload, indent=2) + "\n", encoding="utf-8"
            )
            log.info("wrote %s", out / "survey.json")
    return 0


def _likert_block(likert: dict[str, list[int]]) -> dict:
    block = {}
    for column, samples in likert.items():
        if len(samples) < 2:
            continue
        summary = summarize_likert(samples)
        if summary.sd == 0:
            block[column] = {"mean": summary.mean, "sd": 0.0, "n": summary.n}
            continue
        result = one_sample_t(summary, mu0=summary.midpoint)
        block[column] = {
            "mean": summary.mean,
            "sd": summary.sd,
            "n": summary.n,
            "t": result.statistic,
            "df": result.df,
            "p_one_sided": result.p_value,
            "ci_95": list(result.ci),
        }
    return block


# ----------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gevkit",
        description="Evaluation toolkit for generated imagery: scoring, ranking, survey statistics.",
    )
    parser.add_argument("--config", help="run configuration JSON")
    parser.add_argument("--seed", type=int, default=0, help="seed for new manifests")
    parser.add_argument("--output-dir", help="directory for emitted files")
    parser.add_argument(
        "--format", choices=sorted(FORMAT_EXTENSIONS), help="emission format override"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="search the stock-photo API into the manifest")
    p.add_argument("query")
    p.add_argument("count", type=int)
    p.add_argument("--manifest", help="manifest path (defaults to config)")
    p.add_argument("--api-key", help="overrides UNSPLASH_ACCESS_KEY")
    p.add_argument("--dest-dir", help="download photos here as well")
    p.add_argument("--base-url", default=featurestore.UNSPLASH_BASE_URL)
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("split", help="assign train/val/test splits in the manifest")
    p.add_argument("--manifest", help="manifest path (defaults to config)")
    p.add_argument("--ratios", help="comma-separated train,val,test ratios")
    p.add_argument("--seed", type=int, default=None, help="override the manifest seed")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("score", help="compute per-image score series for one metric")
    p.add_argument("metric", choices=METRIC_IDS)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="emit comparison tables and the aggregation CSV")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("survey", help="analyze a paired-preference survey export")
    p.add_argument("csv_path")
    p.set_defaults(func=cmd_survey)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError, KeyError) as exc:
        log.error("%s", exc)
        return 2
    except Exception:
        log.exception("internal fault")
        return 1


if __name__ == "__main__":
    sys.exit(main())
