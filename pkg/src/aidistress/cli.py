"""Command line entry point.

Subcommands cover the whole pipeline: text feature extraction, panel
assembly, synthetic data generation, the windowed benchmark, paired
feature-set comparison, per-row explanations, and panel summaries.

Exit codes: 0 success, 1 partial or runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import pandas as pd

from . import __version__
from .bench import (
    BenchConfig,
    BenchError,
    file_digest,
    load_saved_model,
    read_versioned_csv,
    run_benchmark,
    seed_for,
    write_versioned_csv,
)
from .explain import explain_row, explanations_to_frame
from .lexicon import (
    AI_FEATURE_COLUMNS,
    compile_lexicon,
    default_lexicon,
    extract_ai_features,
    parse_document_file,
    read_patent_file,
)
from .metrics import MetricReport, compare_feature_sets
from .panel import (
    build_panel,
    read_ai_features_csv,
    read_financial_csv,
    read_panel,
    write_panel,
)
from .synth import GeneratorConfig, generate_panel, summarize_panel, write_generator_files

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2


class UsageError(ValueError):
    pass


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"config file {p} must hold a JSON object")
    return cfg


def _require(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def cmd_extract_features(args) -> int:
    corpus = _require(args.corpus, "corpus directory")
    lex = (
        compile_lexicon(_require(args.lexicon, "lexicon file"))
        if args.lexicon
        else default_lexicon()
    )
    patents = read_patent_file(_require(args.patents, "patent file")) if args.patents else []
    docs = sorted(corpus.glob("*.txt"))
    if not docs:
        print(f"warning: no .txt documents under {corpus}", file=sys.stderr)
    rows = []
    for doc_path in docs:
        doc = parse_document_file(doc_path)
        feats = extract_ai_features(doc, patents, lex)
        row = {"firm_id": doc.firm_id, "year": doc.year}
        row.update(feats.as_row())
        row["flags"] = ";".join(feats.flags)
        rows.append(row)
    out = pd.DataFrame(rows, columns=["firm_id", "year"] + list(AI_FEATURE_COLUMNS) + ["flags"])
    out.to_csv(args.out, index=False, float_format="%.10g")
    nonzero = int((out[list(AI_FEATURE_COLUMNS)] > 0).any(axis=1).sum()) if len(out) else 0
    print(f"extracted {len(out)} document rows ({nonzero} with AI activity) -> {args.out}")
    return EXIT_OK


def cmd_build_panel(args) -> int:
    fin = read_financial_csv(_require(args.financial, "financial file"))
    ai = None
    if args.ai_features:
        ai = read_ai_features_csv(_require(args.ai_features, "AI feature file"))
    panel = build_panel(fin, ai)
    write_panel(panel, args.out)
    print(f"panel with {len(panel)} firm-year rows -> {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg_dict = _load_config(args.config)
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    try:
        config = GeneratorConfig(**cfg_dict)
    except TypeError as exc:
        raise UsageError(f"bad generator config: {exc}") from exc
    panel, truth = generate_panel(config)
    out_dir = Path(args.out_dir)
    paths = write_generator_files(panel, out_dir)
    write_panel(panel, out_dir / "panel.csv")
    truth.log_odds.to_csv(out_dir / "ground_truth.csv", index=False, float_format="%.10g")
    with open(out_dir / "generator_config.json", "w", encoding="utf-8") as fh:
        json.dump(config.__dict__, fh, indent=2)
        fh.write("\n")
    rate = panel["st_flag"].mean()
    print(
        f"generated {len(panel)} rows for {config.n_firms} firms "
        f"(distress rate {rate:.4f}) -> {out_dir}"
    )
    for key in sorted(paths):
        print(f"  {key}: {paths[key]}")
    return EXIT_OK


def cmd_run_benchmark(args) -> int:
    panel_path = _require(args.panel, "panel file")
    cfg_dict = _load_config(args.config)
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    if args.test_year is not None:
        cfg_dict["test_year"] = args.test_year
    try:
        config = BenchConfig.from_dict(cfg_dict)
    except (TypeError, ValueError, BenchError) as exc:
        raise UsageError(f"bad benchmark config: {exc}") from exc
    panel = read_panel(panel_path)
    result = run_benchmark(
        panel,
        config,
        args.out_dir,
        jobs=args.jobs,
        input_digests={str(panel_path): file_digest(panel_path)},
    )
    n_ok = sum(1 for t in result.results if t.error is None)
    print(f"{n_ok}/{len(result.results)} window tasks completed -> {result.out_dir}")
    for line in result.failures:
        print(f"failed: {line}", file=sys.stderr)
    return EXIT_PARTIAL if result.failures else EXIT_OK


def cmd_compare(args) -> int:
    df = read_versioned_csv(_require(args.results, "results file"))
    metric_cols = [c for c in MetricReport.__dataclass_fields__ if c in df.columns]
    rows = []
    for family in sorted(df["family"].unique()):
        sub = df[df["family"] == family]
        arms = {}
        for arm in ("with_ai", "without_ai"):
            part = sub[sub["feature_set"] == arm]
            arms[arm] = {
                int(r["window_index"]): MetricReport(
                    **{c: (None if pd.isna(r[c]) else float(r[c])) for c in metric_cols}
                )
                for _, r in part.iterrows()
            }
        shared = sorted(set(arms["with_ai"]) & set(arms["without_ai"]))
        if len(shared) < 2:
            print(f"skipping {family}: fewer than 2 paired splits", file=sys.stderr)
            continue
        comps = compare_feature_sets(
            {w: arms["with_ai"][w] for w in shared},
            {w: arms["without_ai"][w] for w in shared},
            B=args.bootstrap_samples,
            seed=seed_for(args.seed or 0, "bootstrap", family),
        )
        for c in comps:
            rows.append(
                {
                    "family": family,
                    "metric": c.metric,
                    "n_splits": len(c.deltas),
                    "mean_delta": c.mean_delta,
                    "ci_low": c.ci_low,
                    "ci_high": c.ci_high,
                    "t_stat": c.t_stat,
                    "p_t": c.p_t,
                    "p_boot": c.p_boot,
                    "direction": c.direction,
                }
            )
    if not rows:
        print("no comparable family had paired splits", file=sys.stderr)
        return EXIT_PARTIAL
    write_versioned_csv(pd.DataFrame(rows), args.out, "comparisons")
    print(f"{len(rows)} paired comparisons -> {args.out}")
    return EXIT_OK


def cmd_explain(args) -> int:
    from .panel import instances_to_frame, label_instances
    from .protocol import apply_preprocessing

    model, stats, background, window = load_saved_model(_require(args.model, "model file"))
    panel = read_panel(_require(args.panel, "panel file"))
    features = stats.feature_names
    instances, _ = label_instances(panel, features)
    frame = instances_to_frame(instances, features)
    test_year = window.get("test_year")
    if test_year is not None:
        frame = frame[frame["label_year"] == test_year]
    if args.rows:
        wanted = [r.strip() for r in args.rows.split(",") if r.strip()]
        frame = frame[frame["firm_id"].astype(str).isin(wanted)]
        missing = set(wanted) - set(frame["firm_id"].astype(str))
        if missing:
            raise UsageError(f"rows not in the labeled test slice: {sorted(missing)}")
    else:
        frame = frame.head(args.n_rows)
    if len(frame) == 0:
        print("no rows to explain", file=sys.stderr)
        return EXIT_PARTIAL
    X = apply_preprocessing(frame[features].to_numpy(), stats)
    explanations = [explain_row(model, x, background) for x in X]
    out = explanations_to_frame(
        explanations,
        split=0,
        model_family=model.family,
        row_ids=[f"{f}:{y}" for f, y in zip(frame["firm_id"], frame["label_year"])],
    )
    write_versioned_csv(out, args.out, "explanations")
    print(f"explained {len(frame)} rows with the {model.family} model -> {args.out}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    panel = read_panel(_require(args.panel, "panel file"))
    summary = summarize_panel(panel)
    print(
        f"{summary.n_observations} firm-year rows, "
        f"{summary.n_distressed} flagged ({summary.distress_rate:.4f})"
    )
    if args.out:
        write_versioned_csv(summary.prevalence, args.out, "prevalence")
        print(f"prevalence by year and health class -> {args.out}")
    else:
        print(summary.prevalence.to_string(index=False))
    return EXIT_OK


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--seed", type=int, default=None, help="master RNG seed")
    sub.add_argument("--out-dir", default="out", help="output directory")
    sub.add_argument("--jobs", type=int, default=1, help="worker pool size")
    sub.add_argument("--test-year", type=int, default=None, help="fixed evaluation year")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aidistress",
        description="Distress early-warning benchmark with AI-disclosure features.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("extract-features", help="score corpus documents with the AI lexicon")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="directory of <firm>_<year>.txt files")
    p.add_argument("--lexicon", help="lexicon CSV (default: the shipped bilingual lexicon)")
    p.add_argument("--patents", help="patent CSV")
    p.add_argument("--out", required=True, help="output AI feature CSV")
    p.set_defaults(func=cmd_extract_features)

    p = subs.add_parser("build-panel", help="merge financial and AI feature files")
    _add_common(p)
    p.add_argument("--financial", required=True)
    p.add_argument("--ai-features")
    p.add_argument("--out", required=True, help="output panel CSV")
    p.set_defaults(func=cmd_build_panel)

    p = subs.add_parser("synth", help="generate a calibrated synthetic panel")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = subs.add_parser("run-benchmark", help="windowed benchmark over model families")
    _add_common(p)
    p.add_argument("--panel", required=True, help="panel CSV from build-panel or synth")
    p.set_defaults(func=cmd_run_benchmark)

    p = subs.add_parser("compare", help="paired with-AI vs without-AI inference")
    _add_common(p)
    p.add_argument("--results", required=True, help="results.csv from run-benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--bootstrap-samples", type=int, default=10000)
    p.set_defaults(func=cmd_compare)

    p = subs.add_parser("explain", help="per-row additive explanations from a saved model")
    _add_common(p)
    p.add_argument("--model", required=True, help="model JSON from run-benchmark models/")
    p.add_argument("--panel", required=True)
    p.add_argument("--rows", help="comma-separated firm ids (default: first n rows)")
    p.add_argument("--n-rows", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = subs.add_parser("summarize", help="prevalence and distress-rate summary of a panel")
    _add_common(p)
    p.add_argument("--panel", required=True)
    p.add_argument("--out", help="optional prevalence CSV")
    p.set_defaults(func=cmd_summarize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure: report, exit 1
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    raise SystemExit(main())
