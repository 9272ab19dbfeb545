"""Command line entry points.

Subcommands: ingest, link, synth, evaluate, review. Each failure class maps
to its own exit code so batch callers can tell what broke:

    2  bad arguments or config
    3  ingest failure (unreadable input, schema mismatch)
    4  linkage failure
    5  evaluation failure
    7  review service failure
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import yaml

from .config import ConfigError, load_config, with_overrides
from .evaluation import (
    SyntheticSpec,
    generate_synthetic,
    load_truth,
    score_against_truth,
    sensitivity_report,
)
from .linkage_engine import PipelineError, ingest_datasets, run_pipeline
from .schema_ingest import SchemaError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INGEST = 3
EXIT_LINK = 4
EXIT_EVALUATE = 5
EXIT_REVIEW = 7

STAGE_EXITS = {"config": EXIT_CONFIG, "ingest": EXIT_INGEST, "link": EXIT_LINK,
               "evaluate": EXIT_EVALUATE, "review": EXIT_REVIEW}

CANONICAL_COLUMNS = ("record_id", "source", "state", "city", "zip", "event_date",
                     "days_since_start", "num_killed", "incident_category",
                     "weapon", "cause_of_death")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="problink",
        description="Probabilistic record linkage of event-level datasets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="ingest and filter both datasets")
    p_ingest.add_argument("--config", required=True)
    p_ingest.add_argument("--out", required=True)
    p_ingest.set_defaults(handler=cmd_ingest)

    p_link = sub.add_parser("link", help="run the full linkage pipeline")
    p_link.add_argument("--config", required=True)
    p_link.add_argument("--out", required=True)
    p_link.add_argument("--threshold", type=float, default=None,
                        help="override the config threshold")
    p_link.add_argument("--jobs", type=int, default=None,
                        help="worker processes for block scoring")
    p_link.set_defaults(handler=cmd_link)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus with truth")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--n-a", type=int, default=1000)
    p_synth.add_argument("--n-b", type=int, default=1000)
    p_synth.add_argument("--overlap", type=int, default=600)
    p_synth.add_argument("--typo-rate", type=float, default=0.1)
    p_synth.add_argument("--date-jitter", type=int, default=1)
    p_synth.add_argument("--missing-rate", type=float, default=0.05)
    p_synth.set_defaults(handler=cmd_synth)

    p_eval = sub.add_parser("evaluate", help="score merged output against truth")
    p_eval.add_argument("--merged", help="merged.csv from a link run")
    p_eval.add_argument("--truth", help="truth.csv with id_a,id_b columns")
    p_eval.add_argument("--adjudication", metavar="M,N,U",
                        help="match,nonmatch,undetermined counts to summarize")
    p_eval.add_argument("--out", help="also write the results as YAML")
    p_eval.set_defaults(handler=cmd_evaluate)

    p_review = sub.add_parser("review", help="clerical review service")
    review_sub = p_review.add_subparsers(dest="review_command", required=True)
    p_serve = review_sub.add_parser("serve", help="serve the review API and UI")
    p_serve.add_argument("--queue", required=True, help="review_queue.csv to load")
    p_serve.add_argument("--log", required=True, help="NDJSON decision log path")
    p_serve.add_argument("--ui", default=None, help="static UI bundle directory")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(handler=cmd_review_serve)

    return parser


def cmd_ingest(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out)
    sides = ingest_datasets(config, out_dir)
    for source, side in sides.items():
        path = out_dir / f"records_{source.lower()}.csv"
        _write_canonical_csv(path, side["kept"])
        print(f"{side['dataset'].name}: {len(side['records'])} records, "
              f"{len(side['rejects'])} rejected, {len(side['filtered'])} filtered, "
              f"{len(side['kept'])} kept -> {path}")
    return EXIT_OK


def cmd_link(args) -> int:
    config = load_config(args.config)
    if args.threshold is not None and not 0.0 < args.threshold < 1.0:
        raise ConfigError(f"--threshold must lie in (0,1), got {args.threshold}")
    config = with_overrides(config, threshold=args.threshold, jobs=args.jobs)
    result = run_pipeline(config, args.out)
    pairs = result.report["pairs"]
    print(f"blocks: {result.report['blocking']['blocks']}  "
          f"pairs compared: {pairs['compared']}")
    print(f"declared: {pairs['declared']}  matched one-to-one: "
          f"{pairs['matched_one_to_one']}  review queue: {pairs['review_queue']}")
    print(f"estimated FDR: {result.fdr:.6f}  estimated FNR: {result.fnr:.6f}")
    print(f"wrote {result.out_dir / 'merged.csv'}")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        spec = SyntheticSpec(n_a=args.n_a, n_b=args.n_b, n_overlap=args.overlap,
                             typo_rate=args.typo_rate, date_jitter=args.date_jitter,
                             missing_rate=args.missing_rate, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    paths = generate_synthetic(spec, args.out)
    print(f"wrote {paths.path_a}, {paths.path_b}, {paths.truth_path}, "
          f"{paths.config_path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    results = {}
    if args.adjudication:
        try:
            counts = tuple(int(v) for v in args.adjudication.split(","))
            if len(counts) != 3:
                raise ValueError("expected three comma-separated counts")
            results["review"] = sensitivity_report(counts)
        except ValueError as exc:
            raise PipelineError("evaluate", f"bad --adjudication: {exc}") from exc
    if args.merged or args.truth:
        if not (args.merged and args.truth):
            raise PipelineError("evaluate", "--merged and --truth go together")
        try:
            truth = load_truth(args.truth)
            with open(args.merged, "r", encoding="utf-8", newline="") as fh:
                pairs = [(row["a_record_id"], row["b_record_id"])
                         for row in csv.DictReader(fh)]
        except (OSError, KeyError) as exc:
            raise PipelineError("evaluate", f"cannot read inputs: {exc}") from exc
        results["accuracy"] = score_against_truth(pairs, truth).as_dict()
    if not results:
        raise PipelineError("evaluate",
                            "nothing to do: pass --merged/--truth or --adjudication")
    text = yaml.safe_dump(results, sort_keys=False)
    print(text, end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_review_serve(args) -> int:
    from .review_service import serve

    if not Path(args.queue).is_file():
        raise PipelineError("review", f"queue file not found: {args.queue}")
    serve(args.queue, args.log, static_dir=args.ui, host=args.host, port=args.port)
    return EXIT_OK


def _write_canonical_csv(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CANONICAL_COLUMNS)
        for rec in records:
            row = []
            for name in CANONICAL_COLUMNS:
                value = getattr(rec, name)
                if name == "event_date" and value is not None:
                    value = value.isoformat()
                row.append("" if value is None else value)
            writer.writerow(row)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print(f"{exc.stage} error: {exc}", file=sys.stderr)
        return STAGE_EXITS.get(exc.stage, 1)
    except SchemaError as exc:
        print(f"ingest error: {exc}", file=sys.stderr)
        return EXIT_INGEST


if __name__ == "__main__":
    sys.exit(main())
