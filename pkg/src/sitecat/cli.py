"""``sitecat`` command line: tagstats, crawl, train, classify, evaluate, experiment."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .classifier import classify_batch
from .config import Config, ConfigError, load_config
from .evaluation import STYLES, Decision, evaluate, render_report, render_table
from .experiments import MissingSourceText, feature_ablation, training_swap
from .html_extract import PageFields, corpus_tag_stats, extract_fields
from .lsi import IndexFormatError, TrainingDoc, build_index, load_index, save_index
from .records import RecordError, RecordSink, iter_records, read_corpus
from .spider import UrllibFetcher, crawl_batch
from .taxonomy import TaxonomyError, load_crosswalk, load_taxonomy, top_level_labels

logger = logging.getLogger("sitecat")


class CommandError(Exception):
    pass


# -- helpers -----------------------------------------------------------------


def _config(args) -> Config:
    overrides = {
        "crawl.workers": getattr(args, "workers", None),
        "crawl.keep_sources": True if getattr(args, "keep_sources", False) else None,
        "crawl.respect_robots": False if getattr(args, "no_robots", False) else None,
        "crawl.max_followed_links": getattr(args, "max_links", None),
        "crawl.max_depth": getattr(args, "max_depth", None),
        "crawl.timeout": getattr(args, "timeout", None),
        "crawl.max_redirects": getattr(args, "max_redirects", None),
        "crawl.delay": getattr(args, "delay", None),
        "crawl.user_agent": getattr(args, "user_agent", None),
        "index.rank": getattr(args, "rank", None),
        "index.min_df": getattr(args, "min_df", None),
        "index.stopwords": getattr(args, "stopwords", None),
        "decision.k": getattr(args, "knn_k", None),
        "decision.threshold": getattr(args, "threshold", None),
        "decision.multi_label": True if getattr(args, "multi_label", False) else None,
        "paths.crosswalk": getattr(args, "crosswalk", None),
    }
    return load_config(args.config, overrides)


def _crosswalk(cfg: Config):
    path = cfg.paths.get("crosswalk")
    return load_crosswalk(path) if path else None


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _summary_stream(args):
    # records own standard output when no --out file is given
    return sys.stdout if args.out else sys.stderr


def _write_json(obj, path) -> None:
    if path:
        Path(path).write_text(json.dumps(obj, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def _truth_map(path, taxonomy, crosswalk) -> dict[str, list[str]]:
    truth = {}
    for rec in iter_records(path):
        doc_id = rec.get("doc_id") or rec.get("domain")
        labels = rec.get("labels", rec.get("truth"))
        if not doc_id or not isinstance(labels, list):
            raise CommandError(f"{path}: truth record needs doc_id and labels")
        truth[doc_id] = top_level_labels(taxonomy, labels, crosswalk)
    return truth


def _training_docs(paths, taxonomy, crosswalk) -> list[TrainingDoc]:
    docs, origin = [], {}
    for path in paths:
        for rec in read_corpus(path):
            if rec.doc_id in origin:
                raise CommandError(f"duplicate doc_id {rec.doc_id!r} in {origin[rec.doc_id]} and {path}")
            origin[rec.doc_id] = path
            if not rec.labels:
                raise CommandError(f"{path}: training record {rec.doc_id!r} has no labels")
            labels = top_level_labels(taxonomy, rec.labels, crosswalk)
            if not labels:
                raise CommandError(f"{path}: labels of {rec.doc_id!r} map to no NAICS category")
            docs.append(TrainingDoc(rec.doc_id, rec.text, labels, rec.source))
    return docs


def _train(paths, cfg: Config, taxonomy, crosswalk):
    docs = _training_docs(paths, taxonomy, crosswalk)
    if not docs:
        raise CommandError("training corpora contain no records")
    return build_index(docs, rank=cfg.rank, min_df=cfg.min_df, stopwords=cfg.stopwords)


# -- commands ----------------------------------------------------------------


def cmd_tagstats(args) -> int:
    src = Path(args.input)
    pages: list[PageFields] = []
    if src.is_dir():
        for path in sorted(p for p in src.rglob("*") if p.is_file()):
            pages.append(extract_fields(path.read_bytes()))
    elif src.is_file():
        for rec in iter_records(src):
            per = rec.get("per_source")
            if not isinstance(per, dict):
                raise CommandError(f"{src}: crawl record without per_source; re-crawl with --keep-sources")
            pages.append(PageFields(
                title=per.get("title", ""),
                meta_keywords=per.get("meta_keywords", ""),
                meta_description=per.get("meta_description", ""),
                body_text=per.get("body", ""),
            ))
    else:
        raise CommandError(f"cannot read {src}")
    if not pages:
        raise CommandError(f"no pages found in {src}")
    report = corpus_tag_stats(pages)
    _emit(report.to_text(), args.out)
    _write_json(report.to_record(), args.json_out)
    return 0


def _read_domains(path) -> list[str]:
    domains = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                domains.append(line)
    return domains


def cmd_crawl(args) -> int:
    cfg = _config(args)
    domains = _read_domains(args.domains)
    policy = cfg.crawl

    def fetcher():
        return UrllibFetcher(timeout=policy.per_request_timeout, user_agent=policy.user_agent)

    with RecordSink(args.out or sys.stdout) as sink:
        summary = crawl_batch(domains, fetcher, policy, cfg.workers, sink, keep_sources=cfg.keep_sources)
    s = summary.as_dict()
    report = _summary_stream(args)
    print(f"domains: {len(domains)}", file=report)
    for key in ("reachable", "unreachable", "empty_text"):
        print(f"{key}: {s[key]}", file=report)
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    taxonomy = load_taxonomy()
    index = _train(args.corpora, cfg, taxonomy, _crosswalk(cfg))
    save_index(index, args.out)
    counts = Counter(label for labels in index.doc_labels for label in labels)
    print(f"documents: {index.n_docs}")
    print(f"vocabulary: {len(index.vocabulary)}")
    print(f"rank: {index.rank}")
    for code in taxonomy.codes:
        if counts[code]:
            print(f"category {code}: {counts[code]}")
    return 0


def cmd_classify(args) -> int:
    cfg = _config(args)
    taxonomy = load_taxonomy()
    crosswalk = _crosswalk(cfg)
    index = load_index(args.index)

    def carry_truth(record, out):
        labels = record.get("labels")
        if isinstance(labels, list) and labels:
            try:
                out["truth"] = top_level_labels(taxonomy, labels, crosswalk)
            except TaxonomyError as exc:
                logger.warning("%s: %s", out["doc_id"], exc)

    with RecordSink(args.out or sys.stdout) as sink:
        summary = classify_batch(
            index, iter_records(args.input, strict=False), cfg.decision, sink,
            workers=cfg.workers, extra=carry_truth,
        )
    s = summary.as_dict()
    report = _summary_stream(args)
    print(f"records: {s['records']}", file=report)
    print(f"errors: {s['errors']}", file=report)
    print(f"unassigned: {s['unassigned']}", file=report)
    for code, n in s["assignments"].items():
        print(f"category {code}: {n}", file=report)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    taxonomy = load_taxonomy()
    crosswalk = _crosswalk(cfg)
    truth = _truth_map(args.truth, taxonomy, crosswalk) if args.truth else {}
    decisions = []
    for rec in iter_records(args.results):
        doc_id = rec.get("doc_id")
        labels = truth.get(doc_id, rec.get("truth"))
        if not labels:
            logger.warning("no truth for %s; skipped", doc_id)
            continue
        decisions.append(Decision.of(doc_id, rec.get("assigned", []), labels))
    report = evaluate(decisions, taxonomy, macro_over=args.macro_over)
    _emit(render_report(report, args.style, name=args.name), args.out)
    _write_json(report.to_record(), args.json_out)
    return 0


def cmd_experiment(args) -> int:
    cfg = _config(args)
    taxonomy = load_taxonomy()
    crosswalk = _crosswalk(cfg)
    if args.name == "feature-ablation":
        if not args.crawl_log or not args.truth:
            raise CommandError("feature-ablation needs --crawl-log and --truth")
        if args.index:
            index = load_index(args.index)
        elif args.train:
            index = _train(args.train, cfg, taxonomy, crosswalk)
        else:
            raise CommandError("feature-ablation needs --index or --train")
        truth = _truth_map(args.truth, taxonomy, crosswalk)
        rows = feature_ablation(index, list(iter_records(args.crawl_log)), truth, cfg.decision, taxonomy)
        style = "feature-table"
    else:
        if not args.corpus_a or not args.corpus_b or not args.test:
            raise CommandError("training-swap needs --corpus-a, --corpus-b and --test")
        names = args.names or [_stem(args.corpus_a), _stem(args.corpus_b)]
        indexes = [
            (names[0], _train(args.corpus_a, cfg, taxonomy, crosswalk)),
            (names[1], _train(args.corpus_b, cfg, taxonomy, crosswalk)),
        ]
        test = list(iter_records(args.test))
        if args.truth:
            truth = _truth_map(args.truth, taxonomy, crosswalk)
        else:
            truth = {
                (r.get("doc_id") or r.get("domain")): top_level_labels(taxonomy, r.get("labels", []), crosswalk)
                for r in test
            }
        items = [((r.get("doc_id") or r.get("domain")), r.get("text", "")) for r in test]
        rows = training_swap(indexes, items, truth, cfg.decision, taxonomy)
        style = "training-table"
    _emit(render_table(rows, style), args.out)
    _write_json({name: rep.to_record() for name, rep in rows}, args.json_out)
    return 0


def _stem(paths) -> str:
    return "+".join(Path(p).stem for p in paths)


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file with [crawl] [index] [decision] [paths]")
    common.add_argument("--out", help="output path (default: standard output where applicable)")
    common.add_argument("--workers", type=int, help="worker threads for crawl/classify")
    common.add_argument("--seed", type=int, help="reserved; the pipeline is deterministic")
    common.add_argument("--keep-sources", action="store_true", help="keep per-source text in crawl records")
    common.add_argument("--no-robots", action="store_true", help="ignore robots.txt")
    common.add_argument("--rank", type=int, help="LSI rank k")
    common.add_argument("--min-df", type=int, help="minimum document frequency of indexed terms")
    common.add_argument("--stopwords", help="stopword file, or 'default' / 'none'")
    common.add_argument("--knn-k", type=int, help="number of neighbors K")
    common.add_argument("--threshold", type=float, help="score threshold for extra categories")
    common.add_argument("--multi-label", action="store_true", help="assign every category scoring >= threshold")
    common.add_argument("--crosswalk", help="SIC,NAICS crosswalk for SIC:nnnn labels")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="sitecat", description="Classify web sites into top-level NAICS industry categories.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("tagstats", parents=[common], help="word-count buckets for title/meta/body text")
    s.add_argument("input", help="directory of HTML files, or a crawl log kept with --keep-sources")
    s.add_argument("--json-out", help="write the machine-readable report here")
    s.set_defaults(func=cmd_tagstats)

    s = sub.add_parser("crawl", parents=[common], help="crawl sites into representative documents")
    s.add_argument("domains", help="file with one domain per line")
    s.add_argument("--max-links", type=int, help="anchor links followed per site")
    s.add_argument("--max-depth", type=int, help="hops from the top page")
    s.add_argument("--timeout", type=float, help="per-request timeout, seconds")
    s.add_argument("--max-redirects", type=int)
    s.add_argument("--delay", type=float, help="seconds between requests to one site")
    s.add_argument("--user-agent")
    s.set_defaults(func=cmd_crawl)

    s = sub.add_parser("train", parents=[common], help="build an LSI index from labelled corpora")
    s.add_argument("corpora", nargs="+")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("classify", parents=[common], help="assign categories to corpus or crawl records")
    s.add_argument("index")
    s.add_argument("input")
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("evaluate", parents=[common], help="precision/recall/F1 of classification results")
    s.add_argument("results")
    s.add_argument("--truth", help="corpus-format file with doc_id and labels")
    s.add_argument("--style", choices=STYLES, default="feature-table")
    s.add_argument("--name", default="all", help="row label in table styles")
    s.add_argument("--macro-over", choices=("observed", "all"), default="observed")
    s.add_argument("--json-out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("experiment", parents=[common], help="text-source ablation or training-set swap")
    s.add_argument("name", choices=("feature-ablation", "training-swap"))
    s.add_argument("--index", help="trained index (feature-ablation)")
    s.add_argument("--train", nargs="+", help="training corpora (feature-ablation)")
    s.add_argument("--crawl-log", help="crawl log kept with --keep-sources (feature-ablation)")
    s.add_argument("--truth", help="doc_id/labels records for the test sites")
    s.add_argument("--corpus-a", nargs="+")
    s.add_argument("--corpus-b", nargs="+")
    s.add_argument("--names", nargs=2, metavar=("A", "B"))
    s.add_argument("--test", help="test records (corpus format or crawl log)")
    s.add_argument("--json-out")
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except (CommandError, ConfigError, RecordError, TaxonomyError, IndexFormatError,
            MissingSourceText, ValueError, OSError) as exc:
        print(f"sitecat {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
