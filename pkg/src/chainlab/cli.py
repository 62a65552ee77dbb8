"""Command-line pipeline: corpus -> retrieval -> templates -> scores -> report.

Every stage reads and writes line-delimited JSON with a leading header that
echoes the producing command and its configuration, so each stage can be
re-run and diffed independently.  Exit codes are stable: 0 success, 1 usage
or input error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from typing import Callable, Iterable, Sequence

from . import __version__
from .dataio import DataFormatError, load_chain_split
from .grc import canonical_pattern, canonical_views, generalize
from .index import build_index, load_index, save_index
from .metrics import consistency, evaluate
from .records import (
    chain_record,
    gold_labels_by_identity,
    grc_record,
    identified_chain_from_record,
    identified_chains_from_annotated,
    make_header,
    qa_context_from_chain_file,
    qa_items_from_file,
    read_records,
    score_record_dict,
    score_records_from_file,
    write_records,
)
from .retrieval import RetrievalParams, rescore_chain, retrieve_chains
from .scoring import (
    IdentifiedChain,
    ProtocolError,
    ScorerSpec,
    rank_chains,
    score_chains,
)
from .textnorm import STOPWORDS_ENV_VAR

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INTERNAL = 2

METRIC_KEYS = {"f1": "f1", "auc": "auc_roc", "p1": "p_at_1", "ndcg": "ndcg"}


class _ArgumentParser(argparse.ArgumentParser):
    """Argument errors exit with the input-error code instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _ordered_map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _write_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text + "\n")
    else:
        print(text)


def _retrieval_params(args) -> RetrievalParams:
    return RetrievalParams(
        k=args.k,
        l=args.l,
        m=args.m,
        require_question_and_answer_overlap=(args.overlap == "both"),
        second_hop_query=args.second_hop,
    )


def _scorer_spec(args) -> ScorerSpec:
    return ScorerSpec.parse(
        args.scorer,
        representation=args.repr,
        timeout=args.timeout,
        batch_size=args.batch_size,
    )


def _load_chains_any(path: str) -> list[IdentifiedChain]:
    """Accept both pipeline chain records and annotated dataset records."""
    header, records = read_records(path)
    if not records:
        raise DataFormatError("no records", path=path)
    if "judgments" in records[0]:
        return identified_chains_from_annotated(load_chain_split(path))
    first_line = 2 if header is not None else 1
    return [
        identified_chain_from_record(record, number, path)
        for number, record in enumerate(records, start=first_line)
    ]


def do_index(facts_path: str, out_dir: str, *, force: bool = False) -> dict:
    with open(facts_path, "r", encoding="utf-8") as handle:
        sentences = [line.rstrip("\n") for line in handle if line.strip()]
    index = build_index(sentences)
    try:
        save_index(index, out_dir, overwrite=force)
    except FileExistsError as exc:
        raise FileExistsError(f"{exc}; pass --force to overwrite") from exc
    return {"facts": index.doc_count, "skipped": index.skipped, "out": out_dir}


def cmd_index(args) -> int:
    summary = do_index(args.facts, args.out, force=args.force)
    print(f"indexed {summary['facts']} facts ({summary['skipped']} skipped) -> {summary['out']}")
    return EXIT_OK


def do_retrieve(
    index_dir: str, questions_path: str, out_path: str, params: RetrievalParams, jobs: int = 1
) -> int:
    index = load_index(index_dir)
    items = qa_items_from_file(questions_path)

    def work(qa):
        chains = retrieve_chains(index, qa, params)
        return [
            chain_record(
                IdentifiedChain(
                    chain_id=f"{qa.question_id}#{rank}",
                    question_id=qa.question_id,
                    chain=chain,
                ),
                question=qa.question,
                answer=qa.answer,
            )
            for rank, chain in enumerate(chains)
        ]

    header = make_header(
        "retrieve",
        {
            "index": index_dir,
            "questions": questions_path,
            "k": params.k,
            "l": params.l,
            "m": params.m,
            "overlap": "both" if params.require_question_and_answer_overlap else "either",
            "second_hop": params.second_hop_query,
        },
    )
    per_question = _ordered_map(work, items, jobs)
    return write_records(
        out_path, (record for group in per_question for record in group), header
    )


def cmd_retrieve(args) -> int:
    count = do_retrieve(args.index, args.questions, args.out, _retrieval_params(args), args.jobs)
    print(f"retrieved {count} chains -> {args.out}")
    return EXIT_OK


def do_grc(in_path: str, out_path: str, jobs: int = 1) -> int:
    chains = _load_chains_any(in_path)

    def work(identified):
        grc = generalize(identified.chain)
        t1, t2, th, bindings = canonical_views(grc)
        return grc_record(identified, canonical_pattern(grc), (t1, t2, th), bindings)

    header = make_header("grc", {"in": in_path})
    return write_records(out_path, _ordered_map(work, chains, jobs), header)


def cmd_grc(args) -> int:
    count = do_grc(args.input, args.out, args.jobs)
    print(f"generalized {count} chains -> {args.out}")
    return EXIT_OK


def do_score(
    in_path: str,
    out_path: str,
    spec: ScorerSpec,
    *,
    recompute_index: str | None = None,
    second_hop: str = "qa+f1",
) -> int:
    chains = _load_chains_any(in_path)
    if recompute_index:
        from .retrieval import QAItem

        index = load_index(recompute_index)
        context = qa_context_from_chain_file(in_path)
        params = RetrievalParams(second_hop_query=second_hop)
        rescored = []
        for item in chains:
            if item.question_id not in context:
                raise DataFormatError(
                    f"chain {item.chain_id}: no question/answer text to recompute scores from",
                    path=in_path,
                )
            question, answer = context[item.question_id]
            qa = QAItem(question_id=item.question_id, question=question, answer=answer)
            rescored.append(
                IdentifiedChain(
                    chain_id=item.chain_id,
                    question_id=item.question_id,
                    chain=rescore_chain(index, qa, item.chain, params),
                )
            )
        chains = rescored

    records = score_chains(spec, chains)
    by_id = {c.chain_id: c.chain for c in chains}
    header = make_header(
        "score",
        {
            "in": in_path,
            "scorer": spec.name,
            "representation": spec.representation,
            "batch_size": spec.batch_size,
            "recompute_index": recompute_index or "",
        },
    )
    return write_records(
        out_path,
        (
            score_record_dict(
                record,
                f1_id=by_id[record.chain_id].f1.id,
                f2_id=by_id[record.chain_id].f2.id,
            )
            for record in records
        ),
        header,
    )


def cmd_score(args) -> int:
    count = do_score(
        args.input,
        args.out,
        _scorer_spec(args),
        recompute_index=args.recompute_index,
        second_hop=args.second_hop,
    )
    print(f"scored {count} chains -> {args.out}")
    return EXIT_OK


def do_rank(scores_path: str, out_path: str) -> int:
    from .scoring import ScoreRecord

    rows = score_records_from_file(scores_path)
    records = [
        ScoreRecord(
            chain_id=row["chain_id"],
            question_id=row["question_id"],
            score=row["score"],
            scorer_name=row["scorer_name"],
        )
        for row in rows
    ]
    header = make_header("rank", {"scores": scores_path})
    rankings = []
    for question_id in sorted({r.question_id for r in records}):
        ordered = rank_chains(question_id, records)
        rankings.append(
            {
                "record_type": "ranking",
                "question_id": question_id,
                "chain_ids": [r.chain_id for r in ordered],
                "scores": [r.score for r in ordered],
            }
        )
    return write_records(out_path, rankings, header)


def cmd_rank(args) -> int:
    count = do_rank(args.scores, args.out)
    print(f"ranked {count} questions -> {args.out}")
    return EXIT_OK


def _join_scores_with_gold(rows: list[dict], gold_path: str, split: str | None) -> list[dict]:
    labels = gold_labels_by_identity(load_chain_split(gold_path, split))
    joined = []
    for row in rows:
        if not row["f1_id"] or not row["f2_id"]:
            raise DataFormatError(
                f"score record {row['chain_id']} lacks fact ids; "
                "re-create it with the score command"
            )
        key = (row["question_id"], row["f1_id"], row["f2_id"])
        if key not in labels:
            raise ValueError(f"no gold label for chain {row['chain_id']} {key}")
        joined.append(
            {
                "question_id": row["question_id"],
                "chain_id": row["chain_id"],
                "score": row["score"],
                "label": labels[key],
            }
        )
    return joined


def do_eval(
    scores_path: str,
    gold_path: str,
    *,
    split: str | None = None,
    metrics: Sequence[str] = ("f1", "auc", "p1", "ndcg"),
    threshold: float | str = 0.5,
    dev_scores_path: str | None = None,
    dev_gold_path: str | None = None,
) -> dict:
    rows = _join_scores_with_gold(score_records_from_file(scores_path), gold_path, split)
    dev_rows = None
    if dev_scores_path:
        if not dev_gold_path:
            raise ValueError("--dev-scores needs --dev-gold")
        dev_rows = _join_scores_with_gold(
            score_records_from_file(dev_scores_path), dev_gold_path, None
        )
    report = evaluate(rows, threshold=threshold, dev_rows=dev_rows)

    payload = asdict(report)
    for flag, key in METRIC_KEYS.items():
        if flag not in metrics:
            payload.pop(key, None)
    payload["per_question"] = [
        {"question_id": q, "ndcg": n, "p_at_1": p} for q, n, p in report.per_question
    ]
    return payload


def cmd_eval(args) -> int:
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in metrics if m not in METRIC_KEYS]
    if unknown:
        raise ValueError(f"unknown metric(s): {', '.join(unknown)}")
    threshold: float | str = args.threshold
    if threshold != "auto":
        threshold = float(threshold)
    payload = do_eval(
        args.scores,
        args.gold,
        split=args.split,
        metrics=metrics,
        threshold=threshold,
        dev_scores_path=args.dev_scores,
        dev_gold_path=args.dev_gold,
    )
    _write_json(payload, args.out)
    return EXIT_OK


def do_consistency(
    orig_path: str, edited_path: str, scores_a_path: str, scores_b_path: str
) -> dict:
    orig = _load_chains_any(orig_path)
    edited = _load_chains_any(edited_path)
    if len(orig) != len(edited):
        raise DataFormatError(
            f"pair files differ in length: {len(orig)} vs {len(edited)}", path=edited_path
        )
    scores_a = {row["chain_id"]: row["score"] for row in score_records_from_file(scores_a_path)}
    scores_b = {row["chain_id"]: row["score"] for row in score_records_from_file(scores_b_path)}

    original_scores = {}
    edited_scores = {}
    for original, edit in zip(orig, edited):
        pair_id = original.chain_id
        try:
            original_scores[pair_id] = scores_a[original.chain_id]
            edited_scores[pair_id] = scores_b[edit.chain_id]
        except KeyError as exc:
            raise ValueError(f"no score for chain {exc.args[0]!r}") from exc

    report = consistency(original_scores, edited_scores)
    return {
        "pairs": report.pairs,
        "fraction_zero_change": report.fraction_zero_change,
        "mean_abs_change": report.mean_abs_change,
        "histogram": dict(report.histogram),
    }


def cmd_consistency(args) -> int:
    payload = do_consistency(args.orig, args.edited, args.scores_a, args.scores_b)
    _write_json(payload, args.out)
    return EXIT_OK


def do_mine(grc_path: str, scores_path: str, out_path: str) -> int:
    _, grc_records = read_records(grc_path)
    scores = {row["chain_id"]: row["score"] for row in score_records_from_file(scores_path)}

    groups: dict[str, list[str]] = {}
    for record in grc_records:
        groups.setdefault(str(record["pattern"]), []).append(str(record["chain_id"]))

    rows = []
    for pattern, chain_ids in groups.items():
        try:
            values = [scores[chain_id] for chain_id in chain_ids]
        except KeyError as exc:
            raise ValueError(f"no score for chain {exc.args[0]!r}") from exc
        rows.append(
            {
                "record_type": "pattern",
                "pattern": pattern,
                "support": len(chain_ids),
                "mean_score": sum(values) / len(values),
                "chain_ids": sorted(chain_ids)[:5],
            }
        )
    rows.sort(key=lambda r: (-r["mean_score"], -r["support"], r["pattern"]))
    header = make_header("mine", {"grc": grc_path, "scores": scores_path})
    return write_records(out_path, rows, header)


def cmd_mine(args) -> int:
    count = do_mine(args.grc, args.scores, args.out)
    print(f"mined {count} patterns -> {args.out}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    paths = {
        name: os.path.join(args.out_dir, name)
        for name in ("chains.jsonl", "grc.jsonl", "scores.jsonl", "rankings.jsonl")
    }
    index_dir = os.path.join(args.out_dir, "index")

    summary = do_index(args.facts, index_dir, force=args.force)
    print(f"[1/6] indexed {summary['facts']} facts")
    params = _retrieval_params(args)
    count = do_retrieve(index_dir, args.questions, paths["chains.jsonl"], params, args.jobs)
    print(f"[2/6] retrieved {count} chains")
    count = do_grc(paths["chains.jsonl"], paths["grc.jsonl"], args.jobs)
    print(f"[3/6] generalized {count} chains")
    count = do_score(paths["chains.jsonl"], paths["scores.jsonl"], _scorer_spec(args))
    print(f"[4/6] scored {count} chains")
    count = do_rank(paths["scores.jsonl"], paths["rankings.jsonl"])
    print(f"[5/6] ranked {count} questions")

    if args.gold:
        threshold: float | str = args.threshold
        if threshold != "auto":
            threshold = float(threshold)
        payload = do_eval(paths["scores.jsonl"], args.gold, threshold=threshold)
        _write_json(payload, os.path.join(args.out_dir, "report.json"))
        print(f"[6/6] wrote evaluation report")
    else:
        print("[6/6] no gold labels supplied; report skipped")
    return EXIT_OK


def _add_retrieval_flags(parser) -> None:
    parser.add_argument("--k", type=int, default=20, help="first-hop fact pool size")
    parser.add_argument("--l", type=int, default=4, help="second-hop facts kept per f1")
    parser.add_argument("--m", type=int, default=10, help="chains kept per question")
    parser.add_argument(
        "--overlap",
        choices=("both", "either"),
        default="both",
        help="keep pairs overlapping question AND answer, or either",
    )
    parser.add_argument(
        "--second-hop",
        choices=("qa+f1", "qa"),
        default="qa+f1",
        help="ranking query for the second hop",
    )


def _add_scorer_flags(parser) -> None:
    parser.add_argument(
        "--scorer",
        default="retrieval",
        help="retrieval | cmd:<argv> | http:<url>",
    )
    parser.add_argument(
        "--repr",
        choices=("surface", "grc"),
        default="surface",
        help="send original sentences or delexicalized templates",
    )
    parser.add_argument("--timeout", type=float, default=30.0, help="scorer timeout (seconds)")
    parser.add_argument("--batch-size", type=int, default=32, help="chains per scorer batch")


def _add_jobs_flag(parser) -> None:
    parser.add_argument("--jobs", type=int, default=1, help="worker threads (output order is kept)")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="chainlab",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"The {STOPWORDS_ENV_VAR} environment variable overrides the stopword list path.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", action="store_true", help="log progress details")
    subparsers = parser.add_subparsers(dest="subcommand", required=True, metavar="COMMAND")

    sp = subparsers.add_parser("index", help="build a fact index", parents=[])
    sp.add_argument("--facts", required=True, help="text file, one fact per line")
    sp.add_argument("--out", required=True, help="index directory to create")
    sp.add_argument("--force", action="store_true", help="overwrite an existing index")
    sp.set_defaults(func=cmd_index)

    sp = subparsers.add_parser("retrieve", help="retrieve two-fact chains per question")
    sp.add_argument("--index", required=True, help="index directory")
    sp.add_argument("--questions", required=True, help="question/answer JSONL")
    sp.add_argument("--out", required=True, help="chain records output")
    _add_retrieval_flags(sp)
    _add_jobs_flag(sp)
    sp.set_defaults(func=cmd_retrieve)

    sp = subparsers.add_parser("grc", help="delexicalize chains into templates")
    sp.add_argument("--in", dest="input", required=True, help="chain records input")
    sp.add_argument("--out", required=True, help="template records output")
    _add_jobs_flag(sp)
    sp.set_defaults(func=cmd_grc)

    sp = subparsers.add_parser("score", help="score chains with a pluggable scorer")
    sp.add_argument("--in", dest="input", required=True, help="chain records input")
    sp.add_argument("--out", required=True, help="score records output")
    _add_scorer_flags(sp)
    sp.add_argument(
        "--recompute-index",
        metavar="DIR",
        default=None,
        help="recompute per-hop retrieval scores against this index first",
    )
    sp.add_argument(
        "--second-hop",
        choices=("qa+f1", "qa"),
        default="qa+f1",
        help="second-hop query used with --recompute-index",
    )
    sp.set_defaults(func=cmd_score)

    sp = subparsers.add_parser("rank", help="rank scored chains per question")
    sp.add_argument("--scores", required=True, help="score records input")
    sp.add_argument("--out", required=True, help="ranking records output")
    sp.set_defaults(func=cmd_rank)

    sp = subparsers.add_parser("eval", help="evaluate scores against gold labels")
    sp.add_argument("--scores", required=True, help="score records input")
    sp.add_argument("--gold", required=True, help="annotated chain JSONL with labels")
    sp.add_argument("--split", default=None, help="filter gold records to one split")
    sp.add_argument("--metrics", default="f1,auc,p1,ndcg", help="comma list: f1,auc,p1,ndcg")
    sp.add_argument("--threshold", default="0.5", help="F1 threshold, or 'auto'")
    sp.add_argument("--dev-scores", default=None, help="dev score records for --threshold auto")
    sp.add_argument("--dev-gold", default=None, help="dev gold labels for --threshold auto")
    sp.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    sp.set_defaults(func=cmd_eval)

    sp = subparsers.add_parser("consistency", help="compare scores across chain edits")
    sp.add_argument("--orig", required=True, help="original chain records")
    sp.add_argument("--edited", required=True, help="edited chain records (same order)")
    sp.add_argument("--scores-a", required=True, help="scores of the original chains")
    sp.add_argument("--scores-b", required=True, help="scores of the edited chains")
    sp.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    sp.set_defaults(func=cmd_consistency)

    sp = subparsers.add_parser("mine", help="group scored chains by template pattern")
    sp.add_argument("--grc", required=True, help="template records input")
    sp.add_argument("--scores", required=True, help="score records input")
    sp.add_argument("--out", required=True, help="pattern catalog output")
    sp.set_defaults(func=cmd_mine)

    sp = subparsers.add_parser("pipeline", help="run index->retrieve->grc->score->rank->eval")
    sp.add_argument("--facts", required=True, help="text file, one fact per line")
    sp.add_argument("--questions", required=True, help="question/answer JSONL")
    sp.add_argument("--out-dir", required=True, help="directory for all stage outputs")
    sp.add_argument("--gold", default=None, help="annotated chain JSONL for the report")
    sp.add_argument("--threshold", default="0.5", help="F1 threshold, or 'auto'")
    sp.add_argument("--force", action="store_true", help="overwrite an existing index")
    _add_retrieval_flags(sp)
    _add_scorer_flags(sp)
    _add_jobs_flag(sp)
    sp.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (OSError, ValueError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:  # pragma: no cover - internal-error path
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
