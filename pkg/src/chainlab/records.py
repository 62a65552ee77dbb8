"""Line-delimited record files shared by the pipeline stages.

Every output file starts with a header record echoing the command and
configuration that produced it, so any stage can be re-run and diffed.
Headers carry no timestamps: a rerun with the same inputs must produce
byte-identical files.
"""

from __future__ import annotations

import json
from typing import Iterable, Mapping, Sequence

from . import __version__
from .dataio import AnnotatedChain, DataFormatError
from .index import Fact, fact_id_for
from .retrieval import ChainCandidate, QAItem
from .scoring import IdentifiedChain, ScoreRecord

HEADER_TYPE = "header"


def make_header(command: str, config: Mapping) -> dict:
    return {
        "record_type": HEADER_TYPE,
        "tool": "chainlab",
        "version": __version__,
        "command": command,
        "config": dict(config),
    }


def write_records(path: str, records: Iterable[Mapping], header: Mapping | None = None) -> int:
    """Write records as JSON lines (header first); returns the record count."""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        if header is not None:
            handle.write(json.dumps(header, sort_keys=True) + "\n")
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
            count += 1
    return count


def read_records(path: str) -> tuple[dict | None, list[dict]]:
    """Read JSON lines; a leading header record is split off when present."""
    header: dict | None = None
    records: list[dict] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"invalid JSON ({exc.msg})", line=line_no, path=path) from exc
            if not isinstance(obj, dict):
                raise DataFormatError("record is not a JSON object", line=line_no, path=path)
            if obj.get("record_type") == HEADER_TYPE and header is None and not records:
                header = obj
                continue
            records.append(obj)
    return header, records


def qa_items_from_file(path: str) -> list[QAItem]:
    """Load question/answer items from a JSON-lines file."""
    _, records = read_records(path)
    if not records:
        raise DataFormatError("no records", path=path)
    items = []
    for number, record in enumerate(records, start=1):
        try:
            options = record.get("options")
            items.append(
                QAItem(
                    question_id=str(record["question_id"]),
                    question=str(record["question"]),
                    answer=str(record["answer"]),
                    options=tuple(str(o) for o in options) if options else None,
                    hypothesis=record.get("hypothesis"),
                )
            )
        except (KeyError, ValueError) as exc:
            raise DataFormatError(f"bad question record: {exc}", line=number, path=path) from exc
    return items


def chain_record(
    identified: IdentifiedChain, *, question: str = "", answer: str = ""
) -> dict:
    chain = identified.chain
    record = {
        "record_type": "chain",
        "chain_id": identified.chain_id,
        "question_id": identified.question_id,
        "f1": chain.f1.text,
        "f1_id": chain.f1.id,
        "f2": chain.f2.text,
        "f2_id": chain.f2.id,
        "hypothesis": chain.hypothesis,
        "score_f1": chain.score_f1,
        "score_f2": chain.score_f2,
    }
    if question:
        record["question"] = question
    if answer:
        record["answer"] = answer
    return record


def identified_chain_from_record(record: Mapping, line: int, path: str) -> IdentifiedChain:
    try:
        chain = ChainCandidate(
            f1=Fact.from_text(str(record["f1"])),
            f2=Fact.from_text(str(record["f2"])),
            hypothesis=str(record["hypothesis"]),
            score_f1=float(record.get("score_f1", 0.0)),
            score_f2=float(record.get("score_f2", 0.0)),
        )
        identified = IdentifiedChain(
            chain_id=str(record["chain_id"]),
            question_id=str(record["question_id"]),
            chain=chain,
        )
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"bad chain record: {exc}", line=line, path=path) from exc
    for key, want in (("f1_id", chain.f1.id), ("f2_id", chain.f2.id)):
        stored = record.get(key)
        if stored is not None and stored != want:
            raise DataFormatError(
                f"{key} {stored!r} does not match the fact text (expected {want!r})",
                line=line,
                path=path,
            )
    return identified


def identified_chains_from_file(path: str) -> list[IdentifiedChain]:
    _, records = read_records(path)
    if not records:
        raise DataFormatError("no records", path=path)
    return [
        identified_chain_from_record(record, number, path)
        for number, record in enumerate(records, start=1)
    ]


def qa_context_from_chain_file(path: str) -> dict[str, tuple[str, str]]:
    """Map question_id -> (question, answer) for records that carry them."""
    _, records = read_records(path)
    context: dict[str, tuple[str, str]] = {}
    for record in records:
        if record.get("question") and record.get("answer"):
            context[str(record["question_id"])] = (
                str(record["question"]),
                str(record["answer"]),
            )
    return context


def identified_chains_from_annotated(
    chains: Sequence[AnnotatedChain],
) -> list[IdentifiedChain]:
    """Assign stable per-question chain ids to dataset chains, in file order."""
    counters: dict[str, int] = {}
    identified = []
    for chain in chains:
        ordinal = counters.get(chain.question_id, 0)
        counters[chain.question_id] = ordinal + 1
        identified.append(
            IdentifiedChain(
                chain_id=f"{chain.question_id}#{ordinal}",
                question_id=chain.question_id,
                chain=chain.chain,
            )
        )
    return identified


def score_record_dict(record: ScoreRecord, *, f1_id: str = "", f2_id: str = "") -> dict:
    out = {
        "record_type": "score",
        "chain_id": record.chain_id,
        "question_id": record.question_id,
        "score": record.score,
        "scorer_name": record.scorer_name,
    }
    if f1_id:
        out["f1_id"] = f1_id
    if f2_id:
        out["f2_id"] = f2_id
    return out


def score_records_from_file(path: str) -> list[dict]:
    """Score rows as plain dicts (chain_id, question_id, score, + identity)."""
    _, records = read_records(path)
    if not records:
        raise DataFormatError("no records", path=path)
    rows = []
    for number, record in enumerate(records, start=1):
        try:
            rows.append(
                {
                    "chain_id": str(record["chain_id"]),
                    "question_id": str(record["question_id"]),
                    "score": float(record["score"]),
                    "scorer_name": str(record.get("scorer_name", "")),
                    "f1_id": str(record.get("f1_id", "")),
                    "f2_id": str(record.get("f2_id", "")),
                }
            )
        except (KeyError, ValueError) as exc:
            raise DataFormatError(f"bad score record: {exc}", line=number, path=path) from exc
    return rows


def gold_labels_by_identity(
    chains: Sequence[AnnotatedChain],
) -> dict[tuple[str, str, str], int]:
    """Label lookup keyed by (question_id, f1_id, f2_id).

    Duplicate identical chains must agree on the label.
    """
    labels: dict[tuple[str, str, str], int] = {}
    for chain in chains:
        key = (chain.question_id, chain.chain.f1.id, chain.chain.f2.id)
        label = 1 if chain.label else 0
        if key in labels and labels[key] != label:
            raise ValueError(f"conflicting gold labels for chain {key}")
        labels[key] = label
    return labels


def grc_record(
    identified: IdentifiedChain,
    pattern: str,
    templates: tuple[str, str, str],
    bindings: Mapping[str, str],
) -> dict:
    return {
        "record_type": "grc",
        "chain_id": identified.chain_id,
        "question_id": identified.question_id,
        "pattern": pattern,
        "f1": templates[0],
        "f2": templates[1],
        "h": templates[2],
        "bindings": dict(bindings),
    }


def fact_identity(text: str) -> str:
    """The content-derived id a fact with this text would get."""
    return fact_id_for(text)
