"""Loading and label aggregation for annotated reasoning-chain datasets.

Datasets arrive as line-delimited JSON.  Each worker judged a chain with one
of six categories (``yes`` plus five ``no-`` subcategories) or the rare
``unsure``; aggregation collapses those judgments to a binary validity label
by strict majority on ``yes``.  Public release files use a nested per-question
layout, so a small adapter maps them onto the same domain types; all other
modules only ever see :class:`AnnotatedChain` and :class:`PerturbedPair`.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from .hypothesis import make_hypothesis
from .index import Fact
from .retrieval import ChainCandidate, QAItem

log = logging.getLogger(__name__)

JUDGMENT_YES = "yes"

#: The six worker-facing categories, the rare "unsure", and the bare "no"
#: that some flat files use in place of a subcategory.
JUDGMENTS = frozenset(
    {
        "yes",
        "no",
        "no-f1-alone",
        "no-f2-alone",
        "no-either-alone",
        "no-unjustified",
        "no-nonsense",
        "unsure",
    }
)

SPLITS = ("train", "dev", "test")

#: Published sizes of the auxiliary evaluation files; loaders warn when a
#: file's record count deviates.
EXPECTED_PERTURBED_PAIRS = 855
EXPECTED_EOBQA_CHAINS = 998


class DataFormatError(ValueError):
    """An input file does not match the expected record layout."""

    def __init__(self, message: str, *, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


def canonical_judgment(raw: str) -> str:
    """Normalize a raw judgment string to its canonical hyphenated form."""
    if not isinstance(raw, str):
        raise ValueError(f"judgment must be a string, got {type(raw).__name__}")
    label = raw.strip().lower().replace("_", "-").replace(" ", "-")
    if label not in JUDGMENTS:
        raise ValueError(f"unknown judgment {raw!r}")
    return label


def aggregate_labels(judgments: Sequence[str]) -> bool:
    """Collapse worker judgments to a binary validity label.

    A chain is valid iff a strict majority of the judgments is ``yes``; every
    other category (including ``unsure``) counts against.  No majority means
    invalid.
    """
    if len(judgments) == 0:
        raise ValueError("cannot aggregate an empty judgment list")
    canonical = [canonical_judgment(j) for j in judgments]
    yes = sum(1 for j in canonical if j == JUDGMENT_YES)
    return 2 * yes > len(canonical)


@dataclass(frozen=True)
class AnnotatedChain:
    """A retrieved chain together with its worker judgments and binary label."""

    question_id: str
    chain: ChainCandidate
    judgments: tuple[str, ...]
    label: bool
    split: str
    question: str = ""
    answer: str = ""

    def __post_init__(self) -> None:
        if not self.question_id:
            raise ValueError("question_id must be non-empty")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split tag {self.split!r}")
        object.__setattr__(
            self, "judgments", tuple(canonical_judgment(j) for j in self.judgments)
        )
        if self.label != aggregate_labels(self.judgments):
            raise ValueError("label does not match the majority of the judgments")

    @classmethod
    def from_judgments(
        cls,
        question_id: str,
        chain: ChainCandidate,
        judgments: Sequence[str],
        split: str,
        *,
        question: str = "",
        answer: str = "",
    ) -> "AnnotatedChain":
        return cls(
            question_id=question_id,
            chain=chain,
            judgments=tuple(judgments),
            label=aggregate_labels(judgments),
            split=split,
            question=question,
            answer=answer,
        )


@dataclass(frozen=True)
class PerturbedPair:
    """An original valid chain and a meaning-preserving edit of it."""

    question_id: str
    original: ChainCandidate
    edited: ChainCandidate

    def __post_init__(self) -> None:
        if not self.question_id:
            raise ValueError("question_id must be non-empty")
        a = (self.original.f1.text, self.original.f2.text, self.original.hypothesis)
        b = (self.edited.f1.text, self.edited.f2.text, self.edited.hypothesis)
        if a == b:
            raise ValueError("original and edited chains are textually identical")


@dataclass(frozen=True)
class SplitSummary:
    """Per-split record tally."""

    split: str
    total: int
    valid: int

    @property
    def invalid(self) -> int:
        return self.total - self.valid


def split_summaries(chains: Iterable[AnnotatedChain]) -> tuple[SplitSummary, ...]:
    """Tally totals and valid counts per split, ordered train/dev/test."""
    totals: Counter[str] = Counter()
    valid: Counter[str] = Counter()
    for chain in chains:
        totals[chain.split] += 1
        if chain.label:
            valid[chain.split] += 1
    return tuple(
        SplitSummary(split=s, total=totals[s], valid=valid[s])
        for s in SPLITS
        if totals[s]
    )


def _iter_jsonl(path: str) -> Iterator[tuple[int, dict]]:
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
            yield line_no, obj


def _require(record: Mapping, key: str, line: int, path: str) -> object:
    if key not in record:
        raise DataFormatError(f"missing field {key!r}", line=line, path=path)
    return record[key]


def _chain_candidate(
    record: Mapping, line: int, path: str, *, question: str, answer: str
) -> ChainCandidate:
    f1_text = _require(record, "f1", line, path)
    f2_text = _require(record, "f2", line, path)
    hypothesis = record.get("hypothesis")
    if hypothesis is None:
        if not (question and answer):
            raise DataFormatError(
                "record has no hypothesis and no question/answer to build one from",
                line=line,
                path=path,
            )
        qa = QAItem(question_id="derived", question=question, answer=answer)
        hypothesis = make_hypothesis(qa).text
    try:
        return ChainCandidate(
            f1=Fact.from_text(str(f1_text)),
            f2=Fact.from_text(str(f2_text)),
            hypothesis=str(hypothesis),
            score_f1=float(record.get("score_f1", 0.0)),
            score_f2=float(record.get("score_f2", 0.0)),
        )
    except ValueError as exc:
        raise DataFormatError(str(exc), line=line, path=path) from exc


def _released_label(record: Mapping) -> bool | None:
    for key in ("label", "valid"):
        if key in record and record[key] is not None:
            value = record[key]
            if isinstance(value, bool):
                return value
            if isinstance(value, (int, float)) and value in (0, 1):
                return bool(value)
            if isinstance(value, str) and value.lower() in ("yes", "no", "valid", "invalid"):
                return value.lower() in ("yes", "valid")
            raise ValueError(f"uninterpretable released label {value!r}")
    return None


def _annotated_chain_from_record(
    record: Mapping,
    line: int,
    path: str,
    *,
    default_split: str | None,
    verify: bool,
) -> AnnotatedChain:
    question_id = str(_require(record, "question_id", line, path))
    question = str(record.get("question", ""))
    answer = str(record.get("answer", ""))
    split = record.get("split", default_split)
    if split is None:
        raise DataFormatError("record has no split tag and no split was given", line=line, path=path)
    if split not in SPLITS:
        raise DataFormatError(f"unknown split tag {split!r}", line=line, path=path)

    judgments = _require(record, "judgments", line, path)
    if not isinstance(judgments, list) or not judgments:
        raise DataFormatError("'judgments' must be a non-empty list", line=line, path=path)
    chain = _chain_candidate(record, line, path, question=question, answer=answer)
    try:
        annotated = AnnotatedChain.from_judgments(
            question_id, chain, judgments, split, question=question, answer=answer
        )
    except ValueError as exc:
        raise DataFormatError(str(exc), line=line, path=path) from exc

    if verify:
        try:
            released = _released_label(record)
        except ValueError as exc:
            raise DataFormatError(str(exc), line=line, path=path) from exc
        if released is not None and released != annotated.label:
            raise DataFormatError(
                f"released label {released} disagrees with re-aggregated label {annotated.label}",
                line=line,
                path=path,
            )
    return annotated


def load_chain_split(
    path: str, split: str | None = None, *, verify: bool = False
) -> list[AnnotatedChain]:
    """Load annotated chains from a line-delimited JSON file.

    With ``split`` given, records carrying a different split tag are dropped
    and records without one inherit it.  With ``verify=True``, any released
    binary label stored on a record must agree with the label re-aggregated
    from its judgments.
    """
    if split is not None and split not in SPLITS:
        raise ValueError(f"unknown split tag {split!r}")
    chains: list[AnnotatedChain] = []
    for line_no, record in _iter_jsonl(path):
        if record.get("record_type") == "header":
            continue
        if split is not None and record.get("split", split) != split:
            continue
        chains.append(
            _annotated_chain_from_record(
                record, line_no, path, default_split=split, verify=verify
            )
        )
    if not chains:
        raise DataFormatError(
            "no records" if split is None else f"no records for split {split!r}", path=path
        )
    for summary in split_summaries(chains):
        log.info(
            "%s: split %s: %d chains, %d valid, %d invalid",
            path,
            summary.split,
            summary.total,
            summary.valid,
            summary.invalid,
        )
    return chains


def load_perturbed_pairs(
    path: str, *, expected_count: int | None = EXPECTED_PERTURBED_PAIRS
) -> list[PerturbedPair]:
    """Load original/edited chain pairs from a line-delimited JSON file."""
    pairs: list[PerturbedPair] = []
    for line_no, record in _iter_jsonl(path):
        if record.get("record_type") == "header":
            continue
        question_id = str(_require(record, "question_id", line_no, path))
        question = str(record.get("question", ""))
        answer = str(record.get("answer", ""))
        sides = []
        for key in ("original", "edited"):
            side = _require(record, key, line_no, path)
            if not isinstance(side, Mapping):
                raise DataFormatError(f"{key!r} must be an object", line=line_no, path=path)
            sides.append(
                _chain_candidate(side, line_no, path, question=question, answer=answer)
            )
        try:
            pairs.append(
                PerturbedPair(question_id=question_id, original=sides[0], edited=sides[1])
            )
        except ValueError as exc:
            raise DataFormatError(str(exc), line=line_no, path=path) from exc
    if not pairs:
        raise DataFormatError("no records", path=path)
    if expected_count is not None and len(pairs) != expected_count:
        log.warning(
            "%s: expected %d perturbed pairs, found %d", path, expected_count, len(pairs)
        )
    return pairs


def load_eobqa(
    path: str, *, verify: bool = False, expected_count: int | None = EXPECTED_EOBQA_CHAINS
) -> list[AnnotatedChain]:
    """Load the cross-dataset evaluation chains (a test-only annotation set)."""
    chains = load_chain_split(path, "test", verify=verify)
    if expected_count is not None and len(chains) != expected_count:
        log.warning("%s: expected %d chains, found %d", path, expected_count, len(chains))
    return chains


def annotated_chain_record(chain: AnnotatedChain) -> dict:
    """Serialize an annotated chain back to its file record form."""
    record = {
        "question_id": chain.question_id,
        "f1": chain.chain.f1.text,
        "f2": chain.chain.f2.text,
        "hypothesis": chain.chain.hypothesis,
        "judgments": list(chain.judgments),
        "label": chain.label,
        "split": chain.split,
        "score_f1": chain.chain.score_f1,
        "score_f2": chain.chain.score_f2,
    }
    if chain.question:
        record["question"] = chain.question
    if chain.answer:
        record["answer"] = chain.answer
    return record


# --------------------------------------------------------------------------
# Public-release adapter.
#
# Release files group chains under question objects.  Field names in the wild
# drift between dumps, so this adapter probes a few known spellings; it is the
# only code that should change if the release schema does.
# --------------------------------------------------------------------------


def _release_question_text(obj: Mapping) -> str:
    question = obj.get("question", "")
    if isinstance(question, Mapping):
        return str(question.get("stem", question.get("text", "")))
    return str(question)


def _release_answer_text(obj: Mapping) -> str:
    for key in ("answer", "answer_text", "answerText", "correct_answer"):
        if obj.get(key):
            return str(obj[key])
    question = obj.get("question")
    answer_key = obj.get("answerKey") or obj.get("answer_key")
    if isinstance(question, Mapping) and answer_key:
        for choice in question.get("choices", []):
            if isinstance(choice, Mapping) and choice.get("label") == answer_key:
                return str(choice.get("text", ""))
    return ""


def _release_chain_texts(entry: Mapping) -> tuple[str, str, str | None]:
    raw = entry.get("chain") or entry.get("facts")
    if raw is not None:
        if not isinstance(raw, Sequence) or len(raw) < 2:
            raise ValueError("chain must list at least two facts")
        texts = [
            str(item.get("text", "")) if isinstance(item, Mapping) else str(item)
            for item in raw
        ]
        hypothesis = texts[2] if len(texts) > 2 else None
        return texts[0], texts[1], hypothesis
    f1 = entry.get("fact1") or entry.get("f1")
    f2 = entry.get("fact2") or entry.get("f2")
    if f1 is None or f2 is None:
        raise ValueError("chain entry has no recognizable fact fields")
    hypothesis = entry.get("hypothesis") or entry.get("h")
    return str(f1), str(f2), None if hypothesis is None else str(hypothesis)


def _release_judgments(entry: Mapping) -> list[str]:
    for key in ("judgments", "turk_labels", "labels", "annotations", "votes"):
        raw = entry.get(key)
        if raw is None:
            continue
        if isinstance(raw, Mapping):
            expanded: list[str] = []
            for label, count in raw.items():
                expanded.extend([str(label)] * int(count))
            return expanded
        if isinstance(raw, Sequence) and not isinstance(raw, str):
            return [str(item) for item in raw]
    raise ValueError("chain entry has no recognizable judgment fields")


def chains_from_release_question(
    obj: Mapping, split: str, *, verify: bool = False
) -> list[AnnotatedChain]:
    """Flatten one release question object into annotated chains."""
    question_id = str(obj.get("id") or obj.get("question_id") or "")
    if not question_id:
        raise ValueError("question object has no id")
    question = _release_question_text(obj)
    answer = _release_answer_text(obj)
    entries = obj.get("chains") or obj.get("explanations") or []
    chains: list[AnnotatedChain] = []
    for entry in entries:
        if not isinstance(entry, Mapping):
            raise ValueError("chain entry is not an object")
        f1, f2, hypothesis = _release_chain_texts(entry)
        record: dict = {"f1": f1, "f2": f2}
        if hypothesis is not None:
            record["hypothesis"] = hypothesis
        candidate = _chain_candidate(record, 0, "<release>", question=question, answer=answer)
        judgments = _release_judgments(entry)
        annotated = AnnotatedChain.from_judgments(
            question_id, candidate, judgments, split, question=question, answer=answer
        )
        if verify:
            released = _released_label(entry)
            if released is not None and released != annotated.label:
                raise ValueError(
                    f"question {question_id}: released label {released} disagrees "
                    f"with re-aggregated label {annotated.label}"
                )
        chains.append(annotated)
    return chains


def load_release_split(
    path: str, split: str, *, verify: bool = False
) -> list[AnnotatedChain]:
    """Load a public-release file (JSON array, wrapped object, or JSONL)."""
    if split not in SPLITS:
        raise ValueError(f"unknown split tag {split!r}")
    with open(path, "r", encoding="utf-8") as handle:
        head = handle.read(1)
        handle.seek(0)
        if head == "[":
            questions = json.load(handle)
        elif head == "{":
            first_line = handle.readline()
            handle.seek(0)
            try:
                json.loads(first_line)
                questions = [obj for _, obj in _iter_jsonl(path)]
            except json.JSONDecodeError:
                wrapper = json.load(handle)
                questions = wrapper.get("questions") or wrapper.get("data") or []
        else:
            raise DataFormatError("file is neither a JSON array nor JSON lines", path=path)
    chains: list[AnnotatedChain] = []
    for number, obj in enumerate(questions, start=1):
        try:
            chains.extend(chains_from_release_question(obj, split, verify=verify))
        except ValueError as exc:
            raise DataFormatError(str(exc), line=number, path=path) from exc
    if not chains:
        raise DataFormatError("no records", path=path)
    return chains


def fleiss_kappa(judgment_lists: Sequence[Sequence[str]]) -> float:
    """Inter-annotator agreement over categorical judgments (Fleiss' kappa).

    Every item must have the same number of raters (≥ 2).  Returns 1.0 for
    the degenerate all-agree-on-one-category case where chance agreement
    equals 1.
    """
    if not judgment_lists:
        raise ValueError("no items to compute agreement over")
    raters = len(judgment_lists[0])
    if raters < 2:
        raise ValueError("agreement requires at least two raters per item")
    if any(len(item) != raters for item in judgment_lists):
        raise ValueError("every item must have the same number of raters")
    canonical = [[canonical_judgment(j) for j in item] for item in judgment_lists]
    categories = sorted({j for item in canonical for j in item})
    n_items = len(canonical)

    category_totals = Counter(j for item in canonical for j in item)
    p_j = {c: category_totals[c] / (n_items * raters) for c in categories}
    expected = sum(p * p for p in p_j.values())

    observed = 0.0
    for item in canonical:
        counts = Counter(item)
        observed += (sum(c * c for c in counts.values()) - raters) / (raters * (raters - 1))
    observed /= n_items

    if expected == 1.0:
        return 1.0
    return (observed - expected) / (1.0 - expected)
