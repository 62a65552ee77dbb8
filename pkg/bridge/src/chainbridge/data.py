"""Reading labeled chains and chain files, writing score records.

The file formats are the chainlab JSON-lines shapes: one object per
line, an optional leading header object with ``record_type: "header"``,
and chain text in plain-string fields.  Three record layouts are
accepted interchangeably:

* annotated chains — ``question_id``, ``f1``, ``f2``, ``hypothesis``,
  ``label`` (the training format);
* retrieved chains — ``chain_id``, ``question_id``, ``f1``, ``f2``,
  ``hypothesis``;
* delexicalized chains — same, with the hypothesis under ``h``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping


@dataclass(frozen=True)
class LabeledChain:
    """One training or evaluation example."""

    question_id: str
    f1: str
    f2: str
    hypothesis: str
    label: int

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")

    @property
    def texts(self) -> tuple[str, str, str]:
        return (self.f1, self.f2, self.hypothesis)


@dataclass(frozen=True)
class ChainRow:
    """One chain to score, addressed by its chain id."""

    chain_id: str
    question_id: str
    f1: str
    f2: str
    hypothesis: str


def iter_records(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (line number, object) for data records, skipping the header."""
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {number}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise ValueError(f"{path}: line {number}: record is not an object")
            if record.get("record_type") == "header":
                continue
            yield number, record


def _text_field(record: Mapping, keys: tuple[str, ...], path: str | Path, line: int) -> str:
    for key in keys:
        value = record.get(key)
        if isinstance(value, str) and value:
            return value
    raise ValueError(f"{path}: line {line}: missing text field {' or '.join(keys)}")


def _label_field(record: Mapping, path: str | Path, line: int) -> int:
    value = record.get("label")
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, int) and value in (0, 1):
        return value
    raise ValueError(f"{path}: line {line}: missing or non-binary label")


def read_labeled_chains(path: str | Path) -> list[LabeledChain]:
    """Read labeled chains for training or validation."""
    examples = []
    for number, record in iter_records(path):
        question_id = str(record.get("question_id") or f"line{number}")
        examples.append(
            LabeledChain(
                question_id=question_id,
                f1=_text_field(record, ("f1",), path, number),
                f2=_text_field(record, ("f2",), path, number),
                hypothesis=_text_field(record, ("hypothesis", "h"), path, number),
                label=_label_field(record, path, number),
            )
        )
    if not examples:
        raise ValueError(f"{path}: no labeled chains")
    return examples


def read_chain_rows(path: str | Path) -> list[ChainRow]:
    """Read chains to score (labels not required)."""
    rows = []
    for number, record in iter_records(path):
        rows.append(
            ChainRow(
                chain_id=str(record.get("chain_id") or f"line{number}"),
                question_id=str(record.get("question_id") or ""),
                f1=_text_field(record, ("f1",), path, number),
                f2=_text_field(record, ("f2",), path, number),
                hypothesis=_text_field(record, ("hypothesis", "h"), path, number),
            )
        )
    if not rows:
        raise ValueError(f"{path}: no chains")
    return rows


def write_records(path: str | Path, header: Mapping | None, records: Iterable[Mapping]) -> None:
    """Write records as one sorted-key JSON object per line."""
    with open(path, "w", encoding="utf-8") as handle:
        if header is not None:
            handle.write(json.dumps(dict(header), sort_keys=True) + "\n")
        for record in records:
            handle.write(json.dumps(dict(record), sort_keys=True) + "\n")
