"""Declarative hypothesis construction for question/answer pairs."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Hypothesis:
    text: str
    source: str  # "supplied" | "appended"


def make_hypothesis(qa) -> Hypothesis:
    """Hypothesis statement for a QA item.

    A supplied hypothesis is passed through verbatim. Otherwise the fallback
    is the question with its trailing question mark(s) removed, a single
    space, and the answer text appended.
    """
    supplied = getattr(qa, "hypothesis", None)
    if supplied:
        return Hypothesis(text=supplied, source="supplied")
    question = qa.question.rstrip().rstrip("?").rstrip()
    return Hypothesis(text=f"{question} {qa.answer}", source="appended")
