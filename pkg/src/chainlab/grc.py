"""Generalization of two-fact chains by shared-entity delexicalization.

A chain (f1, f2, hypothesis) is abstracted by finding noun phrases whose
head-noun stems repeat across at least two of the three sentences, replacing
every occurrence with a variable, and keeping the rest of the tokens as a
template. Determiners and adjectives directly in front of a repeated head
are folded into the variable only where they match (by stem) across all of
its occurrences; where modifiers differ, only the noun core is replaced.

Selection is deterministic: longer head sequences win, claims are made
left-to-right without overlap, and variables are numbered in order of first
occurrence reading f1, then f2, then the hypothesis.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .postag import ADJ, DET, NOUN, PosTaggedSentence, Tagger, default_tagger
from .stem import stem

_VARIABLE_RE = re.compile(r"^\[V(\d+)\]$")

# Print names for variables in canonical patterns, in first-occurrence order.
PATTERN_ALPHABET = ("X", "Y", "Z", "W", "U", "V", "T", "S")


def variable_token(n: int) -> str:
    return f"[V{n}]"


def is_variable(token: str) -> bool:
    return _VARIABLE_RE.match(token) is not None


@dataclass(frozen=True)
class GeneralizedChain:
    """Templates with [Vn] variable tokens plus their surface bindings."""

    template_f1: tuple[str, ...]
    template_f2: tuple[str, ...]
    template_h: tuple[str, ...]
    bindings: tuple[tuple[str, str], ...]  # (variable token, first surface form)

    @property
    def templates(self) -> tuple[tuple[str, ...], ...]:
        return (self.template_f1, self.template_f2, self.template_h)

    @property
    def variable_count(self) -> int:
        return len(self.bindings)

    def substitute(self) -> tuple[str, str, str]:
        """Bindings substituted back into the templates."""
        table = dict(self.bindings)
        return tuple(
            " ".join(table.get(tok, tok) for tok in template)
            for template in self.templates
        )


def _noun_runs(tags: tuple[str, ...]) -> list[tuple[int, int]]:
    runs = []
    i = 0
    while i < len(tags):
        if tags[i] == NOUN:
            j = i
            while j < len(tags) and tags[j] == NOUN:
                j += 1
            runs.append((i, j))
            i = j
        else:
            i += 1
    return runs


def _as_tagged(sentence, tagger: Tagger) -> PosTaggedSentence:
    if isinstance(sentence, PosTaggedSentence):
        return sentence
    return tagger.tag(sentence)


def _find_entities(sents: list[PosTaggedSentence]):
    """Shared noun phrases as (core stems, extended spans), claim-resolved."""
    stems = [tuple(stem(tok) for tok in s.tokens) for s in sents]

    occurrences: dict[tuple[str, ...], list[tuple[int, int, int]]] = {}
    for si, sent in enumerate(sents):
        for a, b in _noun_runs(sent.tags):
            for i in range(a, b):
                for j in range(i + 1, b + 1):
                    occurrences.setdefault(stems[si][i:j], []).append((si, i, j))

    shared = {
        core: spans
        for core, spans in occurrences.items()
        if len({si for si, _, _ in spans}) >= 2
    }
    # Longest head sequence first; ties by earliest occurrence.
    priority = sorted(shared, key=lambda core: (-len(core), min(shared[core])))

    claimed = [[False] * len(s.tokens) for s in sents]
    entities: list[tuple[tuple[str, ...], list[tuple[int, int, int]]]] = []
    for core in priority:
        chosen: list[tuple[int, int, int]] = []
        for si, i, j in sorted(shared[core]):
            if any(claimed[si][i:j]):
                continue
            if any(csi == si and i < ce and cs < j for csi, cs, ce in chosen):
                continue
            chosen.append((si, i, j))
        # The phrase must still repeat across sentences once overlaps with
        # longer phrases are excluded; otherwise it is not an entity here.
        if len({si for si, _, _ in chosen}) < 2:
            continue
        for si, i, j in chosen:
            for t in range(i, j):
                claimed[si][t] = True
        entities.append((core, chosen))

    # Fold in preceding determiners/adjectives where they match (by stem)
    # across every occurrence of the entity.
    extended: list[list[tuple[int, int, int]]] = []
    for core, spans in entities:
        mod_seqs = []  # per occurrence, stems right-to-left: ADJ*, then DET?
        mod_positions = []
        for si, i, j in spans:
            positions = []
            p = i - 1
            while p >= 0 and sents[si].tags[p] == ADJ and not claimed[si][p]:
                positions.append(p)
                p -= 1
            if p >= 0 and sents[si].tags[p] == DET and not claimed[si][p]:
                positions.append(p)
            mod_positions.append(positions)
            mod_seqs.append([stems[si][p] for p in positions])
        depth = 0
        while all(len(seq) > depth for seq in mod_seqs) and len(
            {seq[depth] for seq in mod_seqs}
        ) == 1:
            depth += 1
        new_spans = []
        for (si, i, j), positions in zip(spans, mod_positions):
            start = i - depth
            for t in range(start, i):
                claimed[si][t] = True
            new_spans.append((si, start, j))
        extended.append(new_spans)

    return sorted(extended, key=min)


def generalize_sentences(
    f1, f2, h, tagger: Tagger | None = None
) -> GeneralizedChain:
    """Delexicalize a (fact1, fact2, hypothesis) sentence triple."""
    tagger = tagger or default_tagger()
    sents = [_as_tagged(s, tagger) for s in (f1, f2, h)]

    span_map: dict[tuple[int, int], tuple[int, str]] = {}
    bindings: list[tuple[str, str]] = []
    for n, spans in enumerate(_find_entities(sents), start=1):
        var = variable_token(n)
        first_si, first_a, first_b = min(spans)
        bindings.append((var, " ".join(sents[first_si].tokens[first_a:first_b])))
        for si, a, b in spans:
            span_map[(si, a)] = (b, var)

    templates = []
    for si, sent in enumerate(sents):
        out: list[str] = []
        i = 0
        while i < len(sent.tokens):
            hit = span_map.get((si, i))
            if hit is not None:
                end, var = hit
                out.append(var)
                i = end
            else:
                out.append(sent.tokens[i])
                i += 1
        templates.append(tuple(out))

    return GeneralizedChain(
        template_f1=templates[0],
        template_f2=templates[1],
        template_h=templates[2],
        bindings=tuple(bindings),
    )


def generalize(chain, tagger: Tagger | None = None) -> GeneralizedChain:
    """Delexicalize a ChainCandidate (its two facts and hypothesis)."""
    return generalize_sentences(chain.f1.text, chain.f2.text, chain.hypothesis, tagger)


def detect_shared_entities(f1, f2, h, tagger: Tagger | None = None) -> list[str]:
    """Surface forms of the shared noun phrases, in variable order."""
    return [surface for _, surface in generalize_sentences(f1, f2, h, tagger).bindings]


def _canonical_names(grc: GeneralizedChain) -> dict[str, str]:
    order: list[str] = []
    for token in grc.template_f1 + grc.template_f2 + grc.template_h:
        if is_variable(token) and token not in order:
            order.append(token)
    names = {}
    for i, var in enumerate(order):
        names[var] = PATTERN_ALPHABET[i] if i < len(PATTERN_ALPHABET) else f"X{i + 1}"
    return names


def canonical_views(grc: GeneralizedChain) -> tuple[str, str, str, dict[str, str]]:
    """Templates rendered with the canonical variable alphabet, plus bindings.

    This is the stable external form: identical for alpha-equivalent chains.
    """
    names = _canonical_names(grc)
    rendered = tuple(
        " ".join(names.get(tok, tok) for tok in template) for template in grc.templates
    )
    bound = {names[var]: surface for var, surface in grc.bindings}
    return rendered[0], rendered[1], rendered[2], bound


def canonical_pattern(grc: GeneralizedChain) -> str:
    """Render ``T1 AND T2 -> TH`` with X, Y, Z... variables."""
    t1, t2, th, _ = canonical_views(grc)
    return f"{t1} AND {t2} -> {th}"
