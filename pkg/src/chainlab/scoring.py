"""Chain scoring: the retrieval baseline and external scorer clients.

A scorer assigns each chain a validity score used for ranking.  The built-in
baseline reuses the retrieval scores; external scorers run behind a small
line-delimited JSON protocol over a subprocess pipe or HTTP:

* handshake — the client sends ``{"protocol": 1, "representation": ...}`` and
  expects a response carrying ``{"protocol": 1}``;
* scoring — each request is ``{"id", "f1", "f2", "h"}`` and each response
  ``{"id", "score"}`` with the score in [0, 1]; responses may arrive in any
  order within a batch.

With ``representation="grc"`` the request fields carry the delexicalized
templates instead of the original sentences, so alpha-equivalent chains put
identical bytes on the wire.  A failing batch is retried once (subprocess
scorers are restarted first); the second failure raises
:class:`ProtocolError`.
"""

from __future__ import annotations

import json
import logging
import queue
import shlex
import subprocess
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .grc import canonical_views, generalize
from .metrics import RankedExplanations
from .retrieval import ChainCandidate

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
REPRESENTATIONS = ("surface", "grc")
SCORER_KINDS = ("retrieval", "external-subprocess", "external-http")


class ProtocolError(RuntimeError):
    """An external scorer violated the wire protocol."""


@dataclass(frozen=True)
class ScoreRecord:
    """One scorer's score for one chain."""

    chain_id: str
    question_id: str
    score: float
    scorer_name: str


@dataclass(frozen=True)
class IdentifiedChain:
    """A chain candidate addressed by stable chain and question ids."""

    chain_id: str
    question_id: str
    chain: ChainCandidate

    def __post_init__(self) -> None:
        if not self.chain_id:
            raise ValueError("chain_id must be non-empty")
        if not self.question_id:
            raise ValueError("question_id must be non-empty")


@dataclass(frozen=True)
class ScorerSpec:
    """How to reach a scorer and what representation to send it."""

    kind: str
    command: tuple[str, ...] = ()
    endpoint: str = ""
    timeout: float = 30.0
    batch_size: int = 32
    representation: str = "surface"

    def __post_init__(self) -> None:
        if self.kind not in SCORER_KINDS:
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.representation not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.kind == "external-subprocess" and not self.command:
            raise ValueError("subprocess scorer needs a command")
        if self.kind == "external-http" and not self.endpoint:
            raise ValueError("http scorer needs an endpoint")

    @classmethod
    def parse(
        cls,
        text: str,
        *,
        representation: str = "surface",
        timeout: float = 30.0,
        batch_size: int = 32,
    ) -> "ScorerSpec":
        """Parse a scorer address: ``retrieval``, ``cmd:<argv>`` or ``http:<url>``."""
        common = dict(representation=representation, timeout=timeout, batch_size=batch_size)
        if text == "retrieval":
            return cls(kind="retrieval", **common)
        if text.startswith("cmd:"):
            argv = tuple(shlex.split(text[len("cmd:"):]))
            if not argv:
                raise ValueError("cmd: scorer needs a command line")
            return cls(kind="external-subprocess", command=argv, **common)
        if text.startswith(("http://", "https://")):
            return cls(kind="external-http", endpoint=text, **common)
        if text.startswith("http:"):
            return cls(kind="external-http", endpoint=text[len("http:"):], **common)
        raise ValueError(f"unrecognized scorer address {text!r}")

    @property
    def name(self) -> str:
        if self.kind == "retrieval":
            return "retrieval"
        if self.kind == "external-subprocess":
            return f"cmd:{self.command[0]}"
        return f"http:{self.endpoint}"


def score_retrieval(chain: ChainCandidate) -> float:
    """The retrieval-baseline validity score: the chain's combined score."""
    return chain.combined_score


def wire_body(chain_id: str, chain: ChainCandidate, representation: str) -> dict:
    """Build the scoring request body for one chain."""
    if representation == "surface":
        return {
            "id": chain_id,
            "f1": chain.f1.text,
            "f2": chain.f2.text,
            "h": chain.hypothesis,
        }
    if representation == "grc":
        t1, t2, th, _ = canonical_views(generalize(chain))
        return {"id": chain_id, "f1": t1, "f2": t2, "h": th}
    raise ValueError(f"unknown representation {representation!r}")


def hello_body(representation: str) -> dict:
    return {"protocol": PROTOCOL_VERSION, "representation": representation}


def _check_hello_response(obj: object) -> None:
    if not isinstance(obj, Mapping) or obj.get("protocol") != PROTOCOL_VERSION:
        raise ProtocolError(f"bad handshake response: {obj!r}")


def _parse_batch_responses(lines_or_objs: Iterable[object], expected_ids: set[str]) -> dict[str, float]:
    """Match response objects to request ids; any deviation is a protocol error."""
    scores: dict[str, float] = {}
    for obj in lines_or_objs:
        if not isinstance(obj, Mapping):
            raise ProtocolError(f"response is not an object: {obj!r}")
        if "error" in obj:
            raise ProtocolError(f"scorer reported an error: {obj['error']!r} (id {obj.get('id')!r})")
        chain_id = obj.get("id")
        if chain_id not in expected_ids:
            raise ProtocolError(f"response for unknown id {chain_id!r}")
        if chain_id in scores:
            raise ProtocolError(f"duplicate response for id {chain_id!r}")
        score = obj.get("score")
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise ProtocolError(f"non-numeric score for id {chain_id!r}: {score!r}")
        scores[chain_id] = float(score)
    missing = expected_ids - set(scores)
    if missing:
        raise ProtocolError(f"missing responses for ids {sorted(missing)[:5]}")
    return scores


class _LineReader:
    """Reads lines from a pipe on a daemon thread so reads can time out."""

    _EOF = object()

    def __init__(self, stream):
        self._queue: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._pump, args=(stream,), daemon=True)
        self._thread.start()

    def _pump(self, stream) -> None:
        try:
            for line in stream:
                self._queue.put(line)
        except ValueError:
            pass  # stream closed mid-read
        self._queue.put(self._EOF)

    def readline(self, timeout: float) -> str:
        try:
            item = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError("timed out waiting for scorer output")
        if item is self._EOF:
            raise ProtocolError("scorer closed its output stream")
        return item


class SubprocessScorer:
    """Client for a scorer speaking the line protocol over stdin/stdout."""

    def __init__(self, spec: ScorerSpec):
        if spec.kind != "external-subprocess":
            raise ValueError("spec is not a subprocess scorer")
        self.spec = spec
        self._lock = threading.Lock()
        self._process: subprocess.Popen | None = None
        self._reader: _LineReader | None = None

    def _start(self) -> None:
        self._process = subprocess.Popen(
            list(self.spec.command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._reader = _LineReader(self._process.stdout)
        self._send(hello_body(self.spec.representation))
        _check_hello_response(self._read())

    def _send(self, obj: Mapping) -> None:
        assert self._process is not None and self._process.stdin is not None
        self._process.stdin.write(json.dumps(obj) + "\n")
        self._process.stdin.flush()

    def _read(self) -> object:
        assert self._reader is not None
        line = self._reader.readline(self.spec.timeout)
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"scorer emitted invalid JSON: {line!r}") from exc

    def close(self) -> None:
        process, self._process, self._reader = self._process, None, None
        if process is None:
            return
        try:
            if process.stdin is not None:
                process.stdin.close()
            process.terminate()
            process.wait(timeout=5)
        except Exception:
            process.kill()

    def restart(self) -> None:
        self.close()

    def _score_batch_once(self, bodies: Sequence[Mapping]) -> dict[str, float]:
        if self._process is None:
            self._start()
        for body in bodies:
            self._send(body)
        responses = [self._read() for _ in bodies]
        return _parse_batch_responses(responses, {str(b["id"]) for b in bodies})

    def score_batch(self, bodies: Sequence[Mapping]) -> dict[str, float]:
        with self._lock:
            try:
                return self._score_batch_once(bodies)
            except (ProtocolError, TimeoutError, OSError) as first:
                log.warning("scorer batch failed (%s); restarting and retrying once", first)
                self.restart()
                try:
                    return self._score_batch_once(bodies)
                except (ProtocolError, TimeoutError, OSError) as second:
                    raise ProtocolError(
                        f"batch failed twice: {second} (first failure: {first})"
                    ) from second

    def __enter__(self) -> "SubprocessScorer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


class HttpScorer:
    """Client for a scorer speaking the same bodies over HTTP POST."""

    def __init__(self, spec: ScorerSpec):
        if spec.kind != "external-http":
            raise ValueError("spec is not an http scorer")
        self.spec = spec
        self._base = spec.endpoint.rstrip("/")
        self._greeted = False

    def _post(self, path: str, payload: object) -> object:
        request = urllib.request.Request(
            self._base + path,
            data=json.dumps(payload).encode("utf-8"),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.spec.timeout) as response:
                raw = response.read().decode("utf-8")
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise ProtocolError(f"scorer endpoint unreachable: {exc}") from exc
        try:
            return json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"scorer emitted invalid JSON: {raw!r}") from exc

    def _hello(self) -> None:
        _check_hello_response(self._post("/hello", hello_body(self.spec.representation)))
        self._greeted = True

    def _score_batch_once(self, bodies: Sequence[Mapping]) -> dict[str, float]:
        if not self._greeted:
            self._hello()
        responses = self._post("/score", list(bodies))
        if not isinstance(responses, list):
            raise ProtocolError(f"score response is not an array: {responses!r}")
        return _parse_batch_responses(responses, {str(b["id"]) for b in bodies})

    def score_batch(self, bodies: Sequence[Mapping]) -> dict[str, float]:
        try:
            return self._score_batch_once(bodies)
        except ProtocolError as first:
            log.warning("scorer batch failed (%s); retrying once", first)
            self._greeted = False
            try:
                return self._score_batch_once(bodies)
            except ProtocolError as second:
                raise ProtocolError(
                    f"batch failed twice: {second} (first failure: {first})"
                ) from second

    def close(self) -> None:
        pass

    def __enter__(self) -> "HttpScorer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def _batches(items: Sequence, size: int) -> Iterable[Sequence]:
    for start in range(0, len(items), size):
        yield items[start : start + size]


def score_external(spec: ScorerSpec, chains: Sequence[IdentifiedChain]) -> list[ScoreRecord]:
    """Score chains with an external scorer; scores must lie in [0, 1].

    Records come back in input order.  Each failing batch is retried once
    before raising; a score outside [0, 1] raises immediately, naming the
    offending chain.
    """
    if spec.kind == "retrieval":
        return score_with_retrieval(chains)
    scorer = SubprocessScorer(spec) if spec.kind == "external-subprocess" else HttpScorer(spec)
    with scorer:
        return _score_with_client(spec, scorer, chains)


def _score_with_client(
    spec: ScorerSpec, scorer, chains: Sequence[IdentifiedChain]
) -> list[ScoreRecord]:
    records: list[ScoreRecord] = []
    for batch in _batches(chains, spec.batch_size):
        bodies = [wire_body(c.chain_id, c.chain, spec.representation) for c in batch]
        scores = scorer.score_batch(bodies)
        for item in batch:
            score = scores[item.chain_id]
            if not 0.0 <= score <= 1.0:
                raise ProtocolError(
                    f"score {score} for chain {item.chain_id} is outside [0, 1]"
                )
            records.append(
                ScoreRecord(
                    chain_id=item.chain_id,
                    question_id=item.question_id,
                    score=score,
                    scorer_name=spec.name,
                )
            )
    return records


def score_with_retrieval(chains: Sequence[IdentifiedChain]) -> list[ScoreRecord]:
    """Score chains with the retrieval baseline (unnormalized)."""
    return [
        ScoreRecord(
            chain_id=c.chain_id,
            question_id=c.question_id,
            score=score_retrieval(c.chain),
            scorer_name="retrieval",
        )
        for c in chains
    ]


def score_chains(spec: ScorerSpec, chains: Sequence[IdentifiedChain]) -> list[ScoreRecord]:
    """Score chains with whatever scorer the spec names."""
    if spec.kind == "retrieval":
        return score_with_retrieval(chains)
    return score_external(spec, chains)


def rank_chains(question_id: str, records: Iterable[ScoreRecord]) -> tuple[ScoreRecord, ...]:
    """Order one question's records by descending score, ties by chain id.

    Positions are implicit: index i holds rank i+1.
    """
    mine = [r for r in records if r.question_id == question_id]
    if not mine:
        raise ValueError(f"no score records for question {question_id!r}")
    return tuple(sorted(mine, key=lambda r: (-r.score, r.chain_id)))


def ranked_explanations(
    question_id: str,
    records: Iterable[ScoreRecord],
    labels: Mapping[str, int],
) -> RankedExplanations:
    """Join ranked score records with gold labels keyed by chain id."""
    ordered = rank_chains(question_id, records)
    try:
        ranked_labels = tuple(int(labels[r.chain_id]) for r in ordered)
    except KeyError as exc:
        raise ValueError(f"no gold label for chain {exc.args[0]!r}") from exc
    return RankedExplanations(
        question_id=question_id,
        labels=ranked_labels,
        chain_ids=tuple(r.chain_id for r in ordered),
    )
