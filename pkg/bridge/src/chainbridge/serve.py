"""Serving a trained model over the chain-scoring wire protocol.

Protocol version 1, line-delimited JSON over stdio (or the same bodies
over HTTP POST):

* handshake — first request ``{"protocol": 1, "representation": ...}``
  is answered with ``{"protocol": 1}``;
* scoring — ``{"id", "f1", "f2", "h"}`` in, ``{"id", "score"}`` out,
  with the score always in [0, 1] (a sigmoid).

The representation named in the handshake does not change serving
behavior: the tokenizer treats surface sentences and delexicalized
templates uniformly (variable letters always map to reserved tokens),
so one checkpoint serves whichever representation it was trained on.

A malformed request never kills the stream — it is answered with an
``error`` response carrying the request id when one could be read.
Identical requests within a session always get identical scores; the
model is held in eval mode with gradients disabled.
"""

from __future__ import annotations

import json
import sys
from http.server import BaseHTTPRequestHandler, HTTPServer

from chainbridge.checkpoint import ChainScorer

PROTOCOL_VERSION = 1


def hello_response(request: object) -> dict:
    if not isinstance(request, dict) or request.get("protocol") != PROTOCOL_VERSION:
        return {"error": f"unsupported handshake: {request!r}"}
    return {"protocol": PROTOCOL_VERSION, "scorer": "chainbridge"}


def _request_texts(body: object) -> tuple[str, str, str]:
    """Extract (f1, f2, h) or raise ValueError describing the problem."""
    if not isinstance(body, dict):
        raise ValueError("request must be an object")
    missing = [key for key in ("f1", "f2", "h") if not isinstance(body.get(key), str)]
    if missing:
        raise ValueError(f"request needs string field(s) {', '.join(missing)}")
    return body["f1"], body["f2"], body["h"]


def score_response(scorer: ChainScorer, body: object) -> dict:
    request_id = body.get("id") if isinstance(body, dict) else None
    if not isinstance(body, dict) or "id" not in body:
        return {"id": None, "error": "request must be an object with an id"}
    try:
        f1, f2, h = _request_texts(body)
    except ValueError as exc:
        return {"id": request_id, "error": str(exc)}
    return {"id": request_id, "score": scorer.score(f1, f2, h)}


def serve_stdio(scorer: ChainScorer) -> None:
    first = sys.stdin.readline()
    if not first:
        return
    try:
        hello = json.loads(first)
    except json.JSONDecodeError:
        hello = None
    print(json.dumps(hello_response(hello)), flush=True)

    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            body = json.loads(line)
        except json.JSONDecodeError:
            print(json.dumps({"id": None, "error": "invalid JSON"}), flush=True)
            continue
        print(json.dumps(score_response(scorer, body)), flush=True)


def score_array(scorer: ChainScorer, payload: list) -> list[dict]:
    """Score a batch of request bodies, preserving positions.

    Valid requests are scored in one model batch; invalid ones get
    error responses in place.
    """
    responses: list[dict | None] = [None] * len(payload)
    batch: list[tuple[str, str, str]] = []
    batch_slots: list[tuple[int, object]] = []
    for i, body in enumerate(payload):
        if not isinstance(body, dict) or "id" not in body:
            responses[i] = {"id": None, "error": "request must be an object with an id"}
            continue
        try:
            batch.append(_request_texts(body))
        except ValueError as exc:
            responses[i] = {"id": body.get("id"), "error": str(exc)}
            continue
        batch_slots.append((i, body["id"]))
    scores = scorer.score_batch(batch)
    for (slot, request_id), score in zip(batch_slots, scores):
        responses[slot] = {"id": request_id, "score": score}
    return [r for r in responses if r is not None]


def serve_http(scorer: ChainScorer, port: int) -> None:
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args) -> None:
            pass

        def _reply(self, status: int, payload: object) -> None:
            raw = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(raw)))
            self.end_headers()
            self.wfile.write(raw)

        def do_POST(self) -> None:
            length = int(self.headers.get("Content-Length", "0"))
            try:
                payload = json.loads(self.rfile.read(length).decode("utf-8"))
            except json.JSONDecodeError:
                self._reply(400, {"error": "invalid JSON"})
                return
            if self.path == "/hello":
                self._reply(200, hello_response(payload))
            elif self.path == "/score":
                if not isinstance(payload, list):
                    self._reply(400, {"error": "score request must be an array"})
                    return
                self._reply(200, score_array(scorer, payload))
            else:
                self._reply(404, {"error": f"unknown path {self.path}"})

    server = HTTPServer(("127.0.0.1", port), Handler)
    print(f"listening on {server.server_address[1]}", file=sys.stderr, flush=True)
    server.serve_forever()
