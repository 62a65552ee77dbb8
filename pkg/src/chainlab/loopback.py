"""Reference scorer speaking the scoring wire protocol.

Scores are a deterministic hash of the request text, so runs are exactly
repeatable — useful as a protocol test double and for exercising pipelines
without a trained model.  Run over stdio by default or as an HTTP endpoint
with ``--http``.

Failure injection for client tests: ``--constant`` emits a fixed score
(possibly out of range) and ``--fail-once PATH`` makes the first scoring
request fail unless the flag file at PATH already exists.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from http.server import BaseHTTPRequestHandler, HTTPServer

PROTOCOL_VERSION = 1


def chain_score(body: dict) -> float:
    """Deterministic score in [0, 1) derived from the request text."""
    text = "\x1e".join(str(body.get(key, "")) for key in ("f1", "f2", "h"))
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2.0**64


class _Responder:
    def __init__(self, constant: float | None, fail_once: str | None):
        self.constant = constant
        self.must_fail = False
        if fail_once is not None and not os.path.exists(fail_once):
            with open(fail_once, "w", encoding="utf-8") as handle:
                handle.write("failed\n")
            self.must_fail = True

    def take_failure(self) -> bool:
        """True exactly once for a poisoned instance's first scoring request."""
        if self.must_fail:
            self.must_fail = False
            return True
        return False

    def score(self, body: dict) -> dict:
        if not isinstance(body, dict) or "id" not in body:
            return {"id": None, "error": "request must be an object with an id"}
        value = self.constant if self.constant is not None else chain_score(body)
        return {"id": body["id"], "score": value}


def hello_response(request: object) -> dict:
    if not isinstance(request, dict) or request.get("protocol") != PROTOCOL_VERSION:
        return {"error": f"unsupported handshake: {request!r}"}
    return {"protocol": PROTOCOL_VERSION, "scorer": "loopback"}


def serve_stdio(responder: _Responder) -> None:
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
        if responder.take_failure():
            print("BOOM", flush=True)
            continue
        try:
            body = json.loads(line)
        except json.JSONDecodeError:
            print(json.dumps({"id": None, "error": "invalid JSON"}), flush=True)
            continue
        print(json.dumps(responder.score(body)), flush=True)


def serve_http(responder: _Responder, port: int) -> None:
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
                if responder.take_failure():
                    self._reply(500, {"error": "injected failure"})
                    return
                if not isinstance(payload, list):
                    self._reply(400, {"error": "score request must be an array"})
                    return
                self._reply(200, [responder.score(body) for body in payload])
            else:
                self._reply(404, {"error": f"unknown path {self.path}"})

    server = HTTPServer(("127.0.0.1", port), Handler)
    print(f"listening on {server.server_address[1]}", file=sys.stderr, flush=True)
    server.serve_forever()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="chainlab-loopback", description="deterministic reference chain scorer"
    )
    parser.add_argument(
        "--constant",
        type=float,
        default=None,
        help="emit this fixed score instead of the hash score",
    )
    parser.add_argument(
        "--fail-once",
        metavar="PATH",
        default=None,
        help="fail the first scoring request unless the flag file PATH exists",
    )
    parser.add_argument(
        "--http",
        type=int,
        metavar="PORT",
        default=None,
        help="serve HTTP on 127.0.0.1:PORT instead of stdio",
    )
    args = parser.parse_args(argv)

    responder = _Responder(args.constant, args.fail_once)
    if args.http is not None:
        serve_http(responder, args.http)
    else:
        serve_stdio(responder)
    return 0


if __name__ == "__main__":
    sys.exit(main())
