"""Local trace-collection service.

Three endpoints, all JSON: GET /health, GET /puzzles (target silhouettes the
labeler offers to the human, as 28x28 row-strings plus names), POST /traces
(a TraceDocument; schema errors and semantic violations both come back as a
400 with the itemized list, valid documents are persisted atomically and
acknowledged with 201). Uploads may arrive concurrently; the store hands out
file names under a lock and each document is written temp-then-rename.
"""

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .geometry import generate_trace, render_board
from .traceio import (TraceFormatError, document_violations, from_json,
                      load_document, save_document, solve_from_document)


class TraceStore:
    """Directory of trace documents with race-free unique naming."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._counter = 0

    def save(self, doc):
        slug = re.sub(r"[^a-z0-9]+", "-",
                      doc.metadata["puzzle_name"].lower()).strip("-") or "trace"
        with self._lock:
            while True:
                self._counter += 1
                path = self.directory / f"{doc.kind}_{slug}_{self._counter:04d}.json"
                if not path.exists():
                    break
            return save_document(doc, path)


def default_puzzles(seed=0, count=8):
    """Seeded target silhouettes: final frames of generated solves."""
    puzzles = []
    for i in range(count):
        trace = generate_trace(seed + i)
        image = render_board(trace.steps[-1])
        puzzles.append({"name": f"{trace.puzzle_name} {i:02d}",
                        "rows": image.to_rows()})
    return puzzles


def puzzles_from_directory(directory):
    """Silhouettes recovered from stored tangram documents, one per name."""
    puzzles = []
    seen = set()
    for path in sorted(Path(directory).glob("*.json")):
        try:
            doc = load_document(path)
            if doc.kind != "tangram":
                continue
            trace = solve_from_document(doc)
        except (TraceFormatError, OSError):
            continue
        name = doc.metadata["puzzle_name"]
        if name in seen:
            continue
        seen.add(name)
        puzzles.append({"name": name,
                        "rows": render_board(trace.steps[-1]).to_rows()})
    return puzzles


class _Handler(BaseHTTPRequestHandler):
    # store and puzzles are injected by build_server via a subclass

    def _reply(self, status, payload):
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path == "/health":
            self._reply(200, {"status": "ok"})
        elif self.path == "/puzzles":
            self._reply(200, {"puzzles": self.puzzles})
        else:
            self._reply(404, {"error": f"no such endpoint: {self.path}"})

    def do_POST(self):
        if self.path != "/traces":
            self._reply(404, {"error": f"no such endpoint: {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", ""))
        except ValueError:
            self._reply(400, {"error": "missing or bad Content-Length"})
            return
        raw = self.rfile.read(length)
        try:
            doc = from_json(raw.decode("utf-8"))
        except UnicodeDecodeError:
            self._reply(400, {"error": "body is not UTF-8"})
            return
        except TraceFormatError as exc:
            self._reply(400, {"error": str(exc)})
            return
        violations = document_violations(doc)
        if violations:
            self._reply(400, {"violations": violations})
            return
        path = self.store.save(doc)
        self._reply(201, {"stored": path.name})

    def do_OPTIONS(self):
        # lets the labeler, served from a file or another port, upload here
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()

    def log_message(self, fmt, *args):
        pass  # quiet by default; the CLI announces the port once


def build_server(store, puzzles, host="127.0.0.1", port=0):
    """A ready ThreadingHTTPServer; port 0 picks a free ephemeral port."""
    handler = type("BoundHandler", (_Handler,),
                   {"store": store, "puzzles": list(puzzles)})
    return ThreadingHTTPServer((host, port), handler)
