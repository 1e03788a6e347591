"""Aggregation server: stream-socket telemetry ingest plus an HTTP query API.

The telemetry listener accepts line-delimited wire records from any number
of boards, fire-and-forget.  The HTTP side serves the dashboard and CLI:

    GET  /boards
    GET  /boards/{id}/latest
    GET  /boards/{id}/trials
    GET  /leaderboard
    GET  /export.csv            (optional ?board={id} filter)
    POST /boards/{id}/trials/{trial_id}/validate   {judge, validated, note}

Responses are JSON (CSV for the export) with permissive CORS headers so a
browser dashboard served from anywhere can poll it.
"""

from __future__ import annotations

import json
import logging
import re
import socketserver
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, unquote, urlsplit

from taskboard import analytics
from taskboard.store import Store, UnknownBoard, UnknownTrial
from taskboard.wire import TelemetryRecord, encode_record, trial_from_record

log = logging.getLogger(__name__)

_LATEST_RE = re.compile(r"^/boards/([^/]+)/latest$")
_TRIALS_RE = re.compile(r"^/boards/([^/]+)/trials$")
_VALIDATE_RE = re.compile(r"^/boards/([^/]+)/trials/(\d+)/validate$")


def _record_json(rec: TelemetryRecord) -> dict:
    # the HTTP shape of a record is exactly its wire object
    return json.loads(encode_record(rec))


class _TelemetryServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, store: Store):
        super().__init__(address, _TelemetryHandler)
        self.store = store


class _TelemetryHandler(socketserver.StreamRequestHandler):
    def handle(self):
        for line in self.rfile:
            try:
                self.server.store.ingest_line(line)
            except Exception:
                log.exception("ingest failed for a line from %s", self.client_address)


class _HttpServer(ThreadingHTTPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, store: Store):
        super().__init__(address, _ApiHandler)
        self.store = store


class _ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: _HttpServer

    def log_message(self, fmt, *args):
        log.debug("http %s " + fmt, self.client_address[0], *args)

    # -- plumbing -----------------------------------------------------------

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, payload, status: int = 200) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self._send(status, body, "application/json; charset=utf-8")

    def _send_error_json(self, status: int, message: str) -> None:
        self._send_json({"error": message}, status=status)

    def do_OPTIONS(self):
        self._send(204, b"", "text/plain")

    # -- GET ------------------------------------------------------------------

    def do_GET(self):
        url = urlsplit(self.path)
        path = url.path
        try:
            if path == "/boards":
                return self._send_json(self._boards_payload())
            if path == "/leaderboard":
                return self._send_json(self._leaderboard_payload())
            if path == "/export.csv":
                scope = parse_qs(url.query).get("board", [None])[0]
                body = self.server.store.export_csv(scope)
                return self._send(200, body, "text/csv; charset=utf-8")
            match = _LATEST_RE.match(path)
            if match:
                rec, recv_ms = self.server.store.query_latest(unquote(match.group(1)))
                return self._send_json(
                    {"record": _record_json(rec), "recv_epoch_ms": recv_ms}
                )
            match = _TRIALS_RE.match(path)
            if match:
                views = self.server.store.query_trials(unquote(match.group(1)))
                return self._send_json(
                    {
                        "trials": [
                            {
                                "record": _record_json(v.record),
                                "validation": (
                                    None
                                    if v.validation is None
                                    else {
                                        "validated": v.validation.validated,
                                        "judge": v.validation.judge,
                                        "note": v.validation.note,
                                    }
                                ),
                            }
                            for v in views
                        ]
                    }
                )
        except UnknownBoard as exc:
            return self._send_error_json(404, str(exc))
        self._send_error_json(404, f"no such resource: {path}")

    def _boards_payload(self) -> dict:
        boards = []
        for ledger in self.server.store.boards():
            boards.append(
                {
                    "endpoint_id": ledger.endpoint_id,
                    "last_seq": ledger.last_seq,
                    "trial_count": len(ledger.trials),
                    "recv_epoch_ms": ledger.latest_recv_ms,
                    "latest": _record_json(ledger.latest),
                }
            )
        return {"boards": boards}

    def _leaderboard_payload(self) -> dict:
        trials = []
        for ledger in self.server.store.boards():
            for rec in ledger.trials.values():
                trials.append((ledger.endpoint_id, trial_from_record(rec)))
        rows = []
        for row in analytics.leaderboard(trials):
            durations = {}
            for task, ms in row.durations_ms.items():
                durations[task.value] = None if ms is None else f"{ms / 1000:.2f}"
            rows.append(
                {
                    "label": row.label,
                    "trial_id": row.trial_id,
                    "completed": row.completed,
                    "points": row.points,
                    "durations_s": durations,
                    "total_s": f"{analytics.round2(row.effective_total_s()):.2f}",
                    "best": sorted(row.best),
                }
            )
        return {"rows": rows}

    # -- POST -----------------------------------------------------------------

    def do_POST(self):
        match = _VALIDATE_RE.match(urlsplit(self.path).path)
        if not match:
            return self._send_error_json(404, f"no such resource: {self.path}")
        endpoint_id = unquote(match.group(1))
        trial_id = int(match.group(2))
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length) or b"{}")
        except (ValueError, json.JSONDecodeError):
            return self._send_error_json(400, "body must be JSON")
        if not isinstance(body, dict):
            return self._send_error_json(400, "body must be a JSON object")
        judge = body.get("judge")
        validated = body.get("validated")
        note = body.get("note", "")
        if not isinstance(judge, str) or not judge.strip():
            return self._send_error_json(400, "judge is required")
        if not isinstance(validated, bool):
            return self._send_error_json(400, "validated must be true or false")
        if not isinstance(note, str):
            return self._send_error_json(400, "note must be a string")
        try:
            action = self.server.store.validate_trial(
                endpoint_id, trial_id, judge=judge.strip(), validated=validated, note=note
            )
        except (UnknownBoard, UnknownTrial) as exc:
            return self._send_error_json(404, str(exc))
        self._send_json(
            {
                "endpoint_id": endpoint_id,
                "trial_id": trial_id,
                "validated": action.validated,
                "judge": action.judge,
                "note": action.note,
            }
        )


class AggregationServer:
    """Owns the two listeners and their lifecycle.

    Both sockets bind in the constructor (so ephemeral ports are known
    immediately); start() spins the serve loops up on daemon threads.
    """

    def __init__(
        self,
        store: Store,
        telemetry_addr: tuple[str, int] = ("127.0.0.1", 0),
        http_addr: tuple[str, int] = ("127.0.0.1", 0),
    ):
        self.store = store
        self._telemetry = _TelemetryServer(telemetry_addr, store)
        self._http = _HttpServer(http_addr, store)
        self._threads: list[threading.Thread] = []

    @property
    def telemetry_address(self) -> tuple[str, int]:
        return self._telemetry.server_address[:2]

    @property
    def http_address(self) -> tuple[str, int]:
        return self._http.server_address[:2]

    def start(self) -> None:
        for srv, name in ((self._telemetry, "telemetry"), (self._http, "http")):
            thread = threading.Thread(
                target=srv.serve_forever, name=f"taskboard-{name}", daemon=True
            )
            thread.start()
            self._threads.append(thread)
        log.info(
            "listening: telemetry on %s:%d, http on %s:%d",
            *self.telemetry_address,
            *self.http_address,
        )

    def shutdown(self) -> None:
        self._telemetry.shutdown()
        self._http.shutdown()
        self._telemetry.server_close()
        self._http.server_close()
        for thread in self._threads:
            thread.join(timeout=5)
        self._threads.clear()

    def __enter__(self) -> "AggregationServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()
