"""Operator command line.

    taskboard simulate <trace>... (--server HOST:PORT | --offline) [--realtime]
    taskboard serve [--listen-telemetry H:P] [--listen-http H:P] [--log-path F]
    taskboard report (--server URL | --log F) [--format text|csv]
    taskboard export (--server URL | --log F) [--board ID]

Diagnostics go to stderr; data (wire lines, tables, CSV) to stdout or --out.
Exit codes from simulate: 0 all trials completed, 2 some trial expired,
1 error.  The flags --listen-telemetry, --listen-http and --log-path fall
back to TASKBOARD_LISTEN_TELEMETRY, TASKBOARD_LISTEN_HTTP and
TASKBOARD_LOG_PATH.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import socket
import sys
import threading
import time
from pathlib import Path
from typing import Optional

from taskboard import analytics, device
from taskboard.analytics import averages_and_deltas, leaderboard, percentage_breakdown
from taskboard.device import BoardSim, DeviceConfig, TraceError, load_trace, run_realtime
from taskboard.protocol import TrialPhase
from taskboard.server import AggregationServer
from taskboard.store import Store
from taskboard.wire import decode_record, trial_from_record

DEFAULT_TELEMETRY_ADDR = "127.0.0.1:9444"
DEFAULT_HTTP_ADDR = "127.0.0.1:9445"
DEFAULT_LOG_PATH = "telemetry.log"


class CliError(Exception):
    pass


def _parse_hostport(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise CliError(f"expected HOST:PORT, got {text!r}")
    return (host or "127.0.0.1", int(port))


def _connect_with_retry(address: tuple[str, int], attempts: int = 5) -> socket.socket:
    delay = 0.2
    last: Optional[OSError] = None
    for _ in range(attempts):
        try:
            return socket.create_connection(address, timeout=10)
        except OSError as exc:
            last = exc
            time.sleep(delay)
            delay = min(delay * 2, 2.0)
    raise CliError(f"cannot reach server at {address[0]}:{address[1]}: {last}")


def _write_out(out: Optional[str], data: bytes) -> None:
    if out is None or out == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        Path(out).write_bytes(data)


# -- simulate -------------------------------------------------------------------


def _run_board(sim: BoardSim, realtime: bool) -> None:
    if not realtime:
        device.run_to_end(sim)
        return
    if sim.trace:
        run_realtime(sim, max(sim.trace[-1].t_ms, sim.now_ms))
    if sim.trial.phase is TrialPhase.RUNNING:
        run_realtime(sim, sim.trial.start_device_ms + sim.trial.expiry_ms)
    elif sim.trial.phase is TrialPhase.ARMED:
        run_realtime(sim, sim.now_ms + sim.trial.expiry_ms)


def cmd_simulate(args) -> int:
    endpoints = list(args.endpoint or [])
    if endpoints and len(endpoints) != len(args.traces):
        raise CliError("--endpoint must be given once per trace")
    if not endpoints:
        endpoints = [Path(t).stem for t in args.traces]

    saw_error = False
    saw_expired = False
    collected: list[bytes] = []
    for index, (trace_path, endpoint_id) in enumerate(zip(args.traces, endpoints)):
        try:
            trace = load_trace(trace_path)
        except FileNotFoundError:
            print(f"{trace_path}: no such trace file", file=sys.stderr)
            saw_error = True
            continue
        except TraceError as exc:
            print(f"{trace_path}: {exc}", file=sys.stderr)
            saw_error = True
            continue

        config = DeviceConfig(endpoint_id=endpoint_id, rng_seed=args.seed + index)
        sock = None
        sink = None
        epoch_base = device.DEFAULT_EPOCH_BASE_MS
        try:
            if args.server is not None:
                sock = _connect_with_retry(_parse_hostport(args.server))
                sink = sock.sendall
                epoch_base = int(time.time() * 1000)
            with BoardSim(config, trace, sink=sink, epoch_base_ms=epoch_base) as sim:
                _run_board(sim, args.realtime)
                if args.offline:
                    collected.extend(sim.sent)
                trial = sim.trial
                print(
                    device.render_display(trial, sim.now_ms, endpoint_id).text(),
                    file=sys.stderr,
                )
                for entry in sim.log:
                    print(f"{endpoint_id}: {entry}", file=sys.stderr)
        finally:
            if sock is not None:
                sock.close()
        if trial.phase is TrialPhase.EXPIRED:
            saw_expired = True
        elif trial.phase is not TrialPhase.COMPLETED:
            # trace never finished a trial; count it as an operator error
            print(f"{endpoint_id}: trial ended {trial.phase.value}", file=sys.stderr)
            saw_error = True
    if args.offline:
        _write_out(args.out, b"".join(collected))
    if saw_error:
        return 1
    return 2 if saw_expired else 0


# -- serve ----------------------------------------------------------------------


def cmd_serve(args) -> int:
    telemetry_addr = _parse_hostport(args.listen_telemetry)
    http_addr = _parse_hostport(args.listen_http)
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda signum, frame: stop.set())
    signal.signal(signal.SIGTERM, lambda signum, frame: stop.set())
    store = Store.recover_from_log(args.log_path)
    try:
        for path in args.ingest_file or []:
            with open(path, "rb") as fh:
                for line in fh:
                    store.ingest_line(line)
        with AggregationServer(store, telemetry_addr, http_addr) as server:
            print(
                "listening telemetry=%s:%d http=%s:%d log=%s"
                % (*server.telemetry_address, *server.http_address, args.log_path),
                file=sys.stderr,
                flush=True,
            )
            stop.wait()
            print("shutting down", file=sys.stderr)
    finally:
        store.close()
    return 0


# -- report / export -------------------------------------------------------------


def _http_get(base_url: str, path: str) -> bytes:
    import urllib.request

    url = base_url.rstrip("/") + path
    with urllib.request.urlopen(url, timeout=10) as resp:
        return resp.read()


def _trials_from_server(base_url: str) -> list[tuple[str, object]]:
    boards = json.loads(_http_get(base_url, "/boards"))["boards"]
    trials = []
    for board in boards:
        endpoint_id = board["endpoint_id"]
        listing = json.loads(_http_get(base_url, f"/boards/{endpoint_id}/trials"))
        for view in listing["trials"]:
            rec = decode_record(json.dumps(view["record"]))
            trials.append((endpoint_id, trial_from_record(rec)))
    return trials


def _trials_from_log(log_path: str) -> list[tuple[str, object]]:
    with Store.recover_from_log(log_path) as store:
        trials = []
        for ledger in store.boards():
            for rec in ledger.trials.values():
                trials.append((ledger.endpoint_id, trial_from_record(rec)))
        return trials


def _parse_reference_totals(pairs) -> dict[str, str]:
    refs = {}
    for pair in pairs or []:
        label, sep, value = pair.partition("=")
        if not sep or not label or not value:
            raise CliError(f"expected LABEL=SECONDS, got {pair!r}")
        refs[label] = value
    return refs


def cmd_report(args) -> int:
    if args.server:
        trials = _trials_from_server(args.server)
    else:
        trials = _trials_from_log(args.log)
    refs = _parse_reference_totals(args.reference_total)
    # a subject labeled "human" is the baseline, not a competitor: it is
    # shown unranked and feeds the delta rows
    competing = [(label, t) for label, t in trials if label.lower() != "human"]
    baseline = [(label, t) for label, t in trials if label.lower() == "human"]
    rows = leaderboard(competing, reference_total_s=refs)
    reference_rows = leaderboard(baseline, reference_total_s=refs) if baseline else []
    completed = [row for row in rows if row.completed]
    breakdowns = [percentage_breakdown(row) for row in completed]
    human_row = next((r for r in reference_rows if r.completed), None)
    summaries = (
        averages_and_deltas(completed, human_row)
        if human_row is not None and completed
        else []
    )
    if args.format == "csv":
        output = analytics.render_report_csv(rows, breakdowns, summaries, reference_rows)
    else:
        output = (
            "LEADERBOARD\n"
            + analytics.render_leaderboard_text(rows, reference_rows)
            + "\nTASK SHARE OF TRIAL TIME\n"
            + analytics.render_breakdown_text(breakdowns)
            + "\nSUMMARY\n"
            + analytics.render_summary_text(summaries)
        )
    _write_out(args.out, output.encode("utf-8"))
    return 0


def cmd_export(args) -> int:
    if args.server:
        path = "/export.csv" if args.board is None else f"/export.csv?board={args.board}"
        data = _http_get(args.server, path)
    else:
        with Store.recover_from_log(args.log) as store:
            data = store.export_csv(args.board)
    _write_out(args.out, data)
    return 0


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskboard",
        description="Task board trial simulator, telemetry server and reporting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run scripted board trials")
    sim.add_argument("traces", nargs="+", help="trace file(s), one per board")
    sim.add_argument(
        "--endpoint",
        action="append",
        help="endpoint id per trace (default: trace file stem)",
    )
    sim.add_argument("--seed", type=int, default=0, help="base RNG seed (board i uses seed+i)")
    target = sim.add_mutually_exclusive_group(required=True)
    target.add_argument("--server", help="stream to a telemetry listener at HOST:PORT")
    target.add_argument(
        "--offline",
        action="store_true",
        help="write the wire lines to --out (or stdout) instead of a server",
    )
    sim.add_argument("--realtime", action="store_true", help="pace virtual time to wall clock")
    sim.add_argument("--out", help="output file for --offline (default stdout)")
    sim.set_defaults(func=cmd_simulate)

    srv = sub.add_parser("serve", help="run the aggregation server")
    srv.add_argument(
        "--listen-telemetry",
        default=os.environ.get("TASKBOARD_LISTEN_TELEMETRY", DEFAULT_TELEMETRY_ADDR),
        help=f"telemetry HOST:PORT (default {DEFAULT_TELEMETRY_ADDR})",
    )
    srv.add_argument(
        "--listen-http",
        default=os.environ.get("TASKBOARD_LISTEN_HTTP", DEFAULT_HTTP_ADDR),
        help=f"query API HOST:PORT (default {DEFAULT_HTTP_ADDR})",
    )
    srv.add_argument(
        "--log-path",
        default=os.environ.get("TASKBOARD_LOG_PATH", DEFAULT_LOG_PATH),
        help=f"append-only log file (default {DEFAULT_LOG_PATH})",
    )
    srv.add_argument(
        "--ingest-file",
        action="append",
        help="wire-lines file to ingest before serving (repeatable)",
    )
    srv.set_defaults(func=cmd_serve)

    rep = sub.add_parser("report", help="leaderboard, breakdown and summary tables")
    rep_source = rep.add_mutually_exclusive_group(required=True)
    rep_source.add_argument("--server", help="server base URL, e.g. http://127.0.0.1:9445")
    rep_source.add_argument("--log", help="server log file to replay locally")
    rep.add_argument("--format", choices=("text", "csv"), default="text")
    rep.add_argument(
        "--reference-total",
        action="append",
        metavar="LABEL=SECONDS",
        help="officially reported total overriding a subject's computed one (repeatable)",
    )
    rep.add_argument("--out", help="output file (default stdout)")
    rep.set_defaults(func=cmd_report)

    exp = sub.add_parser("export", help="per-trial CSV export")
    exp_source = exp.add_mutually_exclusive_group(required=True)
    exp_source.add_argument("--server", help="server base URL")
    exp_source.add_argument("--log", help="server log file to replay locally")
    exp.add_argument("--board", help="restrict to one endpoint id")
    exp.add_argument("--out", help="output file (default stdout)")
    exp.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except device.DuplicateEndpoint as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
