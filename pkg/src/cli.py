"""Command line interface: batch runs and a thin client for the networked emulator."""

import argparse
import json
import sys
from typing import Any, List, Optional, Sequence, Tuple

import httpx

from .config import settings
from .harness import load_scenario_file, madrid_scenario, run
from .linksim import DEFAULT_RATE_PROFILE
from .models.documents import encode_document, write_document
from .utils.exceptions import QKDNetworkError
from .utils.logging_config import log_error, log_step


def _api_url() -> str:
    return f"http://{settings.api_host}:{settings.api_port}{settings.api_prefix}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdqkd", description="Software-defined QKD network emulator")
    parser.add_argument("--api", default=None, help="Base URL of a networked emulator")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_run_options(p: argparse.ArgumentParser):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--duration", type=float, default=None, help="Simulated seconds")
        p.add_argument("--metrics", default=None, help="Write the metrics report to this file")
        p.add_argument("--event-log", default=None, help="Write the event log to this file as JSON lines")

    run_cmd = commands.add_parser("run", help="Run a scenario file")
    run_cmd.add_argument("scenario")
    add_run_options(run_cmd)

    madrid_cmd = commands.add_parser("madrid", help="Run the built-in Madrid testbed")
    add_run_options(madrid_cmd)

    topo = commands.add_parser("topo", help="Topology queries").add_subparsers(dest="action", required=True)
    topo.add_parser("show")

    link = commands.add_parser("link", help="Link operations").add_subparsers(dest="action", required=True)
    physical = link.add_parser("create-physical")
    physical.add_argument("--node-a", required=True)
    physical.add_argument("--iface-a", required=True)
    physical.add_argument("--node-b", required=True)
    physical.add_argument("--iface-b", required=True)
    physical.add_argument("--length-km", type=float, required=True)
    physical.add_argument("--component-loss", type=float, action="append", default=[],
                          help="Loss of one passive element in dB; repeatable")
    physical.add_argument("--classical", type=int, default=0, help="Co-propagating classical channels")
    physical.add_argument("--pilot-after", type=int, default=None)
    physical.add_argument("--link-id", default=None)

    virtual = link.add_parser("create-virtual")
    virtual.add_argument("--node-a", required=True)
    virtual.add_argument("--node-b", required=True)
    virtual.add_argument("--path", default=None, help="Comma-separated node ids")
    virtual.add_argument("--min-available-bits", type=int, default=0)
    virtual.add_argument("--link-id", default=None)

    key = commands.add_parser("key", help="Key delivery").add_subparsers(dest="action", required=True)
    get = key.add_parser("get")
    get.add_argument("--app", required=True, help="Initiator as app@node")
    get.add_argument("--peer", required=True, help="Responder as app@node")
    get.add_argument("--bits", type=int, default=256)
    get.add_argument("--count", type=int, default=1)

    metrics = commands.add_parser("metrics", help="Metrics").add_subparsers(dest="action", required=True)
    dump = metrics.add_parser("dump")
    dump.add_argument("--out", default=None)
    return parser


def parse_endpoint(value: str) -> Tuple[str, str]:
    """'app@node' -> (app, node)."""
    app_id, sep, node_id = value.partition("@")
    if not sep or not app_id or not node_id:
        raise argparse.ArgumentTypeError(f"expected app@node, got '{value}'")
    return app_id, node_id


def _emit(document: Any) -> None:
    if isinstance(document, str):
        sys.stdout.write(document + "\n")
    else:
        sys.stdout.write(json.dumps(document, indent=2, sort_keys=True) + "\n")


def _check(response: httpx.Response) -> Any:
    response.raise_for_status()
    return response.json() if response.content else None


def cmd_run(args: argparse.Namespace) -> int:
    scenario = madrid_scenario() if args.command == "madrid" else load_scenario_file(args.scenario)
    report = run(scenario, duration_s=args.duration, seed=args.seed, event_log_path=args.event_log)
    if args.metrics:
        path = write_document(report, args.metrics)
        log_step("metrics", action="written", path=str(path))
    else:
        _emit(encode_document(report))
    return 0


def cmd_topo_show(client: httpx.Client) -> int:
    state = _check(client.get("/state"))
    _emit(state["topology"])
    return 0


def cmd_link(args: argparse.Namespace, client: httpx.Client) -> int:
    if args.action == "create-physical":
        body = {
            "node_a": args.node_a, "iface_a": args.iface_a,
            "node_b": args.node_b, "iface_b": args.iface_b,
            "fiber": {"length_km": args.length_km, "component_losses_db": args.component_loss},
            "n_classical": args.classical, "pilot_after_channel": args.pilot_after,
            "link_id": args.link_id,
        }
        _emit(_check(client.post("/links/physical", json=body)))
    else:
        body = {
            "node_a": args.node_a, "node_b": args.node_b,
            "path": args.path.split(",") if args.path else None,
            "constraints": {"min_available_bits": args.min_available_bits},
            "link_id": args.link_id,
        }
        _emit(_check(client.post("/links/virtual", json=body)))
    return 0


def cmd_key_get(args: argparse.Namespace, client: httpx.Client) -> int:
    """Connect both applications, draw keys at the initiator, fetch them at the peer, close."""
    app, node = parse_endpoint(args.app)
    peer_app, peer_node = parse_endpoint(args.peer)
    for app_id, node_id, hint in ((app, node, peer_app), (peer_app, peer_node, app)):
        response = client.post(f"/nodes/{node_id}/apps", json={"app_id": app_id, "peer_app": hint})
        if response.status_code != httpx.codes.CONFLICT:
            _check(response)

    session = _check(client.post(f"/nodes/{node}/sessions", json={
        "app_id": app, "peer_app": peer_app, "peer_node": peer_node,
        "qos": {"key_size_bits": args.bits}}))
    session_id = session["session_id"]
    try:
        keys = _check(client.post(f"/nodes/{node}/keys/get", json={
            "session_id": session_id, "app_id": app, "count": args.count, "size_bits": args.bits}))
        peer_keys = _check(client.post(f"/nodes/{peer_node}/keys/get_with_ids", json={
            "session_id": session_id, "app_id": peer_app,
            "key_ids": [k["key_id"] for k in keys["keys"]]}))
    finally:
        _check(client.delete(f"/nodes/{node}/sessions/{session_id}"))
    _emit({"session_id": session_id, "serving_link": session["serving_link"],
           "keys": keys["keys"], "matched": keys["keys"] == peer_keys["keys"]})
    return 0


def cmd_metrics_dump(args: argparse.Namespace, client: httpx.Client) -> int:
    report = _check(client.get("/metrics"))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2)
            f.write("\n")
        log_step("metrics", action="written", path=args.out)
    else:
        _emit(report)
    return 0


def main(argv: Optional[Sequence[str]] = None, client: Optional[httpx.Client] = None) -> int:
    """Entry point. Pass a client to talk to an in-process app instead of a server."""
    args = build_parser().parse_args(argv)
    log_step("start", message="sdqkd", command=args.command,
             r0_bps=round(DEFAULT_RATE_PROFILE.r0_bps, 1),
             slope_per_db=round(DEFAULT_RATE_PROFILE.slope_per_db, 6),
             calibration_fraction=settings.calibration_fraction,
             slot_seconds=settings.slot_seconds)
    try:
        if args.command in ("run", "madrid"):
            return cmd_run(args)
        owned = client is None
        client = client or httpx.Client(base_url=args.api or _api_url())
        try:
            if args.command == "topo":
                return cmd_topo_show(client)
            if args.command == "link":
                return cmd_link(args, client)
            if args.command == "key":
                return cmd_key_get(args, client)
            return cmd_metrics_dump(args, client)
        finally:
            if owned:
                client.close()
    except QKDNetworkError as e:
        log_error("cli", e.message, error_code=e.error_code, details=e.details)
        return 2
    except argparse.ArgumentTypeError as e:
        log_error("cli", str(e))
        return 2
    except httpx.HTTPStatusError as e:
        log_error("api", f"{e.response.status_code} from {e.request.url}", body=e.response.text)
        return 1
    except httpx.HTTPError as e:
        log_error("api", f"cannot reach emulator: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
