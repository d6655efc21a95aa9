"""Command line front door.

Server verbs build a session in-process (`run`, `bench`, `wizard`); the
client verbs (`discover`, `exploit`, `events`) talk to a running
service over its HTTP API.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..errors import SimError
from ..exploits import load_exploit_db
from ..scenario import generate_lans, parse_scenario, render_scenario


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="insight",
        description="attacker-centric network simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="boot a scenario and serve the API")
    run_p.add_argument("scenario", help="scenario file")
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--db", help="exploit database XML file")
    run_p.add_argument("--host", default="127.0.0.1")
    run_p.add_argument("--port", type=int, default=8000)
    run_p.add_argument("--log", help="append event JSONL to this file")
    run_p.add_argument("--ui", default="frontend/dist",
                       help="static console directory, served at /")
    run_p.add_argument("--log-syscalls", action="store_true",
                       help="emit one event per syscall (verbose)")

    bench_p = sub.add_parser("bench", help="run the scaling benchmark")
    bench_p.add_argument("--lans", type=int, default=4)
    bench_p.add_argument("--per-lan", type=int, default=250)
    bench_p.add_argument("--seed", type=int, default=0)
    bench_p.add_argument("--json", action="store_true",
                         help="machine-readable report")

    disc_p = sub.add_parser("discover", help="sweep a cidr via the API")
    disc_p.add_argument("cidr")
    disc_p.add_argument("--port", type=int, default=80)
    disc_p.add_argument("--via", default="",
                        help="comma-separated agent ids to pivot through")
    disc_p.add_argument("--url", default="http://127.0.0.1:8000")

    expl_p = sub.add_parser("exploit", help="throw an exploit via the API")
    expl_p.add_argument("exploit_id")
    expl_p.add_argument("--target", help="addr:port for a remote attack")
    expl_p.add_argument("--local", help="agent id for a local attack")
    expl_p.add_argument("--via", default="",
                        help="comma-separated agent ids to pivot through")
    expl_p.add_argument("--os", default="",
                        help="assumed target os, comma-separated k=v")
    expl_p.add_argument("--url", default="http://127.0.0.1:8000")

    ev_p = sub.add_parser("events", help="dump the event log via the API")
    ev_p.add_argument("--kind")
    ev_p.add_argument("--after", type=int, default=-1)
    ev_p.add_argument("--url", default="http://127.0.0.1:8000")

    wiz_p = sub.add_parser("wizard", help="generate a LAN scenario file")
    wiz_p.add_argument("--lans", type=int, default=1)
    wiz_p.add_argument("--per-lan", type=int, default=250)
    wiz_p.add_argument("--port", type=int, default=80)
    wiz_p.add_argument("--seed", type=int, default=0)
    wiz_p.add_argument("-o", "--output", required=True)

    return parser


def _cmd_run(args) -> int:
    import uvicorn
    from .api import create_app
    from .session import PentestSession

    scenario = parse_scenario(Path(args.scenario).read_text())
    db = load_exploit_db(args.db) if args.db else None
    session = PentestSession(scenario, seed=args.seed, db=db,
                             log_path=args.log,
                             log_syscalls=args.log_syscalls)
    ui = args.ui if Path(args.ui).is_dir() else None
    app = create_app(session, frontend_dir=ui)
    print(f"scenario {scenario.name!r}: {len(scenario.machines)} machines, "
          f"{len(session.db)} exploits loaded")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _cmd_bench(args) -> int:
    from .benchmark import run_benchmark

    report = run_benchmark(args.lans, per_lan=args.per_lan, seed=args.seed)
    if args.json:
        print(json.dumps(report.as_dict(), indent=2))
    else:
        print(report.table())
    return 0


def _client(url: str):
    import httpx

    return httpx.Client(base_url=url, timeout=600.0)


def _print_api_error(resp) -> int:
    try:
        detail = resp.json().get("detail", {})
    except ValueError:
        detail = {}
    code = detail.get("error", resp.status_code)
    msg = detail.get("detail", resp.text)
    print(f"error: {code}: {msg}", file=sys.stderr)
    return 1


def _cmd_discover(args) -> int:
    via = [a for a in args.via.split(",") if a]
    with _client(args.url) as client:
        resp = client.post("/actions/discover",
                           json={"cidr": args.cidr, "port": args.port,
                                 "via": via})
        if resp.status_code != 200:
            return _print_api_error(resp)
        hosts = resp.json()["hosts"]
        for h in hosts:
            print(h["addr"])
        print(f"{len(hosts)} host(s) up", file=sys.stderr)
    return 0


def _cmd_exploit(args) -> int:
    if bool(args.target) == bool(args.local):
        print("error: pass exactly one of --target or --local",
              file=sys.stderr)
        return 2
    with _client(args.url) as client:
        if args.target:
            addr, _, port = args.target.rpartition(":")
            assumed = dict(kv.split("=", 1)
                           for kv in args.os.split(",") if "=" in kv)
            via = [a for a in args.via.split(",") if a]
            resp = client.post("/actions/exploit-remote",
                               json={"exploit_id": args.exploit_id,
                                     "addr": addr, "port": int(port),
                                     "assumed_os": assumed, "via": via})
        else:
            resp = client.post("/actions/exploit-local",
                               json={"exploit_id": args.exploit_id,
                                     "agent_id": args.local})
        if resp.status_code != 200:
            return _print_api_error(resp)
        print(json.dumps(resp.json(), indent=2))
    return 0


def _cmd_events(args) -> int:
    with _client(args.url) as client:
        resp = client.get("/events/stream", params={"after": args.after})
        if resp.status_code != 200:
            return _print_api_error(resp)
        for line in resp.text.splitlines():
            if args.kind and json.loads(line).get("kind") != args.kind:
                continue
            print(line)
    return 0


def _cmd_wizard(args) -> int:
    scenario = generate_lans(args.lans, per_lan=args.per_lan,
                             open_port=args.port, seed=args.seed)
    Path(args.output).write_text(render_scenario(scenario))
    print(f"wrote {args.output}: {len(scenario.machines)} machines "
          f"across {args.lans} LAN(s)")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "bench": _cmd_bench,
        "discover": _cmd_discover,
        "exploit": _cmd_exploit,
        "events": _cmd_events,
        "wizard": _cmd_wizard,
    }
    try:
        return handlers[args.command](args)
    except SimError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
