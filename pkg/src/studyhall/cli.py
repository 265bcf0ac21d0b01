"""Command-line entry points for the gateway daemon and the harness."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from .config import build_config, parse_config_file
from .errors import ConfigInvalid


def gateway_main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="studyhall-gateway",
        description="Run the tutoring session gateway (HTTP + socket).")
    parser.add_argument("--bind", help="interface to listen on"
                        " (default 127.0.0.1)")
    parser.add_argument("--port", type=int,
                        help="TCP port; 0 picks an ephemeral port")
    parser.add_argument("--data-dir",
                        help="directory for per-session event logs")
    parser.add_argument("--inactivity-secs", type=int,
                        help="idle seconds before an Inactivity alert")
    parser.add_argument("--incorrect-threshold", type=int,
                        help="wrong answers inside the window that raise"
                        " a RepeatedIncorrect alert")
    parser.add_argument("--incorrect-window-secs", type=int,
                        help="sliding window for RepeatedIncorrect")
    parser.add_argument("--bandwidth-budget-kbps", type=int,
                        help="per-session uplink budget for stream tiers")
    parser.add_argument("--config", type=Path,
                        help="config file, one key = value per line")
    parser.add_argument("--simulated-clock", action="store_true",
                        default=None,
                        help="freeze time and drive it through"
                        " POST /api/clock/advance (testing only)")
    args = parser.parse_args(argv)

    try:
        file_values = parse_config_file(args.config) if args.config else {}
        overrides = {
            "bind": args.bind,
            "port": args.port,
            "data_dir": args.data_dir,
            "inactivity_secs": args.inactivity_secs,
            "incorrect_threshold": args.incorrect_threshold,
            "incorrect_window_secs": args.incorrect_window_secs,
            "bandwidth_budget_kbps": args.bandwidth_budget_kbps,
            "simulated_clock": args.simulated_clock,
        }
        config = build_config(file_values, overrides)
    except ConfigInvalid as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    from . import gateway
    try:
        gateway.serve(config)
    except ConfigInvalid as e:
        print(f"startup error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        pass
    return 0


def harness_main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="studyhall-harness",
        description="Synthetic clients: scripted scenarios and load runs.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one scripted scenario")
    run_p.add_argument("scenario",
                       help="scenario JSON file, or a bundled name"
                       " (algebra_hint, inactivity_flag)")
    run_p.add_argument("--gateway", required=True,
                       help="gateway address, host:port")

    load_p = sub.add_parser("load", help="run synthetic classroom load")
    load_p.add_argument("--students", type=int, required=True)
    load_p.add_argument("--duration", type=float, required=True,
                        help="seconds of steady-state traffic")
    load_p.add_argument("--gateway", required=True,
                        help="gateway address, host:port")
    load_p.add_argument("--event-rate", type=float, default=2.0,
                        help="telemetry/chat rounds per second")
    args = parser.parse_args(argv)

    from . import harness
    if args.command == "run":
        path = Path(args.scenario)
        try:
            if path.exists():
                scenario = harness.load_scenario(path)
            else:
                scenario = harness.bundled_scenario(args.scenario)
        except harness.ScenarioParseError as e:
            print(f"scenario error: {e}", file=sys.stderr)
            return 2
        try:
            report = harness.run_scenario(scenario, args.gateway)
        except harness.ConnectionFailure as e:
            print(f"gateway unreachable: {e}", file=sys.stderr)
            return 2
        print(report.to_text())
        return 0 if report.ok else 1

    if args.students < 1:
        print("--students must be >= 1", file=sys.stderr)
        return 2
    try:
        report = harness.load_run(args.students, args.duration,
                                  args.gateway,
                                  event_rate_hz=args.event_rate)
    except harness.ConnectionFailure as e:
        print(f"gateway unreachable: {e}", file=sys.stderr)
        return 2
    print(report.to_text())
    ok = report.all_connected and not report.violations
    return 0 if ok else 1


def main(argv: Optional[List[str]] = None) -> int:
    """Dispatcher so `python -m studyhall.cli gateway|harness ...` works."""
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "gateway":
        return gateway_main(argv[1:])
    if argv and argv[0] == "harness":
        return harness_main(argv[1:])
    print("usage: python -m studyhall.cli {gateway|harness} ...",
          file=sys.stderr)
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
