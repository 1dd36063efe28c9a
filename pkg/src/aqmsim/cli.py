"""Command-line interface: run scenarios, sweep the experiment matrix,
recompute summaries, list presets, and serve the control API + dashboard.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .harness import default_out_dir, run_matrix, run_scenario, summarize
from .metrics import LogParseError
from .scenario import ScenarioConfig, ScenarioError, get_preset, list_presets

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _load_scenario(args) -> ScenarioConfig:
    if args.preset:
        cfg = get_preset(args.preset)
    else:
        path = Path(args.scenario)
        if not path.exists():
            raise ScenarioError([f"scenario file not found: {path}"])
        cfg = ScenarioConfig.parse(path.read_text())
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    errors = cfg.validate()
    if errors:
        raise ScenarioError(errors)
    return cfg


def cmd_run(args) -> int:
    cfg = _load_scenario(args)
    result = run_scenario(cfg, args.out)
    s = result.summary
    print(f"run complete: {cfg.name} seed={cfg.seed} "
          f"({result.runtime_s:.2f}s wall for {cfg.duration_s:.0f}s simulated)")
    print(f"  log:     {result.log_path}")
    print(f"  summary: {result.summary_path}")
    for fid, fs in s.flows.items():
        print(f"  {fid} ({fs.cca}): mean {fs.mean_goodput / 1e6:.3f} Mbps, "
              f"retransmissions {fs.retransmissions}")
    print(f"  jain index {s.jain_index:.4f}  "
          f"convergence {s.convergence_time_s if s.convergence_time_s is not None else 'absent'}")
    return EXIT_OK


def cmd_matrix(args) -> int:
    cells = run_matrix(args.ccas, args.aqms, args.directions, args.seeds, args.out)
    ok = sum(1 for c in cells if c["status"] == "ok")
    print(f"matrix complete: {ok}/{len(cells)} cells ok "
          f"(index at {Path(args.out or default_out_dir()) / 'index.json'})")
    for c in cells:
        if c["status"] != "ok":
            print(f"  FAILED {c['cca']}/{c['aqm']}/{c['direction']}/seed{c['seed']}: {c['error']}")
    return EXIT_OK if ok == len(cells) else EXIT_RUNTIME


def cmd_summarize(args) -> int:
    s = summarize(args.log)
    print(json.dumps(s.to_json_obj(), indent=2))
    return EXIT_OK


def cmd_list_presets(args) -> int:
    for name in list_presets():
        print(name)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(data_dir=args.data_dir, realtime_factor=args.realtime_factor,
                     max_workers=args.max_workers)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aqmsim",
        description="TCP congestion control competition simulator with AQM bottlenecks")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario")
    src = run_p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="scenario JSON file")
    src.add_argument("--preset", help="builtin preset name (see list-presets)")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", default=None,
                       help="output directory (default $AQMSIM_OUT or ./runs)")
    run_p.set_defaults(func=cmd_run)

    mx = sub.add_parser("matrix", help="run a cca x aqm x direction x seed sweep")
    mx.add_argument("--ccas", nargs="+", required=True)
    mx.add_argument("--aqms", nargs="+", required=True,
                    choices=["pfifo", "fq_codel", "cake"])
    mx.add_argument("--directions", nargs="+", required=True, choices=["up", "down"])
    mx.add_argument("--seeds", nargs="+", type=int, required=True)
    mx.add_argument("--out", default=None)
    mx.set_defaults(func=cmd_matrix)

    sm = sub.add_parser("summarize", help="recompute a summary from a JSONL log")
    sm.add_argument("log")
    sm.set_defaults(func=cmd_summarize)

    lp = sub.add_parser("list-presets", help="list builtin scenario presets")
    lp.set_defaults(func=cmd_list_presets)

    sv = sub.add_parser("serve", help="start the control API + dashboard")
    sv.add_argument("--host", default=os.environ.get("AQMSIM_HOST", "127.0.0.1"))
    sv.add_argument("--port", type=int, default=int(os.environ.get("AQMSIM_PORT", "8080")))
    sv.add_argument("--data-dir", default=os.environ.get("AQMSIM_DATA", "service-data"))
    sv.add_argument("--realtime-factor", type=float, default=10.0,
                    help="stream speed vs simulated time (inf = as fast as produced)")
    sv.add_argument("--max-workers", type=int, default=None,
                    help="concurrent simulations (default: cpu count)")
    sv.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print("invalid scenario:", file=sys.stderr)
        for error in exc.errors:
            print(f"  - {error}", file=sys.stderr)
        return EXIT_VALIDATION
    except LogParseError as exc:
        print(f"log error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:   # runtime failure surface for scripts
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
