"""Command-line client for the planning service.

All computation happens behind the HTTP API: by default the CLI mounts the
FastAPI app in-process, and --server targets a running instance instead.
The client's own work is limited to file I/O and request assembly.

Exit codes: 0 success, 2 infeasible, 3 validation error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4

_ERROR_EXITS = {
    "InfeasibleError": EXIT_INFEASIBLE,
    "ValidationError": EXIT_VALIDATION,
    "NumericalError": EXIT_NUMERICAL,
    "GenerationError": EXIT_NUMERICAL,
}


class ServiceCallError(Exception):
    def __init__(self, kind, detail):
        super().__init__(detail)
        self.kind = kind
        self.exit_code = _ERROR_EXITS.get(kind, 1)


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def _post(client, route, payload):
    resp = client.post(route, json=payload)
    if resp.status_code >= 400:
        try:
            body = resp.json()
        except Exception:
            raise ServiceCallError("error", resp.text)
        raise ServiceCallError(body.get("error_kind", "error"), body.get("detail", ""))
    return resp.json()


def _load_scenario_payload(path) -> dict:
    """Read a scenario file and inline its grid references.

    Requests must be self-contained: the server does not share the client's
    working directory.
    """
    path = Path(path)
    with open(path) as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise ServiceCallError("ValidationError", "scenario file is not a JSON object")
    for key in ("importance_grid", "truth_grid"):
        ref = raw.get(key)
        if isinstance(ref, str):
            ref_path = Path(ref)
            if not ref_path.is_absolute():
                ref_path = path.parent / ref_path
            if not ref_path.exists():
                raise ServiceCallError("ValidationError", f"{key} reference '{ref}' not found")
            with open(ref_path) as f:
                raw[key] = json.load(f)
    return raw


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as f:
        return tomllib.load(f)


def cmd_plan(args):
    payload = {
        "scenario": _load_scenario_payload(args.scenario),
        "planner": args.planner,
        "seed": args.seed,
        "threads": args.threads,
        "config": _load_config(args.config),
    }
    if args.budget is not None:
        payload["budget"] = args.budget
    with _client(args.server) as client:
        body = _post(client, "/plan", payload)
    report = body["report"]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, content in body["artifacts"].items():
            (out / name).write_text(content)
    print(
        f"{report['planner']}: objective={report['objective']:.6f} "
        f"length={report['total_length']:.4f} feasible={report['feasible']} "
        f"runtime={report['runtime_seconds']['total']:.2f}s"
    )
    if args.out:
        print(f"artifacts written to {args.out}")
    return EXIT_OK


def cmd_allocate(args):
    payload = {
        "scenario": _load_scenario_payload(args.scenario),
        "seed": args.seed,
        "config": _load_config(args.config),
    }
    with _client(args.server) as client:
        body = _post(client, "/allocate", payload)
    print(json.dumps(body, indent=2))
    return EXIT_OK


def cmd_refine(args):
    payload = {
        "scenario": _load_scenario_payload(args.scenario),
        "edge": [args.edge[0], args.edge[1]],
        "allocated_length": args.length,
        "seed": args.seed,
        "config": _load_config(args.config),
    }
    with _client(args.server) as client:
        body = _post(client, "/refine", payload)
    print(json.dumps(body, indent=2))
    return EXIT_OK


def cmd_eval(args):
    measurements = []
    with open(args.trajectory) as f:
        for row in csv.DictReader(f):
            if row["is_measurement"] == "1":
                measurements.append([float(row["x"]), float(row["y"])])
    payload = {
        "scenario": _load_scenario_payload(args.scenario),
        "measurements": measurements,
    }
    with _client(args.server) as client:
        body = _post(client, "/eval", payload)
    print(json.dumps(body, indent=2))
    return EXIT_OK


def cmd_gen_bench(args):
    overrides = json.loads(args.overrides) if args.overrides else {}
    payload = {"seed": args.seed, "overrides": overrides}
    with _client(args.server) as client:
        body = _post(client, "/bench/generate", payload)
    text = json.dumps(body["scenario"], indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"scenario written to {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def cmd_compare(args):
    scenarios = [_load_scenario_payload(p) for p in args.scenario]
    payload = {
        "scenarios": scenarios,
        "planners": args.planner,
        "seeds": [int(s) for s in args.seeds.split(",")],
        "threads": args.threads,
        "config": _load_config(args.config),
    }
    with _client(args.server) as client:
        body = _post(client, "/compare", payload)
    from .pipeline import compare_csv, markdown_table

    md = markdown_table(args.planner, body["summary"], body["win_rate"])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.csv").write_text(compare_csv(body["rows"]))
        (out / "compare.md").write_text(md)
        print(f"comparison written to {args.out}")
    print(md)
    return EXIT_OK


def cmd_oracle(args):
    payload = {"scenario": _load_scenario_payload(args.scenario)}
    if args.which == "dense-trace":
        measurements = []
        with open(args.measurements) as f:
            for row in csv.DictReader(f):
                measurements.append([float(row["x"]), float(row["y"])])
        payload["measurements"] = measurements
    elif args.which == "enumerate":
        payload["cap"] = args.cap
    else:
        payload["resolution"] = args.resolution
        if args.path:
            payload["path"] = [int(v) for v in args.path.split(",")]
    with _client(args.server) as client:
        body = _post(client, f"/oracle/{args.which}", payload)
    print(json.dumps(body, indent=2))
    return EXIT_OK


def cmd_serve(args):
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ipplan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", required=True, help="scenario JSON file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", help="TOML settings override file")
        sp.add_argument("--server", help="service URL (default: in-process)")

    sp = sub.add_parser("plan", help="run a planner and write artifacts")
    common(sp)
    sp.add_argument("--planner", default="hier", choices=["hier", "graph", "cmaes", "gradient"])
    sp.add_argument("--budget", type=float, help="override the scenario budget")
    sp.add_argument("--out", help="artifact output directory")
    sp.add_argument("--threads", type=int, default=1)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("allocate", help="graph stage plus budget allocation only")
    common(sp)
    sp.set_defaults(func=cmd_allocate)

    sp = sub.add_parser("refine", help="refine a single graph edge")
    common(sp)
    sp.add_argument("--edge", type=int, nargs=2, required=True, metavar=("I", "J"))
    sp.add_argument("--length", type=float, required=True, help="allocated edge budget")
    sp.set_defaults(func=cmd_refine)

    sp = sub.add_parser("eval", help="recompute metrics from a trajectory.csv")
    common(sp)
    sp.add_argument("--trajectory", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gen-bench", help="generate a benchmark scenario")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="output scenario path")
    sp.add_argument("--overrides", help="JSON object of benchmark config overrides")
    sp.add_argument("--server", help="service URL (default: in-process)")
    sp.set_defaults(func=cmd_gen_bench)

    sp = sub.add_parser("compare", help="run planners across scenarios and summarize")
    sp.add_argument("--scenario", action="append", required=True, help="repeatable")
    sp.add_argument(
        "--planner", action="append", default=None,
        choices=["hier", "graph", "cmaes", "gradient"],
    )
    sp.add_argument("--seeds", default="0", help="comma-separated seeds")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--config", help="TOML settings override file")
    sp.add_argument("--server", help="service URL (default: in-process)")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("oracle", help="reference implementations for audits")
    sp.add_argument("which", choices=["dense-trace", "enumerate", "grid-alloc"])
    common(sp)
    sp.add_argument("--measurements", help="CSV with x,y columns (dense-trace)")
    sp.add_argument("--cap", type=int, default=100000)
    sp.add_argument("--path", help="comma-separated vertex ids (grid-alloc)")
    sp.add_argument("--resolution", type=float, default=0.01)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8421)
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "compare" and not args.planner:
        args.planner = ["hier", "graph", "cmaes", "gradient"]
    try:
        return args.func(args)
    except ServiceCallError as e:
        print(f"error ({e.kind}): {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
