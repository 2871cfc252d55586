"""Command-line entry points: serve the API and drive it remotely."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any

from .cohort import build_demo_bundle, seed_demo


def _client_for(args: argparse.Namespace) -> Any:
    import httpx

    return httpx.Client(base_url=args.base_url, timeout=60.0)


def _print_json(document: Any) -> None:
    json.dump(document, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        fixture_path=args.fixture,
        store_path=args.store,
        parallelism=args.parallelism,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_demo_bundle(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = build_demo_bundle()
    (out / "fixture.json").write_text(json.dumps(bundle["fixture"], indent=2, sort_keys=True))
    (out / "seed.json").write_text(json.dumps(bundle["seed"], indent=2, sort_keys=True))
    _print_json({"fixture": str(out / "fixture.json"), "seed": str(out / "seed.json")})
    return 0


def cmd_seed(args: argparse.Namespace) -> int:
    bundle = build_demo_bundle()
    if args.bundle:
        bundle = {"seed": json.loads(Path(args.bundle).read_text())}
    with _client_for(args) as client:
        created = seed_demo("", bundle, client)
    _print_json(created)
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    with _client_for(args) as client:
        response = client.post("/submissions/bulk", json=manifest)
    response.raise_for_status()
    _print_json(response.json())
    return 0


def cmd_grade(args: argparse.Namespace) -> int:
    body: dict[str, Any] = {"regrade": args.regrade}
    if args.msmc_policy:
        body["msmc_policy"] = args.msmc_policy
    with _client_for(args) as client:
        response = client.post(
            f"/questions/{args.question}/grading-runs",
            params={"wait": not args.no_wait},
            json=body,
        )
    response.raise_for_status()
    _print_json(response.json())
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    with _client_for(args) as client:
        response = client.post(
            f"/questions/{args.question}/calibration-sessions",
            json={"sample_size": args.sample_size, "seed": args.seed},
        )
    response.raise_for_status()
    _print_json(response.json())
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    with _client_for(args) as client:
        savings = client.get(
            "/reports/time-savings",
            params={"assignment_id": args.assignment, "t_avg_minutes": args.t_avg},
        )
        savings.raise_for_status()
        accuracy = client.get("/reports/accuracy", params={"assignment_id": args.assignment})
        accuracy.raise_for_status()
    _print_json({"time_savings": savings.json(), "accuracy": accuracy.json()})
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    path = (
        f"/assignments/{args.assignment}/export/grades.csv"
        if args.format == "csv"
        else f"/assignments/{args.assignment}/export/records.json"
    )
    with _client_for(args) as client:
        response = client.get(path)
    response.raise_for_status()
    if args.out:
        Path(args.out).write_bytes(response.content)
    else:
        sys.stdout.write(response.text)
    return 0


def _add_remote(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--base-url", default="http://127.0.0.1:8000")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="gradeloop")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--fixture", help="mock provider fixture JSON")
    serve.add_argument("--store", help="directory for the persistent store")
    serve.add_argument("--parallelism", type=int, default=8)
    serve.set_defaults(func=cmd_serve)

    demo = sub.add_parser("demo-bundle", help="write the demo fixture and seed files")
    demo.add_argument("out_dir")
    demo.set_defaults(func=cmd_demo_bundle)

    seed = sub.add_parser("seed", help="load the demo corpus into a running service")
    _add_remote(seed)
    seed.add_argument("--bundle", help="seed JSON to load instead of the built-in demo")
    seed.set_defaults(func=cmd_seed)

    ingest = sub.add_parser("ingest", help="upload a submission manifest")
    _add_remote(ingest)
    ingest.add_argument("--manifest", required=True)
    ingest.set_defaults(func=cmd_ingest)

    grade = sub.add_parser("grade", help="start a grading run")
    _add_remote(grade)
    grade.add_argument("--question", required=True)
    grade.add_argument("--regrade", action="store_true")
    grade.add_argument("--msmc-policy", choices=["exact_match", "per_option"])
    grade.add_argument("--no-wait", action="store_true")
    grade.set_defaults(func=cmd_grade)

    calibrate = sub.add_parser("calibrate", help="open a calibration session")
    _add_remote(calibrate)
    calibrate.add_argument("--question", required=True)
    calibrate.add_argument("--sample-size", type=int, default=10)
    calibrate.add_argument("--seed", type=int, default=0)
    calibrate.set_defaults(func=cmd_calibrate)

    report = sub.add_parser("report", help="print time-savings and accuracy reports")
    _add_remote(report)
    report.add_argument("--assignment", required=True)
    report.add_argument("--t-avg", default="3")
    report.set_defaults(func=cmd_report)

    export = sub.add_parser("export", help="download grades as CSV or canonical JSON")
    _add_remote(export)
    export.add_argument("--assignment", required=True)
    export.add_argument("--format", choices=["csv", "json"], default="csv")
    export.add_argument("--out")
    export.set_defaults(func=cmd_export)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
