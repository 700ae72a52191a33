"""Command-line front end: `psifno <subcommand> --config <file.json>`.

Writes <out>/<kind>.csv with a fixed header (see docs/csv-schemas.md) and
<out>/<kind>_summary.json with per-criterion pass flags, slopes and
tolerances.  Exit code 0 iff every criterion passed.  Identical
config+seed produce byte-identical CSVs on one platform.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigInvalid, PsifnoError
from .harness import CSV_HEADERS, SCHEMA, run_experiment


def _format_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(float(v))  # shortest round-trip; also unwraps numpy scalars
    return str(int(v)) if isinstance(v, int) else str(v)


def write_csv(path: Path, kind: str, rows) -> None:
    header = CSV_HEADERS[kind]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format_cell(row[h]) for h in header))
    path.write_text("\n".join(lines) + "\n")


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    if doc.get("schema", SCHEMA) != SCHEMA:
        raise ConfigInvalid(f"unsupported config schema {doc.get('schema')!r}")
    if "kind" not in doc:
        raise ConfigInvalid("config must declare a 'kind'")
    doc.setdefault("seed", 0)
    doc.setdefault("params", {})
    return doc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psifno",
        description="Spectral-operator experiment harness: convergence studies, "
        "solver-emulator verification, and property suites.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in CSV_HEADERS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default="psifno-out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="worker pool size")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = load_config(args.config)
        if doc["kind"] != args.kind:
            raise ConfigInvalid(
                f"config is for {doc['kind']!r} but subcommand is {args.kind!r}"
            )
        seed = args.seed if args.seed is not None else int(doc["seed"])
        rows, summary = run_experiment(args.kind, doc["params"], seed, jobs=args.jobs)
    except PsifnoError as exc:
        print(f"psifno: error: {exc}", file=sys.stderr)
        return 2

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / f"{args.kind}.csv", args.kind, rows)
    summary_doc = {"schema": SCHEMA, "kind": args.kind, "seed": seed, **summary}
    (out / f"{args.kind}_summary.json").write_text(json.dumps(summary_doc, indent=2) + "\n")

    all_pass = all(summary["pass"].values())
    for name, ok in summary["pass"].items():
        print(f"[{'PASS' if ok else 'FAIL'}] {args.kind}: {name}")
    return 0 if all_pass else 1


if __name__ == "__main__":
    sys.exit(main())
