"""Command-line entry point: `embed-export export --in ... --out ...`."""
from __future__ import annotations

import argparse
import sys

from .exporter import POOLING_MODES, ExportError, export_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Export frozen transformer embeddings of a JSONL text "
                    "dataset to an FVEC1 feature file.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="embed a JSONL file and write FVEC1")
    p.add_argument("--in", dest="input", required=True, help="input JSONL path")
    p.add_argument("--out", required=True, help="output FVEC1 path")
    p.add_argument("--model", required=True,
                   help="model name or local directory (e.g. bert-base-uncased)")
    p.add_argument("--pooling", choices=POOLING_MODES, default="cls")
    p.add_argument("--batch-size", type=int, default=32)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        n = export_embeddings(args.input, args.model, args.pooling, args.out,
                              args.batch_size)
    except (ExportError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"exported {n} records to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
