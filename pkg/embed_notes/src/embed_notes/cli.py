"""Command line: ``embed-notes embed --in notes.jsonl --out emb.bin``.

Exit codes: 0 success, 2 usage error, 3 bad notes data, 4 model unavailable.
"""

from __future__ import annotations

import argparse
import sys

from .core import NoteError, embed_notes, read_notes, write_matrix
from .encoders import ModelUnavailableError, resolve_encoder

DEFAULT_MODEL = "biolord-2023"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-notes",
        description="Average per-sentence embeddings of clinical notes into an EMB1 matrix.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("embed", help="embed a JSON-lines notes file")
    p.add_argument(
        "--in",
        dest="infile",
        required=True,
        metavar="NOTES",
        help='JSON-lines notes, one {"id", "text"} object per line',
    )
    p.add_argument(
        "--model",
        default=DEFAULT_MODEL,
        help=f"encoder name (default {DEFAULT_MODEL}; 'hashed-<dim>' runs offline)",
    )
    p.add_argument(
        "--out",
        dest="outfile",
        required=True,
        metavar="EMB",
        help="output EMB1 matrix; note ids go to EMB.ids",
    )
    p.add_argument(
        "--batch-size",
        type=int,
        default=64,
        help="sentences per encoder batch; does not affect the output",
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.batch_size < 1:
        parser.error(f"--batch-size must be >= 1, got {args.batch_size}")
    try:
        notes = read_notes(args.infile)
        encoder = resolve_encoder(args.model)
        rows = embed_notes(notes, encoder, batch_size=args.batch_size)
        write_matrix(args.outfile, [rid for rid, _ in notes], rows)
    except (NoteError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ModelUnavailableError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 4
    print(f"embed: {rows.shape[0]} notes x {rows.shape[1]} dims -> {args.outfile}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
