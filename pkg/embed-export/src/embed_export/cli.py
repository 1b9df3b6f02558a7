"""embed-export CLI: export-audio / export-text."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .export import ExportJob, export_audio, export_text, manifest_queries


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Run an audio-text encoder over manifest audio with a sliding "
        "window and write raw float32 embedding stores.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-audio", help="one store per manifest item")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output root (stores go under <out>/audio)")
    p.add_argument("--audio-root", help="base dir for manifest audio paths (default: manifest dir)")
    p.add_argument("--window", type=float, default=1.0, help="window length, seconds (1/4/7)")
    p.add_argument("--hop", type=float, default=1.0, help="hop, seconds")
    p.add_argument("--model", default="mel:64", help="mel:<n_mels> or clap:<hf-model-id>")
    p.add_argument("--device", default="cpu")
    p.set_defaults(mode="audio")

    p = sub.add_parser("export-text", help="one single-row store per query")
    p.add_argument("--queries", help="text file, one query per line")
    p.add_argument("--manifest", help="pull queries from a manifest instead")
    p.add_argument("--out", required=True, help="output root (stores go under <out>/text)")
    p.add_argument("--model", default="mel:64")
    p.add_argument("--device", default="cpu")
    p.set_defaults(mode="text")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.mode == "audio":
        job = ExportJob(
            manifest=args.manifest,
            out_dir=args.out,
            audio_root=args.audio_root,
            window_s=args.window,
            hop_s=args.hop,
            model=args.model,
            device=args.device,
        )
        written, failed = export_audio(job)
        print(f"wrote {len(written)} audio stores to {Path(args.out) / 'audio'}")
        if failed:
            print(f"{len(failed)} items failed: {', '.join(failed)}", file=sys.stderr)
            return 1
        return 0

    if not args.queries and not args.manifest:
        print("export-text needs --queries or --manifest", file=sys.stderr)
        return 2
    if args.queries:
        queries = Path(args.queries).read_text(encoding="utf-8").splitlines()
    else:
        queries = manifest_queries(args.manifest)
    job = ExportJob(manifest=args.manifest or args.queries, out_dir=args.out,
                    model=args.model, device=args.device)
    written, skipped = export_text(job, queries)
    print(f"wrote {len(written)} text stores to {Path(args.out) / 'text'}")
    if skipped:
        print(f"skipped {len(skipped)} empty queries", file=sys.stderr)
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
