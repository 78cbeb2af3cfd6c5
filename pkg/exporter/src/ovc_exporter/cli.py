"""Command line for the export pipeline.

    ovc-export embeddings --model resnet18 --data imgs.npy --ids 0 1 2 \
        --sigma 0.25 --n0 100 --n 400 --seed 5 --out caches/
    ovc-export prompts --model resnet18 --prompt-id base \
        --prompts "a photo of a cat" "a photo of a dog" --out base.ovcp
"""

from __future__ import annotations

import argparse
import sys

from .backbones import ModelLoadError, PromptEncodingError
from .export import ExportJob, export_embeddings, export_prompts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ovc-export")
    sub = parser.add_subparsers(dest="command", required=True)

    e = sub.add_parser("embeddings", help="export noisy image embeddings to OVCE files")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True, help=".npy of preprocessed input tensors")
    e.add_argument("--ids", type=int, nargs="+", required=True)
    e.add_argument("--sigma", type=float, required=True)
    e.add_argument("--n0", type=int, default=100)
    e.add_argument("--n", type=int, default=10_000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--chunk-size", type=int, default=400)
    e.add_argument("--out", required=True)
    e.add_argument("--allow-random-init", action="store_true")

    p = sub.add_parser("prompts", help="export class-prompt strings to an OVCP head")
    p.add_argument("--model", required=True)
    p.add_argument("--prompts", nargs="+", required=True)
    p.add_argument("--labels", nargs="+", default=None)
    p.add_argument("--prompt-id", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clip-checkpoint", default=None)
    p.add_argument("--allow-random-init", action="store_true")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "embeddings":
            job = ExportJob(
                model=args.model,
                dataset_path=args.data,
                input_ids=args.ids,
                sigma=args.sigma,
                n0=args.n0,
                n=args.n,
                master_seed=args.seed,
                out_dir=args.out,
                chunk_size=args.chunk_size,
                allow_random_init=args.allow_random_init,
            )
            for path in export_embeddings(job):
                print(f"wrote {path} ({path.stat().st_size} bytes)")
        else:
            path = export_prompts(
                args.model, args.prompts, args.out, args.prompt_id,
                labels=args.labels, clip_checkpoint=args.clip_checkpoint,
                allow_random_init=args.allow_random_init,
            )
            print(f"wrote {path} ({path.stat().st_size} bytes)")
        return 0
    except (ModelLoadError, PromptEncodingError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
