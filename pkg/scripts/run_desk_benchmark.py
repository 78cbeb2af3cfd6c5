#!/usr/bin/env python3
"""End-to-end desk benchmark: synthesize a dataset, certify the known prompts
(building every cache), then time all four modes on the novel prompts and
print the speedup table.

Usage:
    python scripts/run_desk_benchmark.py --workdir /tmp/ovc-bench [--pad-ms 1.0]

With --pad-ms > 0 the synthetic encoder sleeps that long per encoded sample,
which makes the cached and Gaussian-approximated paths dominate the way they
do with a real vision backbone.
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from ovcert.cli import main as ovcert_main


def run(args):
    code = ovcert_main([str(a) for a in args])
    if code != 0:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", default=None)
    ap.add_argument("--pad-ms", type=float, default=1.0)
    ap.add_argument("--sigma", type=float, default=0.25)
    ap.add_argument("--n-inputs", type=int, default=20)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--n0", type=int, default=100)
    ap.add_argument("--np", type=int, default=400)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    work = Path(args.workdir or tempfile.mkdtemp(prefix="ovc-bench-"))
    data, cache, out = work / "data", work / "cache", work / "out"
    print(f"workdir: {work}")

    run(["gen-synthetic", "--out", data, "--seed", args.seed, "--k", 10,
         "--d", 64, "--dim-in", 32, "--n-inputs", args.n_inputs,
         "--n-prompts", 16, "--jitter", 0.1, "--pad-ms", args.pad_ms])

    common = ["--data", data, "--cache-dir", cache, "--sigma", args.sigma,
              "--n0", args.n0, "--n", args.n, "--np", args.np, "--seed", args.seed]

    print("\n== certify known prompts (standard, builds IRS metadata) ==")
    run(["certify", "--mode", "standard", "--out", out, "--prompts", "known"] + common)

    print("\n== build embedding caches and fit Gaussian parameters ==")
    run(["build-cache"] + common)
    run(["fit-mvn", "--cache-dir", cache, "--sigma", args.sigma])

    print("\n== novel prompts: standard baseline ==")
    run(["certify", "--mode", "standard", "--out", out / "novel", "--prompts", "novel"] + common)
    print("\n== novel prompts: incremental reuse ==")
    run(["certify", "--mode", "irs", "--out", out / "novel", "--prompts", "novel"] + common)
    print("\n== novel prompts: cached embeddings ==")
    run(["certify", "--mode", "ovc", "--out", out / "novel", "--prompts", "novel"] + common)
    print("\n== novel prompts: Gaussian approximation ==")
    run(["certify", "--mode", "mvn", "--out", out / "novel", "--prompts", "novel"] + common)

    print("\n== report ==")
    run(["report", "--out", out / "report",
         "--records",
         out / "novel" / "records_standard.jsonl",
         out / "novel" / "records_irs.jsonl",
         out / "novel" / "records_ovc.jsonl",
         out / "novel" / "records_mvn.jsonl"])

    speed = json.loads((out / "report" / "speedup.json").read_text())
    print("\nmethod          mean wall (s)   encoder calls   speedup vs standard")
    for method, entry in speed.items():
        s = entry.get("speedup_vs_STANDARD")
        print(f"{method:<15} {entry['mean_wall_time']:<15.4f} "
              f"{entry['total_encoder_calls']:<15} {f'{s:.1f}x' if s else '--'}")


if __name__ == "__main__":
    main()
