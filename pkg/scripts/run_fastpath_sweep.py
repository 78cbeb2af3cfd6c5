#!/usr/bin/env python3
"""Sweep the noise level and report the fraction of inputs where the
incremental fast path applies. The fraction drops as sigma grows: noisier
predictions make it harder to find a known prompt that agrees closely enough.

Usage:
    python scripts/run_fastpath_sweep.py [--sigmas 0.12 0.25 0.5 1.0]
"""

import argparse

import numpy as np

from ovcert import (
    CertConfig,
    CertMetaCache,
    InputPoint,
    Method,
    NoiseStream,
    SyntheticEncoder,
    certify_modified_irs,
    certify_standard,
    make_synthetic_family,
    splitmix64,
)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sigmas", type=float, nargs="+", default=[0.12, 0.25, 0.5, 1.0])
    ap.add_argument("--n-inputs", type=int, default=30)
    ap.add_argument("--n-known", type=int, default=6)
    ap.add_argument("--n-novel", type=int, default=2)
    ap.add_argument("--jitter", type=float, default=0.12)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--np", type=int, default=400)
    ap.add_argument("--seed", type=int, default=90)
    args = ap.parse_args()

    enc = SyntheticEncoder(32, 64, hidden=(64,), weight_seed=11, gain=0.4)
    heads = make_synthetic_family(
        args.seed, args.n_known + args.n_novel, 10, 64, args.jitter
    )
    known, novel = heads[: args.n_known], heads[args.n_known :]
    rng = np.random.default_rng(7)
    xs = [InputPoint(i, 1.5 * rng.standard_normal(32)) for i in range(args.n_inputs)]

    print(f"{'sigma':>6}  {'fast fraction':>13}  {'mean fast radius':>16}")
    for sigma in args.sigmas:
        cfg = CertConfig(sigma=sigma, n0=100, n=args.n, n_p=args.np)
        fast, total, radii = 0, 0, []
        for x in xs:
            stream = NoiseStream(splitmix64(31000 + int(sigma * 1000), x.id), sigma)
            meta = CertMetaCache.for_stream(x.id, stream, cfg.n0)
            for h in known:
                certify_standard(enc, h, x, cfg, stream, meta)
            for h in novel:
                cert = certify_modified_irs(enc, h, x, cfg, meta)
                total += 1
                if cert.method is Method.MODIFIED_IRS_FAST:
                    fast += 1
                    if not cert.abstained:
                        radii.append(cert.radius)
        mean_r = f"{np.mean(radii):.4f}" if radii else "--"
        print(f"{sigma:>6}  {fast / total:>13.3f}  {mean_r:>16}")


if __name__ == "__main__":
    main()
