"""Command-line orchestration: synthesize desk-scale datasets, build caches,
run the four certification modes over input sets, and report curves, scatter
pairs, and speedup tables.

Exit codes: 0 success, 2 configuration error, 3 cache miss, 4 data corruption.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cache import (
    CertMetaCache,
    build_embedding_cache,
    fit_mvn,
    load_cert_meta,
    load_embedding_cache,
    load_mvn,
    load_prompt_head,
    store_cert_meta,
    write_embedding_cache,
    write_mvn,
    write_prompt_head,
)
from .certify import (
    CertConfig,
    Certificate,
    Method,
    certify_modified_irs,
    certify_mvn_ovc,
    certify_ovc,
    certify_standard,
    derive_master_seed,
    derive_mvn_seed,
)
from .errors import CacheCorruptError, CacheMissError, ConfigError, OvcertError
from .model import PromptHead, SyntheticEncoder, InputPoint, make_synthetic_family, predict
from .noise import NoiseStream, splitmix64

MODES = ("standard", "irs", "ovc", "mvn")

DATASET_FILE = "dataset.json"
INPUTS_FILE = "inputs.npy"
LABELS_FILE = "labels.npy"
PROMPTS_DIR = "prompts"


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticDataset:
    root: Path
    spec: dict

    @property
    def n_inputs(self) -> int:
        return self.spec["n_inputs"]

    def encoder(self, pad_per_call: float | None = None) -> SyntheticEncoder:
        e = self.spec["encoder"]
        return SyntheticEncoder(
            dim_in=self.spec["dim_in"],
            dim_out=self.spec["d"],
            hidden=tuple(e["hidden"]),
            nonlinearity=e["nonlinearity"],
            weight_seed=e["weight_seed"],
            pad_per_call=e.get("pad_per_call", 0.0) if pad_per_call is None else pad_per_call,
        )

    def inputs(self) -> np.ndarray:
        return np.load(self.root / INPUTS_FILE)

    def labels(self) -> np.ndarray | None:
        p = self.root / LABELS_FILE
        return np.load(p) if p.exists() else None

    def prompt_ids(self) -> list[str]:
        return sorted(p.stem for p in (self.root / PROMPTS_DIR).glob("*.ovcp"))

    def head(self, prompt_id: str) -> PromptHead:
        return load_prompt_head(self.root / PROMPTS_DIR / f"{prompt_id}.ovcp")

    def fingerprint(self) -> str:
        return hashlib.sha256((self.root / DATASET_FILE).read_bytes()).hexdigest()[:16]


def load_dataset(data_dir: str | Path) -> SyntheticDataset:
    root = Path(data_dir)
    spec_path = root / DATASET_FILE
    if not spec_path.exists():
        raise ConfigError(f"no {DATASET_FILE} in {root}")
    spec = json.loads(spec_path.read_text())
    if spec.get("kind") != "ovc-synthetic":
        raise ConfigError(f"{spec_path}: unrecognized dataset kind {spec.get('kind')!r}")
    return SyntheticDataset(root, spec)


def cmd_gen_synthetic(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / PROMPTS_DIR).mkdir(exist_ok=True)
    if args.n_inputs < 1 or args.n_prompts < 2 or args.k < 2:
        raise ConfigError("need n-inputs >= 1, n-prompts >= 2, k >= 2")

    spec = {
        "kind": "ovc-synthetic",
        "version": 1,
        "seed": args.seed,
        "dim_in": args.dim_in,
        "d": args.d,
        "k": args.k,
        "n_inputs": args.n_inputs,
        "n_prompts": args.n_prompts,
        "jitter": args.jitter,
        "encoder": {
            "hidden": [args.hidden],
            "nonlinearity": "tanh",
            "weight_seed": splitmix64(args.seed, 1),
            "pad_per_call": args.pad_ms / 1000.0,
        },
    }
    rng = np.random.Generator(np.random.PCG64(splitmix64(args.seed, 2)))
    inputs = rng.standard_normal((args.n_inputs, args.dim_in))
    heads = make_synthetic_family(
        splitmix64(args.seed, 3), args.n_prompts, args.k, args.d, args.jitter
    )

    # Labels are the clean (noise-free) predictions of the base prompt head, so
    # certified-accuracy curves are meaningful on synthetic data.
    enc = SyntheticEncoder(
        args.dim_in, args.d, hidden=(args.hidden,), nonlinearity="tanh",
        weight_seed=spec["encoder"]["weight_seed"],
    )
    labels = np.array(
        [predict(heads[0], enc.encode(x)) for x in inputs], dtype=np.int64
    )

    (out / DATASET_FILE).write_text(json.dumps(spec, indent=2, sort_keys=True) + "\n")
    np.save(out / INPUTS_FILE, inputs)
    np.save(out / LABELS_FILE, labels)
    for head in heads:
        write_prompt_head(head, out / PROMPTS_DIR / f"{head.prompt_id}.ovcp")
    print(
        f"wrote {args.n_inputs} inputs, {args.n_prompts} prompt heads "
        f"(K={args.k}, D={args.d}) to {out}"
    )
    return 0


# ---------------------------------------------------------------------------
# Manifest and records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    mode: str
    dataset_fingerprint: str
    sigma: float
    n0: int
    n: int
    n_p: int
    alpha: float
    alpha_zeta: float
    gamma: float
    seed: int
    skip: int
    prompt_ids: tuple[str, ...]
    known_ids: tuple[str, ...]
    novel_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if set(self.known_ids) & set(self.novel_ids):
            raise ConfigError("known and novel prompt sets must be disjoint")
        if self.skip < 1:
            raise ConfigError(f"skip must be >= 1, got {self.skip}")

    @property
    def hash(self) -> str:
        payload = json.dumps(
            {k: v for k, v in self.__dict__.items()}, sort_keys=True, default=list
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def config(self) -> CertConfig:
        return CertConfig(
            sigma=self.sigma, n0=self.n0, n=self.n, n_p=self.n_p,
            alpha=self.alpha, alpha_zeta=self.alpha_zeta, gamma=self.gamma,
        )


def record_from_certificate(
    cert: Certificate, manifest_hash: str, sigma: float, label: int | None
) -> dict:
    rec = {
        "manifest": manifest_hash,
        "input_id": cert.input_id,
        "prompt_id": cert.prompt_id,
        "sigma": sigma,
        "method": cert.method.value,
        "predicted_class": cert.predicted_class,
        "abstained": cert.abstained,
        "radius": cert.radius,
        "p_a_lower": cert.p_a_lower,
        "confidence": cert.confidence,
        "heuristic": cert.heuristic,
        "samples_used": cert.samples_used,
        "encoder_calls": cert.encoder_calls,
        "wall_time": cert.wall_time,
    }
    if label is not None:
        rec["label"] = int(label)
        rec["correct"] = (not cert.abstained) and cert.predicted_class == int(label)
    return rec


def _split_prompts(
    prompt_ids: list[str], novel_count: int, split_seed: int
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Random known/novel split of the prompt set, reproducible from the seed."""
    if not 1 <= novel_count < len(prompt_ids):
        raise ConfigError(
            f"novel count must be in [1, {len(prompt_ids) - 1}], got {novel_count}"
        )
    rng = np.random.Generator(np.random.PCG64(splitmix64(split_seed, 0x5B)))
    perm = rng.permutation(len(prompt_ids))
    novel = tuple(sorted(prompt_ids[i] for i in perm[:novel_count]))
    known = tuple(sorted(prompt_ids[i] for i in perm[novel_count:]))
    return known, novel


# ---------------------------------------------------------------------------
# Cache paths
# ---------------------------------------------------------------------------


def _sig_tag(sigma: float) -> str:
    return f"{sigma:g}".replace(".", "p")


def emb_cache_path(cache_dir: Path, input_id: int, sigma: float) -> Path:
    return cache_dir / f"emb_i{input_id:05d}_s{_sig_tag(sigma)}.ovce"


def mvn_cache_path(cache_dir: Path, input_id: int, sigma: float) -> Path:
    return cache_dir / f"mvn_i{input_id:05d}_s{_sig_tag(sigma)}.ovcm"


def meta_cache_path(cache_dir: Path, input_id: int, sigma: float) -> Path:
    return cache_dir / f"meta_i{input_id:05d}_s{_sig_tag(sigma)}.jsonl"


def _default_cache_dir(arg: str | None) -> Path:
    if arg:
        return Path(arg)
    env = os.environ.get("OVC_CACHE_DIR")
    if env:
        return Path(env)
    raise ConfigError("no cache directory: pass --cache-dir or set OVC_CACHE_DIR")


# ---------------------------------------------------------------------------
# build-cache / fit-mvn
# ---------------------------------------------------------------------------


def _selected_ids(n_inputs: int, skip: int) -> list[int]:
    return list(range(0, n_inputs, skip))


def cmd_build_cache(args) -> int:
    data = load_dataset(args.data)
    cache_dir = _default_cache_dir(args.cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    cfg = CertConfig(sigma=args.sigma, n0=args.n0, n=args.n, n_p=min(args.np, args.n))
    enc = data.encoder()
    inputs = data.inputs()
    ids = _selected_ids(data.n_inputs, args.skip)
    built = skipped = 0
    for input_id in ids:
        path = emb_cache_path(cache_dir, input_id, args.sigma)
        if path.exists() and not args.force:
            skipped += 1
            continue
        stream = NoiseStream(derive_master_seed(args.seed, input_id), args.sigma)
        x = InputPoint(input_id, inputs[input_id])
        cache = build_embedding_cache(enc, x, cfg, stream)
        write_embedding_cache(cache, path)
        built += 1
        print(f"  cached input {input_id} -> {path.name} ({path.stat().st_size} bytes)")
    print(f"build-cache: {built} built, {skipped} already present in {cache_dir}")
    return 0


def cmd_fit_mvn(args) -> int:
    cache_dir = _default_cache_dir(args.cache_dir)
    paths = sorted(cache_dir.glob(f"emb_*_s{_sig_tag(args.sigma)}.ovce"))
    if not paths:
        raise CacheMissError(
            f"no embedding caches for sigma={args.sigma} in {cache_dir}"
        )
    fitted = 0
    for path in paths:
        cache = load_embedding_cache(path)
        mvn = fit_mvn(cache.rows, input_id=cache.input_id, sigma=cache.sigma)
        out = mvn_cache_path(cache_dir, cache.input_id, cache.sigma)
        write_mvn(mvn, out)
        fitted += 1
        print(
            f"  fitted input {cache.input_id}: {path.stat().st_size} -> "
            f"{out.stat().st_size} bytes (jitter {mvn.jitter_applied:g})"
        )
    print(f"fit-mvn: {fitted} parameter files in {cache_dir}")
    return 0


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------


def _certify_one_input(
    mode: str,
    input_id: int,
    data: SyntheticDataset,
    heads: list[PromptHead],
    manifest: RunManifest,
    cfg: CertConfig,
    cache_dir: Path | None,
    enc,
    inputs: np.ndarray,
    write_meta: bool,
) -> list[Certificate]:
    certs: list[Certificate] = []
    if mode == "standard":
        stream = NoiseStream(derive_master_seed(manifest.seed, input_id), cfg.sigma)
        x = InputPoint(input_id, inputs[input_id])
        meta = (
            CertMetaCache.for_stream(input_id, stream, cfg.n0) if write_meta else None
        )
        for head in heads:
            certs.append(certify_standard(enc, head, x, cfg, stream, meta))
        if meta is not None:
            store_cert_meta(meta, meta_cache_path(cache_dir, input_id, cfg.sigma))
    elif mode == "irs":
        meta = load_cert_meta(meta_cache_path(cache_dir, input_id, cfg.sigma))
        x = InputPoint(input_id, inputs[input_id])
        for head in heads:
            certs.append(certify_modified_irs(enc, head, x, cfg, meta))
    elif mode == "ovc":
        path = emb_cache_path(cache_dir, input_id, cfg.sigma)
        for head in heads:
            # Reload per certification: cache-load time is part of the cost of
            # certifying each novel prompt, and is reported as such.
            t0 = time.perf_counter()
            cache = load_embedding_cache(path)
            cert = certify_ovc(head, input_id, cfg, cache)
            certs.append(replace(cert, wall_time=time.perf_counter() - t0))
    elif mode == "mvn":
        path = mvn_cache_path(cache_dir, input_id, cfg.sigma)
        master = derive_master_seed(manifest.seed, input_id)
        for head in heads:
            t0 = time.perf_counter()
            mvn = load_mvn(path)
            cert = certify_mvn_ovc(
                head, input_id, cfg, mvn, derive_mvn_seed(master, head.prompt_id)
            )
            certs.append(replace(cert, wall_time=time.perf_counter() - t0))
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    return certs


def _missing_cache_files(mode, cache_dir, ids, sigma) -> list[Path]:
    missing = []
    for input_id in ids:
        if mode == "ovc":
            p = emb_cache_path(cache_dir, input_id, sigma)
        elif mode == "mvn":
            p = mvn_cache_path(cache_dir, input_id, sigma)
        elif mode == "irs":
            p = meta_cache_path(cache_dir, input_id, sigma)
        else:
            continue
        if not p.exists():
            missing.append(p)
    return missing


def run_certify(manifest: RunManifest, data: SyntheticDataset,
                cache_dir: Path | None, out_dir: Path, workers: int = 1) -> dict:
    cfg = manifest.config()
    mode = manifest.mode
    ids = _selected_ids(data.n_inputs, manifest.skip)
    if mode in ("irs", "ovc", "mvn") and cache_dir is None:
        raise ConfigError(f"mode {mode} requires a cache directory")
    if cache_dir is not None:
        missing = _missing_cache_files(mode, cache_dir, ids, cfg.sigma)
        if missing:
            names = ", ".join(str(p) for p in missing[:8])
            more = "" if len(missing) <= 8 else f" (+{len(missing) - 8} more)"
            raise CacheMissError(f"missing cache files: {names}{more}")

    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / f"records_{mode}.jsonl"
    done: set[tuple[int, str]] = set()
    if records_path.exists():
        for line in records_path.read_text().splitlines():
            rec = json.loads(line)
            if rec["manifest"] != manifest.hash:
                raise ConfigError(
                    f"{records_path} belongs to a different manifest "
                    f"({rec['manifest']} != {manifest.hash}); use a fresh --out"
                )
            done.add((rec["input_id"], rec["prompt_id"]))

    heads = [data.head(pid) for pid in _mode_prompt_ids(manifest)]
    labels = data.labels()
    inputs = data.inputs()
    needs_encoder = mode in ("standard", "irs")
    write_meta = mode == "standard" and cache_dir is not None
    if write_meta:
        cache_dir.mkdir(parents=True, exist_ok=True)

    todo = [i for i in ids if any((i, h.prompt_id) not in done for h in heads)]

    def work(input_id: int) -> list[Certificate]:
        pending = [h for h in heads if (input_id, h.prompt_id) not in done]
        # Per-task encoder: keeps each certificate's encoder-call count exact
        # under the worker pool (the synthetic encoder is seeded, so results
        # are identical across instances).
        enc = data.encoder() if needs_encoder else None
        return _certify_one_input(
            mode, input_id, data, pending, manifest, cfg, cache_dir, enc, inputs,
            write_meta,
        )

    all_certs: list[Certificate] = []
    t_run = time.perf_counter()
    with open(records_path, "a") as fh:
        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = pool.map(work, todo)
                for certs in results:  # map preserves input order
                    _emit(fh, certs, manifest, labels)
                    all_certs.extend(certs)
        else:
            for input_id in todo:
                certs = work(input_id)
                _emit(fh, certs, manifest, labels)
                all_certs.extend(certs)
    total_wall = time.perf_counter() - t_run

    summary = summarize(mode, all_certs, total_wall)
    (out_dir / f"summary_{mode}.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    return summary


def _emit(fh, certs, manifest, labels) -> None:
    for cert in certs:
        label = None if labels is None else int(labels[cert.input_id])
        rec = record_from_certificate(cert, manifest.hash, manifest.sigma, label)
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
    fh.flush()


def summarize(mode: str, certs: list[Certificate], total_wall: float) -> dict:
    n = len(certs)
    summary = {
        "mode": mode,
        "records": n,
        "total_wall_time": total_wall,
        "mean_wall_time": (sum(c.wall_time for c in certs) / n) if n else 0.0,
        "total_encoder_calls": sum(c.encoder_calls for c in certs),
        "abstain_rate": (sum(c.abstained for c in certs) / n) if n else 0.0,
    }
    if mode == "irs" and n:
        summary["fast_path_fraction"] = (
            sum(c.method is Method.MODIFIED_IRS_FAST for c in certs) / n
        )
    return summary


def _mode_prompt_ids(manifest: RunManifest) -> tuple[str, ...]:
    return manifest.prompt_ids


def _build_manifest(args, data: SyntheticDataset) -> RunManifest:
    all_ids = data.prompt_ids()
    novel_count = args.novel_count or max(1, round(len(all_ids) / 8))
    split_seed = args.split_seed if args.split_seed is not None else data.spec["seed"]
    known, novel = _split_prompts(all_ids, novel_count, split_seed)
    which = args.prompts or ("known" if args.mode == "standard" else "novel")
    if which == "known":
        selected = known
    elif which == "novel":
        selected = novel
    elif which == "all":
        selected = tuple(all_ids)
    else:
        raise ConfigError(f"--prompts must be known|novel|all, got {which!r}")
    return RunManifest(
        mode=args.mode,
        dataset_fingerprint=data.fingerprint(),
        sigma=args.sigma,
        n0=args.n0,
        n=args.n,
        n_p=min(args.np, args.n),
        alpha=args.alpha,
        alpha_zeta=args.alpha_zeta,
        gamma=args.gamma,
        seed=args.seed,
        skip=args.skip,
        prompt_ids=selected,
        known_ids=known,
        novel_ids=novel,
    )


def cmd_certify(args) -> int:
    data = load_dataset(args.data)
    manifest = _build_manifest(args, data)
    cache_dir = None
    if args.cache_dir or os.environ.get("OVC_CACHE_DIR"):
        cache_dir = _default_cache_dir(args.cache_dir)
    summary = run_certify(
        manifest, data, cache_dir, Path(args.out), workers=args.workers
    )
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _load_records(paths: list[str]) -> list[dict]:
    records = []
    for pattern in paths:
        p = Path(pattern)
        if not p.exists():
            raise ConfigError(f"records file not found: {p}")
        for line in p.read_text().splitlines():
            records.append(json.loads(line))
    if not records:
        raise ConfigError("no records found in the given files")
    return records


def accuracy_radius_curve(records: list[dict]) -> list[tuple[float, float]]:
    """Step-curve data: for each radius r, the fraction of records holding a
    non-abstain certificate of radius >= r (and the correct class, when labels
    are present)."""
    total = len(records)
    ok = [
        r for r in records
        if not r["abstained"] and r.get("correct", True)
    ]
    radii = sorted({0.0} | {r["radius"] for r in ok})
    curve = []
    for r in radii:
        frac = sum(1 for rec in ok if rec["radius"] >= r) / total
        curve.append((r, frac))
    return curve


def cmd_report(args) -> int:
    records = _load_records(args.records)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    by_method: dict[str, list[dict]] = {}
    for rec in records:
        by_method.setdefault(rec["method"], []).append(rec)

    for method, recs in sorted(by_method.items()):
        curve = accuracy_radius_curve(recs)
        lines = ["radius,certified_accuracy"]
        lines += [f"{r:.9g},{a:.9g}" for r, a in curve]
        (out / f"curve_{method}.csv").write_text("\n".join(lines) + "\n")

    baseline = args.baseline
    base_recs = by_method.get(baseline, [])
    base_by_key = {(r["input_id"], r["prompt_id"]): r for r in base_recs}

    speedup: dict[str, dict] = {}
    for method, recs in sorted(by_method.items()):
        total = sum(r["wall_time"] for r in recs)
        entry = {
            "records": len(recs),
            "total_wall_time": total,
            "mean_wall_time": total / len(recs),
            "total_encoder_calls": sum(r["encoder_calls"] for r in recs),
        }
        if base_recs and method != baseline:
            shared = [
                (base_by_key[(r["input_id"], r["prompt_id"])], r)
                for r in recs
                if (r["input_id"], r["prompt_id"]) in base_by_key
            ]
            if shared:
                base_total = sum(b["wall_time"] for b, _ in shared)
                meth_total = sum(m["wall_time"] for _, m in shared)
                entry["speedup_vs_" + baseline] = (
                    base_total / meth_total if meth_total > 0 else float("inf")
                )
                lines = [f"input_id,prompt_id,radius_{baseline},radius_{method}"]
                for b, m in shared:
                    rb = "" if b["radius"] is None else f"{b['radius']:.9g}"
                    rm = "" if m["radius"] is None else f"{m['radius']:.9g}"
                    lines.append(f"{b['input_id']},{b['prompt_id']},{rb},{rm}")
                (out / f"scatter_{method}_vs_{baseline}.csv").write_text(
                    "\n".join(lines) + "\n"
                )
        speedup[method] = entry

    (out / "speedup.json").write_text(json.dumps(speedup, indent=2, sort_keys=True) + "\n")
    print(json.dumps(speedup, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_cert_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--n0", type=int, default=100)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--np", type=int, default=10_000, dest="np")
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--alpha-zeta", type=float, default=0.001)
    p.add_argument("--gamma", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skip", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ovcert",
        description="Certification engine for zero-shot open-vocabulary classifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="write a synthetic dataset + prompt family")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--k", type=int, default=10)
    g.add_argument("--d", type=int, default=64)
    g.add_argument("--dim-in", type=int, default=32)
    g.add_argument("--hidden", type=int, default=64)
    g.add_argument("--n-inputs", type=int, default=100)
    g.add_argument("--n-prompts", type=int, default=16)
    g.add_argument("--jitter", type=float, default=0.1)
    g.add_argument("--pad-ms", type=float, default=0.0,
                   help="artificial per-sample encoder cost in milliseconds")
    g.set_defaults(func=cmd_gen_synthetic)

    b = sub.add_parser("build-cache", help="encode and store OVCE embedding caches")
    b.add_argument("--data", required=True)
    b.add_argument("--cache-dir", default=None)
    b.add_argument("--force", action="store_true")
    _add_cert_flags(b)
    b.set_defaults(func=cmd_build_cache)

    f = sub.add_parser("fit-mvn", help="fit OVCM Gaussian parameters from OVCE caches")
    f.add_argument("--cache-dir", default=None)
    f.add_argument("--sigma", type=float, required=True)
    f.set_defaults(func=cmd_fit_mvn)

    c = sub.add_parser("certify", help="run one certification mode over the input set")
    c.add_argument("--mode", choices=MODES, required=True)
    c.add_argument("--data", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--cache-dir", default=None)
    c.add_argument("--prompts", choices=("known", "novel", "all"), default=None)
    c.add_argument("--novel-count", type=int, default=None)
    c.add_argument("--split-seed", type=int, default=None)
    c.add_argument("--workers", type=int, default=1)
    _add_cert_flags(c)
    c.set_defaults(func=cmd_certify)

    r = sub.add_parser("report", help="emit curve, scatter, and speedup data")
    r.add_argument("--records", nargs="+", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--baseline", default="STANDARD")
    r.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CacheMissError as exc:
        print(f"cache miss: {exc}", file=sys.stderr)
        return 3
    except CacheCorruptError as exc:
        print(f"data corruption: {exc}", file=sys.stderr)
        return 4
    except OvcertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
