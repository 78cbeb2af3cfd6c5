"""Export jobs: noisy image embeddings to OVCE files and prompt heads to OVCP
files, under the engine's master-seed / chunk noise scheme.

Noise is applied in the model's transformed input space: the dataset file is
expected to hold already-preprocessed tensors, and the certified radius lives
in that space.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backbones import BACKBONES, VisionBackbone, load_backbone, load_text_head
from .formats import write_manifest, write_ovce, write_ovcp
from .seedmix import (
    DEFAULT_CHUNK_SIZE,
    derive_master_seed,
    iter_noise_rows,
    selection_chunks,
)


@dataclass
class ExportJob:
    model: str
    dataset_path: str
    input_ids: list[int]
    sigma: float
    n0: int
    n: int
    master_seed: int
    out_dir: str
    chunk_size: int = DEFAULT_CHUNK_SIZE
    allow_random_init: bool = False
    transform_note: str = "inputs pre-transformed; noise added post-transform"

    def __post_init__(self) -> None:
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.n0 < 1 or self.n < 1:
            raise ValueError("n0 and n must be >= 1")


def _sig_tag(sigma: float) -> str:
    return f"{sigma:g}".replace(".", "p")


def _embed_phase(backbone: VisionBackbone, x: np.ndarray, master: int, sigma: float,
                 count: int, chunk_size: int, chunk_offset: int) -> list[np.ndarray]:
    flat_dim = int(np.prod(x.shape))
    parts = []
    for noise in iter_noise_rows(master, sigma, count, flat_dim, chunk_size, chunk_offset):
        batch = (x[None, ...] + noise.reshape((-1,) + x.shape)).astype(np.float32)
        parts.append(backbone.embed(batch))
    return parts


def export_embeddings(job: ExportJob, backbone: VisionBackbone | None = None) -> list[Path]:
    """Encode all n0+n noisy draws per input and write one OVCE file each,
    plus a checksum manifest. Selection rows come from chunks [0, c0),
    estimation rows from chunks [c0, ...), matching the engine's layout."""
    if backbone is None:
        backbone = load_backbone(job.model, job.allow_random_init)
    data = np.load(job.dataset_path)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    c0 = selection_chunks(job.n0, job.chunk_size)

    written: dict[str, int] = {}
    paths = []
    for input_id in job.input_ids:
        if not 0 <= input_id < data.shape[0]:
            raise ValueError(f"input id {input_id} outside dataset of {data.shape[0]}")
        x = np.asarray(data[input_id], dtype=np.float64)
        master = derive_master_seed(job.master_seed, input_id)
        rows = np.concatenate(
            _embed_phase(backbone, x, master, job.sigma, job.n0, job.chunk_size, 0)
            + _embed_phase(backbone, x, master, job.sigma, job.n, job.chunk_size, c0)
        )
        if rows.shape != (job.n0 + job.n, backbone.dim):
            raise ValueError(
                f"embedding block shape {rows.shape} != "
                f"({job.n0 + job.n}, {backbone.dim})"
            )
        name = f"emb_i{input_id:05d}_s{_sig_tag(job.sigma)}.ovce"
        checksum = write_ovce(
            out_dir / name, rows,
            input_id=input_id, sigma=job.sigma, master_seed=master,
            n0=job.n0, n=job.n, chunk_size=job.chunk_size,
        )
        written[name] = checksum
        paths.append(out_dir / name)
    write_manifest(out_dir, written, transform_note=job.transform_note)
    return paths


def export_prompts(
    model: str | VisionBackbone,
    prompts: list[str],
    out_path: str | Path,
    prompt_id: str,
    labels: list[str] | None = None,
    clip_checkpoint: str | None = None,
    allow_random_init: bool = False,
) -> Path:
    """Encode class-prompt strings into a K x D unit-row OVCP head.

    With a local CLIP checkpoint the real text tower is used; otherwise a
    deterministic hashed-token projection at the vision backbone's width.
    """
    if isinstance(model, VisionBackbone):
        dim = model.dim
    elif model in BACKBONES:
        dim = BACKBONES[model][1]
    else:
        dim = load_backbone(model, allow_random_init).dim
    head = load_text_head(dim, clip_checkpoint)
    rows = head.encode(list(prompts))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_ovcp(out_path, rows, labels or list(prompts), prompt_id)
    return out_path
