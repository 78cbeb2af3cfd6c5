"""Vision backbones and prompt-text encoders.

Image side: torchvision models with the classification head removed, exposing
the pooled penultimate features (resnet18 -> 512, googlenet -> 1024, the two
embedding widths the engine's consumers expect). Pretrained weights are
attempted first; in airgapped environments the loader can fall back to a
seeded random initialization when explicitly allowed; architecture and
dimensions are unchanged, only the weights are untrained.

Text side: a local CLIP checkpoint directory (via transformers) when one is
available, otherwise a deterministic hashed-token projection so prompt heads
can be produced fully offline.
"""

from __future__ import annotations

import warnings

import numpy as np
import torch

from .seedmix import MASK64, fnv1a64, splitmix64


class ModelLoadError(RuntimeError):
    pass


class PromptEncodingError(ValueError):
    pass


# backbone name -> (constructor name, embedding dim)
BACKBONES = {
    "resnet18": ("resnet18", 512),
    "googlenet": ("googlenet", 1024),
}


class VisionBackbone:
    """A torchvision model truncated to its pooled feature output."""

    def __init__(self, name: str, model: torch.nn.Module, dim: int, pretrained: bool):
        self.name = name
        self.model = model.eval()
        self.dim = dim
        self.pretrained = pretrained

    @torch.no_grad()
    def embed(self, batch: np.ndarray) -> np.ndarray:
        """(m, C, H, W) float32 batch -> (m, dim) float32 embeddings."""
        t = torch.from_numpy(np.ascontiguousarray(batch, dtype=np.float32))
        out = self.model(t)
        if out.ndim != 2 or out.shape[1] != self.dim:
            raise ModelLoadError(
                f"{self.name} produced shape {tuple(out.shape)}, expected (m, {self.dim})"
            )
        return out.numpy().astype(np.float32)


def load_backbone(
    name: str, allow_random_init: bool = False, weight_seed: int = 0
) -> VisionBackbone:
    import torchvision.models as tvm

    if name not in BACKBONES:
        raise ModelLoadError(
            f"unknown backbone {name!r}; available: {sorted(BACKBONES)}"
        )
    ctor_name, dim = BACKBONES[name]
    ctor = getattr(tvm, ctor_name)
    pretrained = True
    try:
        model = ctor(weights="DEFAULT")
    except Exception as exc:
        if not allow_random_init:
            raise ModelLoadError(
                f"could not load pretrained weights for {name} ({exc}); "
                "pass allow_random_init=True to proceed with a seeded "
                "random initialization"
            ) from exc
        warnings.warn(
            f"pretrained weights for {name} unavailable ({type(exc).__name__}); "
            f"using seeded random initialization (weight_seed={weight_seed})",
            RuntimeWarning,
            stacklevel=2,
        )
        torch.manual_seed(weight_seed)
        kwargs = {"weights": None}
        if ctor_name == "googlenet":
            kwargs.update(aux_logits=False, init_weights=True)
        model = ctor(**kwargs)
        pretrained = False
    # expose pooled features instead of class logits
    model.fc = torch.nn.Identity()
    return VisionBackbone(name, model, dim, pretrained)


class HashedTextHead:
    """Deterministic offline prompt encoder: tokenize, map each token to a
    seeded Gaussian direction, mean-pool, unit-normalize. Not a trained text
    tower; a stand-in that keeps the full export pipeline runnable with no
    checkpoint on disk."""

    SALT = 0x5445585448454144  # "TEXTHEAD"

    def __init__(self, dim: int):
        self.dim = int(dim)

    def _tokenize(self, prompt) -> list[str]:
        if not isinstance(prompt, str):
            raise PromptEncodingError(f"prompt is not a string: {prompt!r}")
        tokens = [t for t in "".join(
            c.lower() if c.isalnum() else " " for c in prompt
        ).split() if t]
        if not tokens:
            raise PromptEncodingError(f"prompt tokenizes to nothing: {prompt!r}")
        return tokens

    def encode(self, prompts: list[str]) -> np.ndarray:
        rows = np.zeros((len(prompts), self.dim), dtype=np.float64)
        for i, prompt in enumerate(prompts):
            vecs = []
            for token in self._tokenize(prompt):
                seed = splitmix64(self.SALT, fnv1a64(token.encode("utf-8")) & MASK64)
                rng = np.random.Generator(np.random.PCG64(seed))
                vecs.append(rng.standard_normal(self.dim))
            pooled = np.mean(vecs, axis=0)
            norm = np.linalg.norm(pooled)
            if norm == 0.0:
                raise PromptEncodingError(f"prompt collapsed to zero: {prompt!r}")
            rows[i] = pooled / norm
        return rows.astype(np.float32)


class ClipTextHead:
    """Text tower of a local CLIP checkpoint directory (transformers format)."""

    def __init__(self, checkpoint_dir: str):
        from transformers import CLIPModel, CLIPProcessor

        try:
            self.model = CLIPModel.from_pretrained(checkpoint_dir).eval()
            self.processor = CLIPProcessor.from_pretrained(checkpoint_dir)
        except Exception as exc:
            raise ModelLoadError(
                f"could not load CLIP checkpoint from {checkpoint_dir}: {exc}"
            ) from exc
        self.dim = self.model.config.projection_dim

    @torch.no_grad()
    def encode(self, prompts: list[str]) -> np.ndarray:
        for p in prompts:
            if not isinstance(p, str) or not p.strip():
                raise PromptEncodingError(f"prompt is empty or not a string: {p!r}")
        try:
            inputs = self.processor(text=prompts, return_tensors="pt", padding=True)
        except Exception as exc:
            raise PromptEncodingError(f"tokenization failed: {exc}") from exc
        feats = self.model.get_text_features(**inputs)
        feats = feats / feats.norm(dim=-1, keepdim=True)
        return feats.numpy().astype(np.float32)


def load_text_head(dim: int, clip_checkpoint: str | None = None):
    if clip_checkpoint:
        return ClipTextHead(clip_checkpoint)
    return HashedTextHead(dim)
