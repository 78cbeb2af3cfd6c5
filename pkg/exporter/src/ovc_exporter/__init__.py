"""Bridge from real vision backbones to the certification engine's cache
formats: noisy image embeddings (OVCE) and prompt heads (OVCP), written under
the engine's deterministic master-seed / chunk noise scheme.
"""

from .backbones import (
    BACKBONES,
    ClipTextHead,
    HashedTextHead,
    ModelLoadError,
    PromptEncodingError,
    VisionBackbone,
    load_backbone,
    load_text_head,
)
from .export import ExportJob, export_embeddings, export_prompts
from .formats import write_manifest, write_ovce, write_ovcp
from .seedmix import (
    cache_fingerprint,
    derive_master_seed,
    fnv1a64,
    gaussian_chunk,
    splitmix64,
)

__version__ = "0.1.0"
