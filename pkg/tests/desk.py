"""Shared desk-scale model builders for the certification tests."""

import numpy as np

from ovcert.model import InputPoint, PromptHead, SyntheticEncoder, make_synthetic_family


def mlp_model(seed=5, dim_in=8, d=16, k=5, jitter=0.1, n_prompts=4):
    """A small tanh MLP encoder plus a family of nearby prompt heads."""
    enc = SyntheticEncoder(dim_in, d, weight_seed=seed)
    heads = make_synthetic_family(seed + 1, n_prompts, k, d, jitter)
    return enc, heads


def inputs_for(enc, n_inputs, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    return [
        InputPoint(i, scale * rng.standard_normal(enc.dim_in))
        for i in range(n_inputs)
    ]


def dominant_model(k=4):
    """Identity encoder + identity head + strong one-hot input: one class wins
    every draw at small sigma."""
    enc = SyntheticEncoder.identity(k)
    head = PromptHead(np.eye(k), [f"c{i}" for i in range(k)], "id-head")
    x = InputPoint(0, np.concatenate([[10.0], np.zeros(k - 1)]))
    return enc, head, x


def balanced_model():
    """Identity encoder, two orthogonal prompt rows, input at the decision
    boundary: predictions are a coin flip under any sigma."""
    enc = SyntheticEncoder.identity(2)
    head = PromptHead(np.eye(2), ["a", "b"], "bal-head")
    x = InputPoint(0, np.zeros(2))
    return enc, head, x
