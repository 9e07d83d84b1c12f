"""Standard network shapes for the three roles in the pipeline.

Feature extractor:  Dense -> ELU -> BN -> Dense -> ELU -> Dense -> ELU -> BN
Classifier:         Dense -> ELU -> Dense        (over |classes| + 1 outputs,
                    the extra slot being the out-of-distribution class)
Discriminator:      Dense -> ELU -> Dense        (2 outputs: source / target)

Widths scale with the arguments; defaults match the sizes used throughout
the experiment configs.
"""

from __future__ import annotations

import numpy as np

from alen.nn.layers import Network, batch_norm, dense, elu, grad_reverse


def build_feature_extractor(input_dim: int, hidden_dim: int,
                            latent_dim: int, rng: np.random.Generator) -> Network:
    return Network([
        dense(input_dim, hidden_dim),
        elu(hidden_dim),
        batch_norm(hidden_dim),
        dense(hidden_dim, latent_dim),
        elu(latent_dim),
        dense(latent_dim, latent_dim),
        elu(latent_dim),
        batch_norm(latent_dim),
    ], rng)


def build_classifier(latent_dim: int, class_count: int,
                     rng: np.random.Generator,
                     hidden_dim: int = 64) -> Network:
    """Classifier head over class_count + 1 logits (last = out-of-distribution)."""
    return Network([
        dense(latent_dim, hidden_dim),
        elu(hidden_dim),
        dense(hidden_dim, class_count + 1),
    ], rng)


def build_discriminator(latent_dim: int, rng: np.random.Generator,
                        hidden_dim: int = 64) -> Network:
    return Network([
        dense(latent_dim, hidden_dim),
        elu(hidden_dim),
        dense(hidden_dim, 2),
    ], rng)


def build_gradient_reversal_discriminator(latent_dim: int, scale: float,
                                          rng: np.random.Generator,
                                          hidden_dim: int = 64) -> Network:
    """Discriminator fronted by a gradient-reversal layer; used in tests to
    cross-check the explicit two-optimizer update against the reversal trick."""
    return Network([
        grad_reverse(latent_dim, scale),
        dense(latent_dim, hidden_dim),
        elu(hidden_dim),
        dense(hidden_dim, 2),
    ], rng)
