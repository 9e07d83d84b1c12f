"""Minimal float64 neural-network core: layers, losses, Adam, checkpoints."""

from alen.nn.architectures import (build_classifier, build_discriminator,
                                   build_feature_extractor,
                                   build_gradient_reversal_discriminator)
from alen.nn.checkpoint import load_network, save_network
from alen.nn.gradcheck import (FD_STEP, FD_TOLERANCE, GradCheckResult,
                               analytic_gradients, check_grad_reverse,
                               fd_gradients, max_relative_error,
                               relative_error, run_gradcheck_suite)
from alen.nn.layers import (LayerKind, LayerSpec, Network, accumulate_grads,
                            batch_norm, dense, elu, grad_reverse)
from alen.nn.losses import predict_labels, softmax, softmax_cross_entropy
from alen.nn.optim import Adam, adam_step, apply_signed_update

__all__ = [
    "Adam", "FD_STEP", "FD_TOLERANCE", "GradCheckResult", "LayerKind",
    "LayerSpec", "Network", "accumulate_grads", "adam_step",
    "analytic_gradients", "apply_signed_update", "batch_norm",
    "build_classifier", "build_discriminator", "build_feature_extractor",
    "build_gradient_reversal_discriminator", "check_grad_reverse", "dense",
    "elu", "fd_gradients", "grad_reverse", "load_network",
    "max_relative_error", "predict_labels", "relative_error",
    "run_gradcheck_suite", "save_network", "softmax",
    "softmax_cross_entropy",
]
