"""Source-free adaptation of the model to unlabeled drifting targets.

The only source-domain artifact available here is the prototype bank: class
memories supply labeled latent representatives for the classifier retention
loss, and the global/class geometry never needs raw source rows again.  The
feature extractor is pushed toward domain confusion by giving it the exact
negation of the discriminator's own update, computed from one shared
optimizer state.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from alen.data import DomainBatch
from alen.exceptions import ShapeError
from alen.foresighted import SourceModel
from alen.nn import (Adam, Network, accumulate_grads, apply_signed_update,
                     adam_step, build_discriminator, softmax_cross_entropy)
from alen.prototypes import PrototypeBank, sample

TWO_LN_2 = 2.0 * math.log(2.0)


@dataclass
class AdaptConfig:
    n: int = 64                   # target rows per iteration
    max_iters: int = 2000
    convergence_tol: float = 0.05
    convergence_window: int = 50
    samples_per_class: int = 16
    seed: int | None = None
    adversarial_lambda: float = 1.0
    adversarial_ramp_iters: int = 0
    lr: float = 1e-3
    discriminator_hidden_dim: int = 64
    reset_discriminator: bool = False

    def __post_init__(self):
        if self.n < 1 or self.samples_per_class < 1:
            raise ShapeError("sample sizes must be >= 1")
        if self.adversarial_ramp_iters < 0:
            raise ShapeError("adversarial_ramp_iters must be >= 0")


@dataclass
class TargetModel:
    feature_extractor: Network
    classifier: Network
    discriminator: Network

    def logits(self, x: np.ndarray) -> np.ndarray:
        f_mode = self.feature_extractor.training
        g_mode = self.classifier.training
        z = self.feature_extractor.eval().forward(x)
        out = self.classifier.eval().forward(z)
        self.feature_extractor._cache = None
        self.classifier._cache = None
        self.feature_extractor.training = f_mode
        self.classifier.training = g_mode
        return out

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def copy(self) -> "TargetModel":
        return TargetModel(self.feature_extractor.copy(),
                           self.classifier.copy(),
                           self.discriminator.copy())


@dataclass
class IterationStats:
    iteration: int
    retention_loss: float
    confusion_loss: float
    discriminator_accuracy: float


@dataclass
class IncrementTrace:
    increment_index: int
    history: list[IterationStats]
    snapshot: TargetModel


def write_adaptation_log(history: list[IterationStats],
                         path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "L_c", "L_d", "discriminator_accuracy"])
        for s in history:
            writer.writerow([s.iteration, f"{s.retention_loss:.17g}",
                             f"{s.confusion_loss:.17g}",
                             f"{s.discriminator_accuracy:.17g}"])


def init_from_source(source: SourceModel, rng: np.random.Generator,
                     discriminator_hidden_dim: int = 64) -> TargetModel:
    """Deep-copy the trained extractor and classifier; fresh discriminator."""
    latent_dim = source.feature_extractor.out_dim
    d = build_discriminator(latent_dim, rng,
                            hidden_dim=discriminator_hidden_dim)
    return TargetModel(source.feature_extractor.copy(),
                       source.classifier.copy(), d)


def retention_loss(model: TargetModel, bank: PrototypeBank,
                   samples_per_class: int, rng: np.random.Generator
                   ) -> tuple[float, dict]:
    """Cross-entropy of the classifier on prototype-sampled latents.

    The latents come straight from the bank, so the gradient path touches
    the classifier only; the feature extractor and discriminator stay out.
    """
    class_count = model.classifier.out_dim - 1
    if bank.class_ids != list(range(class_count)):
        raise ShapeError(f"bank classes {bank.class_ids} do not cover "
                         f"0..{class_count - 1}")
    rows = []
    labels = []
    for cid in bank.class_ids:
        rows.append(sample(bank.per_class[cid], samples_per_class, rng))
        labels.extend([cid] * samples_per_class)
    latents = np.concatenate(rows, axis=0)
    logits = model.classifier.forward(latents)
    loss, d_logits = softmax_cross_entropy(logits, np.asarray(labels))
    g_grads, _ = model.classifier.backward(d_logits)
    return loss, g_grads


@dataclass
class ConfusionResult:
    loss: float
    discriminator_grads: dict
    feature_grads: dict
    discriminator_accuracy: float


def domain_confusion_loss(model: TargetModel, source_latents: np.ndarray,
                          target_inputs: np.ndarray) -> ConfusionResult:
    """Binary domain cross-entropy: source latents labeled 0, extracted
    target features labeled 1.  Gradients land on the discriminator (both
    terms) and on the feature extractor (target term only)."""
    if source_latents.ndim != 2 or target_inputs.ndim != 2:
        raise ShapeError("both batches must be 2-D")
    if source_latents.shape[1] != model.discriminator.in_dim:
        raise ShapeError("source latents do not match discriminator width")
    d = model.discriminator
    src_logits = d.forward(source_latents)
    src_loss, src_grad = softmax_cross_entropy(
        src_logits, np.zeros(source_latents.shape[0], dtype=np.int64))
    d_grads, _ = d.backward(src_grad)
    target_latents = model.feature_extractor.forward(target_inputs)
    tgt_logits = d.forward(target_latents)
    tgt_loss, tgt_grad = softmax_cross_entropy(
        tgt_logits, np.ones(target_inputs.shape[0], dtype=np.int64))
    d_grads_tgt, d_latents = d.backward(tgt_grad)
    accumulate_grads(d_grads, d_grads_tgt)
    f_grads, _ = model.feature_extractor.backward(d_latents)
    correct = (np.sum(np.argmax(src_logits, axis=1) == 0)
               + np.sum(np.argmax(tgt_logits, axis=1) == 1))
    acc = float(correct) / (source_latents.shape[0] + target_inputs.shape[0])
    return ConfusionResult(src_loss + tgt_loss, d_grads, f_grads, acc)


def adapt_increment(model: TargetModel, bank: PrototypeBank,
                    target_data: DomainBatch, config: AdaptConfig,
                    rng: np.random.Generator | None = None
                    ) -> tuple[TargetModel, list[IterationStats]]:
    """Run the per-increment loop on one unlabeled target batch, mutating
    the model in place.

    Each iteration: classifier retention step, then a discriminator descent
    step whose feature-extractor portion is applied sign-flipped (scaled by
    adversarial_lambda) from the same optimizer state.  Stops early once the
    trailing-window mean confusion loss sits at the chance level 2 ln 2.

    With adversarial_ramp_iters > 0 the extractor's share of the update is
    scaled by min(1, iteration / ramp) so a freshly initialized
    discriminator cannot push the extractor around with noise gradients,
    and the convergence window only starts counting after the ramp ends
    (the loss hovers at chance while the discriminator warms up, which
    would otherwise trip the stop condition before any alignment happens).
    """
    if target_data.n == 0:
        raise ShapeError("target increment is empty")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    opt_g = Adam(lr=config.lr)
    opt_shared = Adam(lr=config.lr)
    # the extractor runs with frozen normalization statistics: prototypes
    # were fitted from eval-mode features and scoring happens in eval mode,
    # so training-mode batch statistics would hand the discriminator an
    # artifactual cue and shift what the bank describes
    model.feature_extractor.eval()
    model.classifier.train()
    model.discriminator.train()
    history: list[IterationStats] = []
    for iteration in range(1, config.max_iters + 1):
        l_c, g_grads = retention_loss(model, bank,
                                      config.samples_per_class, rng)
        adam_step(model.classifier.params, g_grads, opt_g)
        source_latents = np.concatenate(
            [sample(bank.per_class[c], config.samples_per_class, rng)
             for c in bank.class_ids], axis=0)
        take = min(config.n, target_data.n)
        idx = rng.choice(target_data.n, size=take, replace=False)
        result = domain_confusion_loss(model, source_latents,
                                       target_data.features[idx])
        joint = {f"d.{k}": v for k, v in result.discriminator_grads.items()}
        joint.update({f"f.{k}": v
                      for k, v in result.feature_grads.items()})
        deltas = opt_shared.compute_deltas(joint)
        apply_signed_update(
            model.discriminator.params,
            {k[2:]: v for k, v in deltas.items() if k.startswith("d.")}, 1.0)
        ramp = config.adversarial_ramp_iters
        scale = min(1.0, iteration / ramp) if ramp else 1.0
        apply_signed_update(
            model.feature_extractor.params,
            {k[2:]: v for k, v in deltas.items() if k.startswith("f.")},
            -scale * config.adversarial_lambda)
        history.append(IterationStats(iteration, l_c, result.loss,
                                      result.discriminator_accuracy))
        if iteration >= config.adversarial_ramp_iters + config.convergence_window:
            window = [s.confusion_loss
                      for s in history[-config.convergence_window:]]
            if abs(float(np.mean(window)) - TWO_LN_2) < config.convergence_tol:
                break
    model.classifier.eval()
    model.discriminator.eval()
    return model, history


def adapt_stream(source: SourceModel, increments: list[DomainBatch],
                 config: AdaptConfig,
                 rng: np.random.Generator | None = None
                 ) -> tuple[TargetModel, list[IncrementTrace]]:
    """Chain adapt_increment over an ordered unlabeled stream, carrying the
    model forward.  The prototype bank is frozen throughout: no source rows
    are ever revisited."""
    if not increments:
        raise ShapeError("need at least one increment")
    if source.bank is None:
        raise ShapeError("source model has no fitted prototype bank")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    model = init_from_source(
        source, rng, discriminator_hidden_dim=config.discriminator_hidden_dim)
    traces: list[IncrementTrace] = []
    for batch in increments:
        if config.reset_discriminator and traces:
            model.discriminator = build_discriminator(
                source.feature_extractor.out_dim, rng,
                hidden_dim=config.discriminator_hidden_dim)
        unlabeled = DomainBatch(batch.features, None, batch.domain_id,
                                batch.increment_index)
        _, history = adapt_increment(model, source.bank, unlabeled,
                                     config, rng)
        traces.append(IncrementTrace(batch.increment_index, history,
                                     model.copy()))
    return model, traces
