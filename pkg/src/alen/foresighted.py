"""Base training on the labeled source domain.

After a cross-entropy warm-up, training alternates per minibatch iteration
between two arms: the separability arm pulls latent features toward their
class prototypes (feature extractor only), and the classification arm runs
cross-entropy over real classes plus prototype-rejection negatives labeled
with the extra out-of-distribution slot (feature extractor and classifier).
Prototypes are refit from eval-mode features at every epoch boundary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from alen.data import DomainBatch
from alen.exceptions import ShapeError
from alen.nn import (Adam, Network, adam_step, build_classifier,
                     build_feature_extractor, softmax_cross_entropy)
from alen.prototypes import (PrototypeBank, class_separability_loss,
                             fit_prototypes, identify_negative_samples)

DEFAULT_RIDGE = 1e-6


@dataclass
class ForesightedConfig:
    n_src: int = 64              # source minibatch rows
    n_neg: int = 64              # negatives per classification iteration
    k_sigma: float = 3.0
    max_epochs: int = 100
    convergence_tol: float = 1e-4
    convergence_patience: int = 3
    warmup_epochs: int = 1
    seed: int | None = None
    lr: float = 1e-3
    hidden_dim: int = 64
    latent_dim: int = 16
    classifier_hidden_dim: int = 64
    ridge: float = DEFAULT_RIDGE
    separability_enabled: bool = True

    def __post_init__(self):
        if self.n_src < 1 or self.n_neg < 1:
            raise ShapeError("batch sizes must be >= 1")
        if self.max_epochs < 1:
            raise ShapeError("max_epochs must be >= 1")


@dataclass
class SourceModel:
    feature_extractor: Network
    classifier: Network
    bank: PrototypeBank | None
    class_count: int

    def latents(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode features; forward cache cleared afterward."""
        was_training = self.feature_extractor.training
        out = self.feature_extractor.eval().forward(x)
        self.feature_extractor._cache = None
        self.feature_extractor.training = was_training
        return out

    def logits(self, x: np.ndarray) -> np.ndarray:
        z = self.latents(x)
        was_training = self.classifier.training
        out = self.classifier.eval().forward(z)
        self.classifier._cache = None
        self.classifier.training = was_training
        return out

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)


@dataclass
class EpochStats:
    epoch: int
    mean_ls1: float | None
    mean_ls2: float
    train_accuracy: float
    negatives_accepted: int


def write_training_log(history: list[EpochStats], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_Ls1", "mean_Ls2",
                         "train_accuracy", "negatives_accepted"])
        for s in history:
            ls1 = "" if s.mean_ls1 is None else f"{s.mean_ls1:.17g}"
            writer.writerow([s.epoch, ls1, f"{s.mean_ls2:.17g}",
                             f"{s.train_accuracy:.17g}",
                             s.negatives_accepted])


def build_source_model(input_dim: int, class_count: int,
                       config: ForesightedConfig,
                       rng: np.random.Generator) -> SourceModel:
    f = build_feature_extractor(input_dim, config.hidden_dim,
                                config.latent_dim, rng)
    g = build_classifier(config.latent_dim, class_count, rng,
                         hidden_dim=config.classifier_hidden_dim)
    return SourceModel(f, g, bank=None, class_count=class_count)


def _minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def classification_loss(model: SourceModel, source_features: np.ndarray,
                        source_labels: np.ndarray, negatives: np.ndarray,
                        negative_labels: np.ndarray
                        ) -> tuple[float, dict, dict]:
    """Mean source cross-entropy plus mean negative cross-entropy.

    Negatives are latent rows: they skip the feature extractor and enter
    the classifier directly, so only the source term backpropagates into
    the extractor.  Returns (loss, extractor grads, classifier grads).
    """
    ood = model.class_count
    if negatives.shape[0] and not np.all(negative_labels == ood):
        raise ShapeError(f"negative rows must carry the extra class index "
                         f"{ood}")
    if np.any(source_labels >= ood):
        raise ShapeError("source labels must be real classes")
    n_src = source_features.shape[0]
    n_neg = negatives.shape[0]
    latents = model.feature_extractor.forward(source_features)
    stacked = np.concatenate([latents, negatives], axis=0) if n_neg else latents
    logits = model.classifier.forward(stacked)
    src_loss, src_grad = softmax_cross_entropy(logits[:n_src], source_labels)
    loss = src_loss
    d_logits = np.zeros_like(logits)
    d_logits[:n_src] = src_grad
    if n_neg:
        neg_loss, neg_grad = softmax_cross_entropy(logits[n_src:],
                                                   negative_labels)
        loss += neg_loss
        d_logits[n_src:] = neg_grad
    g_grads, d_stacked = model.classifier.backward(d_logits)
    f_grads, _ = model.feature_extractor.backward(d_stacked[:n_src])
    return loss, f_grads, g_grads


def warmup(model: SourceModel, dataset: DomainBatch,
           config: ForesightedConfig, rng: np.random.Generator,
           opt_f: Adam | None = None, opt_g: Adam | None = None
           ) -> SourceModel:
    """Plain cross-entropy epochs over the real classes; the extra
    out-of-distribution logit sees no positive examples here."""
    if dataset.labels is None or dataset.n == 0:
        raise ShapeError("warmup needs a non-empty labeled dataset")
    opt_f = opt_f or Adam(lr=config.lr)
    opt_g = opt_g or Adam(lr=config.lr)
    model.feature_extractor.train()
    model.classifier.train()
    for _ in range(config.warmup_epochs):
        for idx in _minibatches(dataset.n, config.n_src, rng):
            latents = model.feature_extractor.forward(dataset.features[idx])
            logits = model.classifier.forward(latents)
            _, d_logits = softmax_cross_entropy(logits, dataset.labels[idx])
            g_grads, d_latents = model.classifier.backward(d_logits)
            f_grads, _ = model.feature_extractor.backward(d_latents)
            adam_step(model.classifier.params, g_grads, opt_g)
            adam_step(model.feature_extractor.params, f_grads, opt_f)
    return model


def _refit_bank(model: SourceModel, dataset: DomainBatch,
                config: ForesightedConfig) -> PrototypeBank:
    return fit_prototypes(model.latents(dataset.features), dataset.labels,
                          k_sigma=config.k_sigma, ridge=config.ridge)


def foresighted_train(dataset: DomainBatch, config: ForesightedConfig,
                      rng: np.random.Generator | None = None
                      ) -> tuple[SourceModel, list[EpochStats]]:
    """Full base-training loop; returns the trained model (with its fitted
    prototype bank) and the per-epoch history."""
    if dataset.labels is None:
        raise ShapeError("base training needs labels")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    class_count = int(dataset.labels.max()) + 1
    present = set(np.unique(dataset.labels).tolist())
    if present != set(range(class_count)):
        raise ShapeError(f"labels must cover 0..{class_count - 1}; "
                         f"got {sorted(present)}")
    model = build_source_model(dataset.dim, class_count, config, rng)
    opt_f = Adam(lr=config.lr)
    opt_g = Adam(lr=config.lr)
    warmup(model, dataset, config, rng, opt_f, opt_g)
    bank = _refit_bank(model, dataset, config)
    history: list[EpochStats] = []
    iteration = 0
    prev_total = None
    stall = 0
    model.feature_extractor.train()
    model.classifier.train()
    for epoch in range(1, config.max_epochs + 1):
        ls1_vals: list[float] = []
        ls2_vals: list[float] = []
        negatives_accepted = 0
        for idx in _minibatches(dataset.n, config.n_src, rng):
            iteration += 1
            run_separability = (config.separability_enabled
                                and iteration % 2 == 0)
            if run_separability:
                latents = model.feature_extractor.forward(
                    dataset.features[idx])
                loss, d_latents = class_separability_loss(
                    bank, latents, dataset.labels[idx])
                f_grads, _ = model.feature_extractor.backward(d_latents)
                adam_step(model.feature_extractor.params, f_grads, opt_f)
                ls1_vals.append(loss)
            else:
                negatives, neg_labels = identify_negative_samples(
                    bank, config.n_neg, rng)
                negatives_accepted += negatives.shape[0]
                loss, f_grads, g_grads = classification_loss(
                    model, dataset.features[idx], dataset.labels[idx],
                    negatives, neg_labels)
                adam_step(model.feature_extractor.params, f_grads, opt_f)
                adam_step(model.classifier.params, g_grads, opt_g)
                ls2_vals.append(loss)
        bank = _refit_bank(model, dataset, config)
        train_acc = float(np.mean(
            model.predict(dataset.features) == dataset.labels))
        mean_ls1 = float(np.mean(ls1_vals)) if ls1_vals else None
        mean_ls2 = float(np.mean(ls2_vals)) if ls2_vals else 0.0
        history.append(EpochStats(epoch, mean_ls1, mean_ls2, train_acc,
                                  negatives_accepted))
        total = (mean_ls1 or 0.0) + mean_ls2
        if prev_total is not None:
            rel = (prev_total - total) / max(abs(prev_total), 1e-12)
            stall = stall + 1 if rel < config.convergence_tol else 0
            if stall >= config.convergence_patience:
                break
        prev_total = total
    model.bank = bank
    model.feature_extractor.eval()
    model.classifier.eval()
    return model, history
