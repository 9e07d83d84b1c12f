"""Gaussian class prototypes over latent features.

A prototype is the sample mean and (n-1)-normalized covariance of one
class's feature rows, ridge-floored so the Cholesky factorization always
succeeds.  The bank additionally carries a global prototype fitted on all
rows; rejection sampling against it yields out-of-distribution negatives,
and the per-class log-densities drive the separability loss.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Final

import numpy as np

from alen.exceptions import EstimationError, ParseError, ShapeError

GLOBAL: Final = "global"
DEFAULT_K_SIGMA = 3.0
DEFAULT_RIDGE = 1e-6
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianPrototype:
    class_id: int | str
    mean: np.ndarray
    covariance: np.ndarray
    chol_lower: np.ndarray
    sample_count: int

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def log_det(self) -> float:
        """log det(covariance + ridge I), from the stored factor."""
        return 2.0 * float(np.log(np.diag(self.chol_lower)).sum())


def _fit_one(class_id: int | str, rows: np.ndarray, ridge: float
             ) -> GaussianPrototype:
    n = rows.shape[0]
    if n < 2:
        raise EstimationError(
            f"class {class_id!r} has {n} sample(s); covariance needs >= 2")
    mu = rows.mean(axis=0)
    centered = rows - mu
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    ridged = cov + ridge * np.eye(rows.shape[1])
    try:
        chol = np.linalg.cholesky(ridged)
    except np.linalg.LinAlgError as exc:
        raise EstimationError(
            f"class {class_id!r}: covariance not positive definite "
            f"even after ridge {ridge}") from exc
    return GaussianPrototype(class_id, mu, cov, chol, n)


@dataclass(frozen=True)
class PrototypeBank:
    per_class: dict[int, GaussianPrototype]
    global_proto: GaussianPrototype
    latent_dim: int
    k_sigma: float = DEFAULT_K_SIGMA
    ridge: float = DEFAULT_RIDGE

    @property
    def class_ids(self) -> list[int]:
        return sorted(self.per_class)

    @property
    def class_count(self) -> int:
        return len(self.per_class)

    @property
    def ood_label(self) -> int:
        """Index of the extra classifier slot reserved for negatives."""
        return len(self.per_class)


def fit_prototypes(features, labels, k_sigma: float = DEFAULT_K_SIGMA,
                   ridge: float = DEFAULT_RIDGE) -> PrototypeBank:
    """Per-class and global Gaussian prototypes from labeled feature rows."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.ndim != 2:
        raise ShapeError(f"features must be 2-D, got ndim={features.ndim}")
    if labels.shape != (features.shape[0],):
        raise ShapeError(f"labels shape {labels.shape} does not match "
                         f"{features.shape[0]} feature rows")
    per_class = {}
    for cid in sorted(set(int(c) for c in labels)):
        per_class[cid] = _fit_one(cid, features[labels == cid], ridge)
    if not per_class:
        raise EstimationError("no samples given")
    global_proto = _fit_one(GLOBAL, features, ridge)
    return PrototypeBank(per_class, global_proto, features.shape[1],
                         k_sigma=k_sigma, ridge=ridge)


def _whiten(proto: GaussianPrototype, diffs: np.ndarray) -> np.ndarray:
    """Solve L z = diff per row; squared row norms are Mahalanobis²."""
    return np.linalg.solve(proto.chol_lower, diffs.T).T


def mahalanobis(proto: GaussianPrototype, u) -> float:
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (proto.dim,):
        raise ShapeError(f"vector has shape {u.shape}, prototype dim is "
                         f"{proto.dim}")
    z = _whiten(proto, (u - proto.mean)[None, :])
    return float(np.sqrt((z * z).sum()))


def mahalanobis_rows(proto: GaussianPrototype, rows: np.ndarray) -> np.ndarray:
    """Vectorized distance of each row to one prototype."""
    z = _whiten(proto, rows - proto.mean)
    return np.sqrt((z * z).sum(axis=1))


def sample(proto: GaussianPrototype, n: int, rng: np.random.Generator
           ) -> np.ndarray:
    if n < 1:
        raise ShapeError(f"need n >= 1 draws, got {n}")
    z = rng.standard_normal((n, proto.dim))
    return proto.mean + z @ proto.chol_lower.T


def identify_negative_samples(bank: PrototypeBank, n_neg: int,
                              rng: np.random.Generator,
                              max_attempts: int | None = None
                              ) -> tuple[np.ndarray, np.ndarray]:
    """Rejection-sample the global prototype for points far from every class.

    A draw u is kept iff min over classes of mahalanobis(class proto, u)
    exceeds the bank's k_sigma.  Keeps at most n_neg rows; if max_attempts
    draws (default 50 * n_neg) yield fewer, warns and returns the partial
    set.  Labels are all bank.ood_label.
    """
    if n_neg < 1:
        raise ShapeError(f"need n_neg >= 1, got {n_neg}")
    if max_attempts is None:
        max_attempts = 50 * n_neg
    if max_attempts < n_neg:
        raise ShapeError("max_attempts must be at least n_neg")
    accepted: list[np.ndarray] = []
    attempted = 0
    kept = 0
    # chunk sizes depend only on the counts, keeping draws reproducible
    chunk = max(n_neg, 128)
    while kept < n_neg and attempted < max_attempts:
        take = min(chunk, max_attempts - attempted)
        draws = sample(bank.global_proto, take, rng)
        attempted += take
        dists = np.stack([mahalanobis_rows(bank.per_class[c], draws)
                          for c in bank.class_ids], axis=1)
        keep = dists.min(axis=1) > bank.k_sigma
        picked = draws[keep][:n_neg - kept]
        if picked.size:
            accepted.append(picked)
            kept += picked.shape[0]
    if kept < n_neg:
        warnings.warn(f"negative sampling yielded {kept}/{n_neg} within "
                      f"{max_attempts} attempts", stacklevel=2)
    samples = (np.concatenate(accepted, axis=0) if accepted
               else np.empty((0, bank.latent_dim)))
    return samples, np.full(samples.shape[0], bank.ood_label, dtype=np.int64)


def log_densities(bank: PrototypeBank, features: np.ndarray) -> np.ndarray:
    """Gaussian log-density of every row under every class prototype,
    columns ordered by ascending class id."""
    cols = []
    for cid in bank.class_ids:
        proto = bank.per_class[cid]
        z = _whiten(proto, features - proto.mean)
        quad = (z * z).sum(axis=1)
        cols.append(-0.5 * (quad + proto.log_det + proto.dim * LOG_2PI))
    return np.stack(cols, axis=1)


def class_separability_loss(bank: PrototypeBank, features, labels
                            ) -> tuple[float, np.ndarray]:
    """Mean negative log-softmax of the true class's log-density against
    all class log-densities, with the gradient w.r.t. the feature rows.

    Prototypes are treated as constants; only the features carry gradient.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.ndim != 2 or features.shape[1] != bank.latent_dim:
        raise ShapeError(f"features must be n x {bank.latent_dim}")
    if labels.shape != (features.shape[0],):
        raise ShapeError("labels length does not match feature rows")
    ids = bank.class_ids
    id_to_col = {cid: j for j, cid in enumerate(ids)}
    try:
        cols = np.asarray([id_to_col[int(c)] for c in labels])
    except KeyError as exc:
        raise ShapeError(f"label {exc.args[0]} has no prototype "
                         f"(negatives are not valid here)") from exc
    n = features.shape[0]
    ell = log_densities(bank, features)
    shifted = ell - ell.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[np.arange(n), cols]))
    # d loss / d u = Lambda_y (u - mu_y) - sum_c p_c Lambda_c (u - mu_c)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    grad = np.zeros_like(features)
    for j, cid in enumerate(ids):
        proto = bank.per_class[cid]
        diff = features - proto.mean
        z = _whiten(proto, diff)
        lam_diff = np.linalg.solve(proto.chol_lower.T, z.T).T
        weight = (cols == j).astype(np.float64) - p[:, j]
        grad += weight[:, None] * lam_diff
    return loss, grad / n


def bank_to_json(bank: PrototypeBank) -> dict:
    def proto_obj(p: GaussianPrototype) -> dict:
        return {"mean": p.mean.tolist(), "cov": p.covariance.tolist()}

    return {
        "latent_dim": bank.latent_dim,
        "k_sigma": bank.k_sigma,
        "ridge": bank.ridge,
        "classes": {str(cid): proto_obj(p) for cid, p in bank.per_class.items()},
        "global": proto_obj(bank.global_proto),
    }


def save_bank(bank: PrototypeBank, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(bank_to_json(bank)))


def _proto_from_json(class_id: int | str, obj: dict, ridge: float,
                     latent_dim: int) -> GaussianPrototype:
    mean = np.asarray(obj["mean"], dtype=np.float64)
    cov = np.asarray(obj["cov"], dtype=np.float64)
    if mean.shape != (latent_dim,) or cov.shape != (latent_dim, latent_dim):
        raise ParseError(f"prototype {class_id!r} has wrong dimensions")
    chol = np.linalg.cholesky(cov + ridge * np.eye(latent_dim))
    return GaussianPrototype(class_id, mean, cov, chol, 0)


def load_bank(path: str | Path) -> PrototypeBank:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {path}", line=exc.lineno) from exc
    try:
        latent_dim = int(doc["latent_dim"])
        k_sigma = float(doc["k_sigma"])
        ridge = float(doc.get("ridge", DEFAULT_RIDGE))
        per_class = {
            int(cid): _proto_from_json(int(cid), obj, ridge, latent_dim)
            for cid, obj in doc["classes"].items()
        }
        global_proto = _proto_from_json(GLOBAL, doc["global"], ridge,
                                        latent_dim)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed prototype bank: {exc}") from exc
    return PrototypeBank(per_class, global_proto, latent_dim,
                         k_sigma=k_sigma, ridge=ridge)
