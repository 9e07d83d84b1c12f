"""Synthetic drifting domain streams, CSV ingestion, stratified splits.

A stream is a canonical labeled distribution plus a per-increment invertible
affine map (rotation in the first two coordinates, uniform scaling, then a
translation).  Labels are assigned before the map is applied, so every
increment keeps the canonical ground truth and the stored inverse recovers
the canonical features exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from alen.exceptions import ParseError, ShapeError


@dataclass
class DomainBatch:
    features: np.ndarray
    labels: np.ndarray | None
    domain_id: str
    increment_index: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ShapeError("features must be 2-D")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise ShapeError("labels length does not match feature rows")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class DriftTransform:
    """x' = scale * R(rotation) x + translation, rotation acting on the
    first two coordinates.  scale must be nonzero so the map inverts."""

    rotation: float = 0.0
    translation: tuple[float, ...] = ()
    scale: float = 1.0

    def __post_init__(self):
        if self.scale == 0.0:
            raise ShapeError("scale 0 makes the drift non-invertible")

    def _rotation_matrix(self, dim: int) -> np.ndarray:
        r = np.eye(dim)
        if self.rotation != 0.0:
            if dim < 2:
                raise ShapeError("rotation needs dim >= 2")
            c, s = math.cos(self.rotation), math.sin(self.rotation)
            r[0, 0], r[0, 1] = c, -s
            r[1, 0], r[1, 1] = s, c
        return r

    def _translation_vector(self, dim: int) -> np.ndarray:
        if not self.translation:
            return np.zeros(dim)
        t = np.asarray(self.translation, dtype=np.float64)
        if t.shape != (dim,):
            raise ShapeError(f"translation has {t.shape[0]} entries, "
                             f"features have {dim}")
        return t

    def apply(self, x: np.ndarray) -> np.ndarray:
        dim = x.shape[1]
        r = self._rotation_matrix(dim)
        return self.scale * (x @ r.T) + self._translation_vector(dim)

    def invert(self, x: np.ndarray) -> np.ndarray:
        dim = x.shape[1]
        r = self._rotation_matrix(dim)
        return ((x - self._translation_vector(dim)) / self.scale) @ r


IDENTITY_TRANSFORM = DriftTransform()


class DriftGenerator(enum.Enum):
    GAUSSIAN_BLOBS = "GaussianBlobs"
    TWO_MOONS = "TwoMoons"


@dataclass(frozen=True)
class DriftScenario:
    generator: DriftGenerator
    class_count: int
    dim: int
    samples_per_domain: int
    shift_schedule: tuple[DriftTransform, ...]
    seed: int
    blob_radius: float = 3.0
    blob_std: float = 0.8
    moons_noise: float = 0.1

    def __post_init__(self):
        if self.class_count < 2:
            raise ShapeError("need at least 2 classes")
        if self.dim < 2:
            raise ShapeError("need dim >= 2")
        if not self.shift_schedule:
            raise ShapeError("shift schedule is empty")
        if self.generator is DriftGenerator.GAUSSIAN_BLOBS:
            if self.samples_per_domain % self.class_count:
                raise ShapeError("samples_per_domain must divide evenly "
                                 "across classes")
        else:
            if self.class_count != 2 or self.dim != 2:
                raise ShapeError("TwoMoons is 2-class, 2-D")
            if self.samples_per_domain % 2:
                raise ShapeError("TwoMoons needs an even sample count")

    @property
    def increment_count(self) -> int:
        return len(self.shift_schedule)


def domain_rng(scenario: DriftScenario, increment_index: int
               ) -> np.random.Generator:
    """Independent generator per (scenario seed, increment)."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=scenario.seed,
                               spawn_key=(increment_index,)))


def _canonical_blobs(scenario: DriftScenario, rng: np.random.Generator
                     ) -> tuple[np.ndarray, np.ndarray]:
    c = scenario.class_count
    per = scenario.samples_per_domain // c
    labels = rng.permutation(np.repeat(np.arange(c, dtype=np.int64), per))
    angles = 2.0 * np.pi * np.arange(c) / c
    centers = np.zeros((c, scenario.dim))
    centers[:, 0] = scenario.blob_radius * np.cos(angles)
    centers[:, 1] = scenario.blob_radius * np.sin(angles)
    noise = rng.standard_normal((scenario.samples_per_domain, scenario.dim))
    return centers[labels] + scenario.blob_std * noise, labels


def _canonical_moons(scenario: DriftScenario, rng: np.random.Generator
                     ) -> tuple[np.ndarray, np.ndarray]:
    per = scenario.samples_per_domain // 2
    labels = rng.permutation(
        np.repeat(np.arange(2, dtype=np.int64), per))
    t = rng.uniform(0.0, np.pi, size=scenario.samples_per_domain)
    x = np.where(labels == 0, np.cos(t), 1.0 - np.cos(t))
    y = np.where(labels == 0, np.sin(t), 0.5 - np.sin(t))
    pts = np.stack([x, y], axis=1)
    pts += scenario.moons_noise * rng.standard_normal(pts.shape)
    return pts, labels


def generate_domain(scenario: DriftScenario, increment_index: int,
                    rng: np.random.Generator | None = None) -> DomainBatch:
    """Draw the canonical distribution, then shift it by the increment's
    transform.  Labels come from the canonical draw."""
    if not 0 <= increment_index < scenario.increment_count:
        raise IndexError(f"increment {increment_index} outside schedule of "
                         f"length {scenario.increment_count}")
    if rng is None:
        rng = domain_rng(scenario, increment_index)
    if scenario.generator is DriftGenerator.GAUSSIAN_BLOBS:
        features, labels = _canonical_blobs(scenario, rng)
    else:
        features, labels = _canonical_moons(scenario, rng)
    transform = scenario.shift_schedule[increment_index]
    return DomainBatch(transform.apply(features), labels,
                       domain_id=f"d{increment_index:02d}",
                       increment_index=increment_index)


def stratified_split(batch: DomainBatch,
                     fractions: tuple[float, float, float],
                     rng: np.random.Generator
                     ) -> tuple[DomainBatch, DomainBatch, DomainBatch]:
    """Split into (train, test, val) keeping per-class proportions within
    one sample, by largest-remainder allocation inside each class."""
    if batch.labels is None:
        raise ShapeError("stratified split needs labels")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ShapeError(f"fractions sum to {sum(fractions)}, expected 1")
    parts: list[list[int]] = [[], [], []]
    for cid in np.unique(batch.labels):
        idx = np.flatnonzero(batch.labels == cid)
        if idx.size < 3:
            raise ShapeError(f"class {cid} has {idx.size} samples; "
                             f"need >= 3 to split")
        idx = idx[rng.permutation(idx.size)]
        exact = [idx.size * f for f in fractions]
        counts = [int(math.floor(e)) for e in exact]
        remainders = [e - c for e, c in zip(exact, counts)]
        for _ in range(idx.size - sum(counts)):
            j = max(range(3), key=lambda k: (remainders[k], -k))
            counts[j] += 1
            remainders[j] = -1.0
        offset = 0
        for j in range(3):
            parts[j].extend(idx[offset:offset + counts[j]].tolist())
            offset += counts[j]
    out = []
    for j, name in enumerate(("train", "test", "val")):
        sel = np.asarray(sorted(parts[j]), dtype=np.int64)
        out.append(DomainBatch(batch.features[sel], batch.labels[sel],
                               domain_id=f"{batch.domain_id}/{name}",
                               increment_index=batch.increment_index))
    return out[0], out[1], out[2]


def save_csv_domain(batch: DomainBatch, path: str | Path) -> None:
    """Comma-delimited rows, features first, label appended when present.
    %.17g keeps float64 values exact across a round trip."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for i in range(batch.n):
            cells = [f"{v:.17g}" for v in batch.features[i]]
            if batch.labels is not None:
                cells.append(str(int(batch.labels[i])))
            fh.write(",".join(cells) + "\n")


def load_csv_domain(path: str | Path, has_labels: bool) -> DomainBatch:
    """Parse a rectangular numeric CSV; an optional non-numeric first line
    is treated as a header.  With has_labels, the last column must hold
    integer class indices."""
    path = Path(path)
    rows: list[list[float]] = []
    width = None
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            cells = line.split(",")
            try:
                values = [float(c) for c in cells]
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ParseError(f"non-numeric cell in {cells}", line=lineno)
            if width is None:
                width = len(values)
                if has_labels and width < 2:
                    raise ParseError("need at least one feature column "
                                     "before the label", line=lineno)
            elif len(values) != width:
                raise ParseError(f"row has {len(values)} cells, "
                                 f"expected {width}", line=lineno)
            if has_labels:
                if values[-1] != int(values[-1]):
                    raise ParseError(f"label {values[-1]} is not an integer",
                                     line=lineno)
            rows.append(values)
    if not rows:
        raise ParseError(f"no data rows in {path}")
    arr = np.asarray(rows, dtype=np.float64)
    if has_labels:
        return DomainBatch(arr[:, :-1], arr[:, -1].astype(np.int64),
                           domain_id=path.stem, increment_index=0)
    return DomainBatch(arr, None, domain_id=path.stem, increment_index=0)
