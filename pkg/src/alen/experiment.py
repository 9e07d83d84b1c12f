"""Config-driven experiment runner: stream construction, base training,
per-increment adaptation, evaluation, persistence.

Increment 0 is the labeled source domain; later increments arrive without
labels (their labels are kept aside strictly for scoring the held-out test
splits).  After base training and after every adaptation step the current
model is scored on every domain seen so far, building the accuracy matrix
row by row.  Everything a result claims is recomputable from the stored
per-domain predictions.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np

from alen.adaptation import (AdaptConfig, IncrementTrace, adapt_stream,
                             write_adaptation_log)
from alen.data import (DomainBatch, DriftGenerator, DriftScenario,
                       DriftTransform, generate_domain, load_csv_domain,
                       stratified_split)
from alen.exceptions import ExperimentError, ShapeError
from alen.foresighted import (EpochStats, ForesightedConfig, SourceModel,
                              foresighted_train, build_source_model,
                              write_training_log)
from alen.metrics import AccuracyMatrix, accuracy, forgetting
from alen.nn import Adam, adam_step, save_network, softmax_cross_entropy
from alen.prototypes import save_bank

METHOD_FULL = "ALEN"
METHOD_BASELINE = "FT"

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["seed"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "method": {"enum": [METHOD_FULL, METHOD_BASELINE]},
        "output_dir": {"type": "string"},
        "split_fractions": {
            "type": "array", "items": {"type": "number", "minimum": 0},
            "minItems": 3, "maxItems": 3,
        },
        "test_noise_scale": {"type": "number", "minimum": 0},
        "scenario": {
            "type": "object",
            "additionalProperties": False,
            "required": ["generator", "class_count", "dim",
                         "samples_per_domain", "increments"],
            "properties": {
                "generator": {"enum": ["GaussianBlobs", "TwoMoons"]},
                "class_count": {"type": "integer", "minimum": 2},
                "dim": {"type": "integer", "minimum": 2},
                "samples_per_domain": {"type": "integer", "minimum": 6},
                "blob_radius": {"type": "number", "exclusiveMinimum": 0},
                "blob_std": {"type": "number", "exclusiveMinimum": 0},
                "moons_noise": {"type": "number", "minimum": 0},
                "increments": {
                    "type": "array", "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "rotation": {"type": "number"},
                            "translation": {"type": "array",
                                            "items": {"type": "number"}},
                            "scale": {"type": "number"},
                        },
                    },
                },
            },
        },
        "csv_paths": {"type": "array", "minItems": 1,
                      "items": {"type": "string"}},
        "foresighted": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_src": {"type": "integer", "minimum": 1},
                "n_neg": {"type": "integer", "minimum": 1},
                "k_sigma": {"type": "number", "exclusiveMinimum": 0},
                "max_epochs": {"type": "integer", "minimum": 1},
                "convergence_tol": {"type": "number", "minimum": 0},
                "convergence_patience": {"type": "integer", "minimum": 1},
                "warmup_epochs": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "hidden_dim": {"type": "integer", "minimum": 1},
                "latent_dim": {"type": "integer", "minimum": 1},
                "classifier_hidden_dim": {"type": "integer", "minimum": 1},
                "ridge": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "adapt": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "max_iters": {"type": "integer", "minimum": 1},
                "convergence_tol": {"type": "number", "minimum": 0},
                "convergence_window": {"type": "integer", "minimum": 1},
                "samples_per_class": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "adversarial_lambda": {"type": "number", "minimum": 0},
                "adversarial_ramp_iters": {"type": "integer", "minimum": 0},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "discriminator_hidden_dim": {"type": "integer", "minimum": 1},
                "reset_discriminator": {"type": "boolean"},
            },
        },
        "ablations": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "disable_Ls1": {"type": "boolean"},
                "k_sigma_override": {"type": ["number", "null"],
                                     "exclusiveMinimum": 0},
                "src_neg_ratio": {"type": ["number", "null"],
                                  "exclusiveMinimum": 0},
            },
        },
    },
}


@dataclass
class AblationConfig:
    disable_Ls1: bool = False
    k_sigma_override: float | None = None
    src_neg_ratio: float | None = None


@dataclass
class ExperimentConfig:
    seed: int
    method: str = METHOD_FULL
    output_dir: Path = Path("results")
    scenario: DriftScenario | None = None
    csv_paths: tuple[Path, ...] | None = None
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    test_noise_scale: float = 0.0
    foresighted: ForesightedConfig = field(default_factory=ForesightedConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    ablations: AblationConfig = field(default_factory=AblationConfig)

    def __post_init__(self):
        if (self.scenario is None) == (self.csv_paths is None):
            raise ShapeError("config needs exactly one of scenario/csv_paths")

    @property
    def increment_count(self) -> int:
        if self.scenario is not None:
            return self.scenario.increment_count
        return len(self.csv_paths)


def _merge(defaults: dict, override: dict) -> dict:
    out = dict(defaults)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def config_defaults() -> dict:
    fc = ForesightedConfig()
    ac = AdaptConfig()
    return {
        "method": METHOD_FULL,
        "output_dir": "results",
        "split_fractions": [0.8, 0.1, 0.1],
        "test_noise_scale": 0.0,
        "foresighted": {
            "n_src": fc.n_src, "n_neg": fc.n_neg, "k_sigma": fc.k_sigma,
            "max_epochs": fc.max_epochs,
            "convergence_tol": fc.convergence_tol,
            "convergence_patience": fc.convergence_patience,
            "warmup_epochs": fc.warmup_epochs, "lr": fc.lr,
            "hidden_dim": fc.hidden_dim, "latent_dim": fc.latent_dim,
            "classifier_hidden_dim": fc.classifier_hidden_dim,
            "ridge": fc.ridge,
        },
        "adapt": {
            "n": ac.n, "max_iters": ac.max_iters,
            "convergence_tol": ac.convergence_tol,
            "convergence_window": ac.convergence_window,
            "samples_per_class": ac.samples_per_class,
            "adversarial_lambda": ac.adversarial_lambda,
            "adversarial_ramp_iters": ac.adversarial_ramp_iters, "lr": ac.lr,
            "discriminator_hidden_dim": ac.discriminator_hidden_dim,
            "reset_discriminator": ac.reset_discriminator,
        },
        "ablations": {"disable_Ls1": False, "k_sigma_override": None,
                      "src_neg_ratio": None},
    }


def parse_config(doc: dict, base_dir: Path | None = None
                 ) -> tuple[ExperimentConfig, dict]:
    """Validate a raw config mapping, merge in every default, and build the
    typed config.  Returns (config, fully-merged echo dict)."""
    jsonschema.validate(doc, CONFIG_SCHEMA)
    merged = _merge(config_defaults(), doc)
    scenario = None
    csv_paths = None
    if "scenario" in merged and "csv_paths" in merged:
        raise ShapeError("config needs exactly one of scenario/csv_paths")
    if "scenario" in merged:
        raw = dict(merged["scenario"])
        raw.setdefault("blob_radius", 3.0)
        raw.setdefault("blob_std", 0.8)
        raw.setdefault("moons_noise", 0.1)
        merged["scenario"] = raw
        schedule = tuple(
            DriftTransform(rotation=inc.get("rotation", 0.0),
                           translation=tuple(inc.get("translation", ())),
                           scale=inc.get("scale", 1.0))
            for inc in raw["increments"])
        scenario = DriftScenario(
            generator=DriftGenerator(raw["generator"]),
            class_count=raw["class_count"], dim=raw["dim"],
            samples_per_domain=raw["samples_per_domain"],
            shift_schedule=schedule, seed=merged["seed"],
            blob_radius=raw["blob_radius"], blob_std=raw["blob_std"],
            moons_noise=raw["moons_noise"])
    elif "csv_paths" in merged:
        root = base_dir or Path.cwd()
        csv_paths = tuple((root / p) if not Path(p).is_absolute() else Path(p)
                          for p in merged["csv_paths"])
    else:
        raise ShapeError("config needs exactly one of scenario/csv_paths")
    config = ExperimentConfig(
        seed=merged["seed"], method=merged["method"],
        output_dir=Path(merged["output_dir"]), scenario=scenario,
        csv_paths=csv_paths,
        split_fractions=tuple(merged["split_fractions"]),
        test_noise_scale=merged["test_noise_scale"],
        foresighted=ForesightedConfig(**merged["foresighted"]),
        adapt=AdaptConfig(**merged["adapt"]),
        ablations=AblationConfig(**merged["ablations"]))
    return config, merged


def load_config(path: str | Path) -> tuple[ExperimentConfig, dict]:
    path = Path(path)
    doc = json.loads(path.read_text())
    return parse_config(doc, base_dir=path.parent)


def apply_ablations(config: ExperimentConfig) -> ForesightedConfig:
    """Fold the ablation knobs into a concrete training config."""
    fc = config.foresighted
    ab = config.ablations
    if ab.disable_Ls1:
        fc = replace(fc, separability_enabled=False)
    if ab.k_sigma_override is not None:
        fc = replace(fc, k_sigma=ab.k_sigma_override)
    if ab.src_neg_ratio is not None:
        fc = replace(fc, n_neg=max(1, round(fc.n_src / ab.src_neg_ratio)))
    return fc


@dataclass
class EvaluationRecord:
    increment: int
    domain: int
    accuracy: float
    predictions: np.ndarray
    labels: np.ndarray


@dataclass
class RunResult:
    accuracy_matrix: AccuracyMatrix
    avg_acc: float
    forgetting_pct: float | None
    evaluations: list[EvaluationRecord]
    training_history: list[EpochStats]
    adaptation_traces: list[IncrementTrace]
    wall_time: dict[str, float]
    config_echo: dict
    deviation_flags: list[str]
    output_dir: Path


def _split_stream(config: ExperimentConfig, root: np.random.SeedSequence
                  ) -> tuple[list[DomainBatch], list[DomainBatch]]:
    """Materialize (train, test) splits for every increment.  Validation
    splits are produced but unused by the core loop."""
    count = config.increment_count
    children = root.spawn(2 * count)
    noise_children = np.random.SeedSequence(
        entropy=config.seed, spawn_key=(987,)).spawn(count)
    trains, tests = [], []
    for i in range(count):
        if config.scenario is not None:
            batch = generate_domain(config.scenario, i,
                                    np.random.default_rng(children[i]))
        else:
            batch = load_csv_domain(config.csv_paths[i], has_labels=True)
            batch.increment_index = i
        train, test, _val = stratified_split(
            batch, config.split_fractions,
            np.random.default_rng(children[count + i]))
        if config.test_noise_scale > 0.0:
            noise_rng = np.random.default_rng(noise_children[i])
            test.features = test.features + (
                config.test_noise_scale
                * noise_rng.standard_normal(test.features.shape))
        trains.append(train)
        tests.append(test)
    return trains, tests


def _param_signature(*nets) -> bytes:
    parts = []
    for net in nets:
        for name in sorted(net.params):
            parts.append(net.params[name].tobytes())
        for name in sorted(net.buffers):
            parts.append(net.buffers[name].tobytes())
    return b"".join(parts)


def _score_row(predict, tests: list[DomainBatch], upto: int,
               matrix: AccuracyMatrix, records: list[EvaluationRecord]
               ) -> None:
    row = []
    for j in range(upto + 1):
        preds = predict(tests[j].features)
        acc = accuracy(preds, tests[j].labels)
        records.append(EvaluationRecord(upto, j, acc, preds,
                                        tests[j].labels.copy()))
        row.append(acc)
    matrix.append_row(row)


def ft_train(dataset: DomainBatch, config: ForesightedConfig,
             rng: np.random.Generator) -> tuple[SourceModel, list[EpochStats]]:
    """Plain cross-entropy training on the labeled source: same network
    shapes, no prototypes, no negatives, no separability arm."""
    if dataset.labels is None:
        raise ShapeError("baseline training needs labels")
    class_count = int(dataset.labels.max()) + 1
    model = build_source_model(dataset.dim, class_count, config, rng)
    opt_f = Adam(lr=config.lr)
    opt_g = Adam(lr=config.lr)
    model.feature_extractor.train()
    model.classifier.train()
    history: list[EpochStats] = []
    prev = None
    stall = 0
    for epoch in range(1, config.max_epochs + 1):
        losses = []
        order = rng.permutation(dataset.n)
        for start in range(0, dataset.n, config.n_src):
            idx = order[start:start + config.n_src]
            latents = model.feature_extractor.forward(dataset.features[idx])
            logits = model.classifier.forward(latents)
            loss, d_logits = softmax_cross_entropy(logits,
                                                   dataset.labels[idx])
            g_grads, d_latents = model.classifier.backward(d_logits)
            f_grads, _ = model.feature_extractor.backward(d_latents)
            adam_step(model.classifier.params, g_grads, opt_g)
            adam_step(model.feature_extractor.params, f_grads, opt_f)
            losses.append(loss)
        mean_loss = float(np.mean(losses))
        train_acc = float(np.mean(
            model.predict(dataset.features) == dataset.labels))
        history.append(EpochStats(epoch, None, mean_loss, train_acc, 0))
        if prev is not None:
            rel = (prev - mean_loss) / max(abs(prev), 1e-12)
            stall = stall + 1 if rel < config.convergence_tol else 0
            if stall >= config.convergence_patience:
                break
        prev = mean_loss
    model.feature_extractor.eval()
    model.classifier.eval()
    return model, history


def _persist(result: RunResult, source: SourceModel | None) -> None:
    out = result.output_dir
    (out / "logs").mkdir(parents=True, exist_ok=True)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    result.accuracy_matrix.write_csv(out / "accuracy_matrix.csv")
    write_training_log(result.training_history, out / "logs" / "training.csv")
    for trace in result.adaptation_traces:
        write_adaptation_log(
            trace.history,
            out / "logs" / f"adapt_increment_{trace.increment_index:02d}.csv")
    if source is not None:
        save_network(source.feature_extractor,
                     out / "checkpoints" / "base.feature_extractor.json")
        save_network(source.classifier,
                     out / "checkpoints" / "base.classifier.json")
        if source.bank is not None:
            save_bank(source.bank, out / "checkpoints" / "base.prototypes.json")
    for trace in result.adaptation_traces:
        stem = f"increment_{trace.increment_index:02d}"
        snap = trace.snapshot
        save_network(snap.feature_extractor,
                     out / "checkpoints" / f"{stem}.feature_extractor.json")
        save_network(snap.classifier,
                     out / "checkpoints" / f"{stem}.classifier.json")
        save_network(snap.discriminator,
                     out / "checkpoints" / f"{stem}.discriminator.json")
    doc = {
        "config": result.config_echo,
        "deviation_flags": result.deviation_flags,
        "wall_time": result.wall_time,
        "accuracy_matrix": result.accuracy_matrix.rows,
        "avg_acc": result.avg_acc,
        "forgetting_pct": result.forgetting_pct,
        "evaluations": [
            {"increment": r.increment, "domain": r.domain,
             "accuracy": r.accuracy,
             "predictions": r.predictions.tolist(),
             "labels": r.labels.tolist()}
            for r in result.evaluations
        ],
    }
    (out / "results.json").write_text(json.dumps(doc, indent=1))


def _flush_failure(output_dir: Path, stage: str, message: str,
                   echo: dict, wall_time: dict[str, float]) -> None:
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
        (output_dir / "results.json").write_text(json.dumps({
            "config": echo, "error": {"stage": stage, "message": message},
            "wall_time": wall_time,
        }, indent=1))
    except OSError:
        pass


def run_experiment(config: ExperimentConfig,
                   config_echo: dict | None = None) -> RunResult:
    """The full pipeline for either method; see the module docstring."""
    echo = config_echo if config_echo is not None else {"seed": config.seed}
    wall: dict[str, float] = {}
    root = np.random.SeedSequence(config.seed)
    data_seq, fore_seq, adapt_seq = root.spawn(3)
    stage = "data"
    try:
        t0 = time.perf_counter()
        trains, tests = _split_stream(config, data_seq)
        wall["data"] = time.perf_counter() - t0

        stage = "foresighted"
        t0 = time.perf_counter()
        fc = apply_ablations(config)
        fore_rng = (np.random.default_rng(fc.seed) if fc.seed is not None
                    else np.random.default_rng(fore_seq))
        if config.method == METHOD_BASELINE:
            source, training_history = ft_train(trains[0], fc, fore_rng)
        else:
            source, training_history = foresighted_train(trains[0], fc,
                                                         fore_rng)
        wall["foresighted"] = time.perf_counter() - t0

        stage = "adapt"
        t0 = time.perf_counter()
        matrix = AccuracyMatrix()
        records: list[EvaluationRecord] = []
        _score_row(source.predict, tests, 0, matrix, records)
        traces: list[IncrementTrace] = []
        if config.increment_count > 1 and config.method == METHOD_FULL:
            ac = config.adapt
            adapt_rng = (np.random.default_rng(ac.seed)
                         if ac.seed is not None
                         else np.random.default_rng(adapt_seq))
            _, traces = adapt_stream(source, trains[1:], ac, adapt_rng)
            for trace in traces:
                _score_row(trace.snapshot.predict, tests,
                           trace.increment_index, matrix, records)
        elif config.increment_count > 1:
            # frozen baseline: the same model is rescored as domains arrive
            for i in range(1, config.increment_count):
                _score_row(source.predict, tests, i, matrix, records)
        wall["adapt"] = time.perf_counter() - t0

        stage = "persist"
        t0 = time.perf_counter()
        avg = matrix.average_accuracy()
        fgt = forgetting(matrix) if matrix.increment_count > 1 else None
        flags = []
        if config.method == METHOD_FULL:
            flags.append("warmup_updates_classifier")
        result = RunResult(matrix, avg, fgt, records, training_history,
                           traces, wall, echo, flags, config.output_dir)
        _persist(result, source)
        wall["persist"] = time.perf_counter() - t0
        return result
    except ExperimentError:
        raise
    except Exception as exc:
        _flush_failure(config.output_dir, stage, str(exc), echo, wall)
        raise ExperimentError(stage, str(exc)) from exc


def run_ft_baseline(config: ExperimentConfig,
                    config_echo: dict | None = None) -> RunResult:
    if config.method != METHOD_BASELINE:
        config = replace(config, method=METHOD_BASELINE)
    return run_experiment(config, config_echo)
