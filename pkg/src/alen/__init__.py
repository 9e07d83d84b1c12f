"""Source-free domain-incremental learning with Gaussian prototype replay.

Two training stages share one latent space: base training shapes it with a
class-separability objective and out-of-distribution negatives so that
per-class Gaussian prototypes stay faithful; incremental adaptation then
aligns unlabeled drifting targets to that space adversarially, replaying
the prototypes instead of any stored source data.
"""

from alen.adaptation import (AdaptConfig, TargetModel, adapt_increment,
                             adapt_stream, domain_confusion_loss,
                             init_from_source, retention_loss)
from alen.data import (DomainBatch, DriftGenerator, DriftScenario,
                       DriftTransform, generate_domain, load_csv_domain,
                       save_csv_domain, stratified_split)
from alen.experiment import (AblationConfig, ExperimentConfig, RunResult,
                             load_config, parse_config, run_experiment,
                             run_ft_baseline)
from alen.foresighted import (ForesightedConfig, SourceModel,
                              classification_loss, foresighted_train, warmup)
from alen.metrics import AccuracyMatrix, accuracy, forgetting
from alen.prototypes import (GaussianPrototype, PrototypeBank,
                             class_separability_loss, fit_prototypes,
                             identify_negative_samples, load_bank,
                             mahalanobis, sample, save_bank)

__version__ = "0.1.0"

__all__ = [
    "AblationConfig", "AccuracyMatrix", "AdaptConfig", "DomainBatch",
    "DriftGenerator", "DriftScenario", "DriftTransform", "ExperimentConfig",
    "ForesightedConfig", "GaussianPrototype", "PrototypeBank", "RunResult",
    "SourceModel", "TargetModel", "accuracy", "adapt_increment",
    "adapt_stream", "class_separability_loss", "classification_loss",
    "domain_confusion_loss", "fit_prototypes", "forgetting",
    "foresighted_train", "generate_domain", "identify_negative_samples",
    "init_from_source", "load_bank", "load_config", "load_csv_domain",
    "mahalanobis", "parse_config", "retention_loss", "run_experiment",
    "run_ft_baseline", "sample", "save_bank", "save_csv_domain",
    "stratified_split", "warmup",
]
