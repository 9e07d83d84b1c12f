import math

import numpy as np
import pytest

from alen.experiment import parse_config, run_experiment


def tiny_doc(seed=7, method="ALEN", out="run", increments=3, rot_step=5.0):
    """Small config that finishes in well under a second."""
    rot = [math.radians(rot_step * i) for i in range(increments)]
    return {
        "seed": seed,
        "method": method,
        "output_dir": out,
        "scenario": {
            "generator": "GaussianBlobs",
            "class_count": 3,
            "dim": 2,
            "samples_per_domain": 150,
            "blob_std": 0.8,
            "blob_radius": 3.0,
            "increments": [{"rotation": r} for r in rot],
        },
        "foresighted": {
            "warmup_epochs": 10,
            "max_epochs": 12,
            "latent_dim": 6,
            "hidden_dim": 24,
            "classifier_hidden_dim": 24,
        },
        "adapt": {
            "max_iters": 60,
            "samples_per_class": 8,
            "n": 32,
        },
    }


@pytest.fixture(scope="session")
def tiny_alen_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("alen_run")
    doc = tiny_doc(out=str(out))
    config, echo = parse_config(doc)
    result = run_experiment(config, echo)
    return result


@pytest.fixture(scope="session")
def tiny_ft_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ft_run")
    doc = tiny_doc(method="FT", out=str(out))
    config, echo = parse_config(doc)
    result = run_experiment(config, echo)
    return result
