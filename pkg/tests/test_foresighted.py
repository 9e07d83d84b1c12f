import numpy as np
import pytest

from alen.data import (IDENTITY_TRANSFORM, DriftGenerator, DriftScenario,
                       generate_domain)
from alen.exceptions import ShapeError
from alen.foresighted import (ForesightedConfig, build_source_model,
                              classification_loss, foresighted_train, warmup,
                              write_training_log)
from alen.metrics import accuracy
from alen.prototypes import identify_negative_samples


def blob_domain(seed=0, samples=150, std=0.8):
    scn = DriftScenario(generator=DriftGenerator.GAUSSIAN_BLOBS,
                        class_count=3, dim=2, samples_per_domain=samples,
                        shift_schedule=(IDENTITY_TRANSFORM,), seed=seed,
                        blob_radius=3.0, blob_std=std)
    return generate_domain(scn, 0)


def small_config(**kw):
    base = dict(warmup_epochs=10, max_epochs=12, latent_dim=6, hidden_dim=24,
                classifier_hidden_dim=24, seed=0)
    base.update(kw)
    return ForesightedConfig(**base)


def test_warmup_improves_accuracy():
    dom = blob_domain()
    cfg = small_config()
    rng = np.random.default_rng(1)
    model = build_source_model(dom.dim, 3, cfg, rng)
    before = accuracy(model.predict(dom.features), dom.labels)
    warmup(model, dom, cfg, rng)
    after = accuracy(model.predict(dom.features), dom.labels)
    assert after > before
    assert after > 0.8


def test_train_returns_bank_and_history():
    dom = blob_domain()
    model, history = foresighted_train(dom, small_config())
    assert model.bank is not None
    assert model.bank.class_ids == [0, 1, 2]
    assert 1 <= len(history) <= 12
    assert history[-1].train_accuracy > 0.8
    # classifier has one extra logit for the rejection class
    assert model.classifier.out_dim == 4
    # networks are left in eval mode for scoring
    assert model.feature_extractor.training is False


def test_separability_arm_toggles_ls1_column():
    dom = blob_domain()
    _, hist_on = foresighted_train(dom, small_config())
    assert any(h.mean_ls1 is not None for h in hist_on)
    _, hist_off = foresighted_train(
        dom, small_config(separability_enabled=False))
    assert all(h.mean_ls1 is None for h in hist_off)
    assert all(h.negatives_accepted > 0 for h in hist_off)


def test_labels_must_be_contiguous():
    dom = blob_domain()
    labels = dom.labels.copy()
    labels[labels == 1] = 5
    bad = type(dom)(dom.features, labels, dom.domain_id, dom.increment_index)
    with pytest.raises(ShapeError):
        foresighted_train(bad, small_config())


def test_classification_loss_validations():
    dom = blob_domain()
    cfg = small_config()
    rng = np.random.default_rng(2)
    model = build_source_model(dom.dim, 3, cfg, rng)
    model.feature_extractor.train()
    model.classifier.train()
    negatives = rng.standard_normal((4, cfg.latent_dim))
    with pytest.raises(ShapeError):
        classification_loss(model, dom.features[:8], dom.labels[:8],
                            negatives, np.zeros(4, dtype=np.int64))
    with pytest.raises(ShapeError):
        classification_loss(model, dom.features[:8],
                            np.full(8, 3, dtype=np.int64),
                            negatives, np.full(4, 3, dtype=np.int64))


def test_negatives_do_not_touch_extractor_gradient():
    dom = blob_domain()
    cfg = small_config()
    rng = np.random.default_rng(3)
    model, _ = foresighted_train(dom, cfg)
    model.feature_extractor.train()
    model.classifier.train()
    negatives, neg_labels = identify_negative_samples(model.bank, 16, rng)
    src = dom.features[:16]
    lab = dom.labels[:16]
    _, f_with, _ = classification_loss(model, src, lab, negatives, neg_labels)
    _, f_without, _ = classification_loss(
        model, src, lab, np.zeros((0, cfg.latent_dim)),
        np.zeros(0, dtype=np.int64))
    for name in f_with:
        np.testing.assert_array_equal(f_with[name], f_without[name])


def test_predict_does_not_disturb_state():
    dom = blob_domain()
    model, _ = foresighted_train(dom, small_config())
    buffers = {k: v.copy()
               for k, v in model.feature_extractor.buffers.items()}
    p1 = model.predict(dom.features[:10])
    p2 = model.predict(dom.features[:10])
    np.testing.assert_array_equal(p1, p2)
    for k, v in model.feature_extractor.buffers.items():
        np.testing.assert_array_equal(v, buffers[k])


def test_training_is_seed_deterministic():
    dom = blob_domain()
    m1, h1 = foresighted_train(dom, small_config(seed=42))
    m2, h2 = foresighted_train(dom, small_config(seed=42))
    np.testing.assert_array_equal(
        m1.feature_extractor.params["layer0.weight"],
        m2.feature_extractor.params["layer0.weight"])
    assert [h.mean_ls2 for h in h1] == [h.mean_ls2 for h in h2]


def test_training_log_format(tmp_path):
    dom = blob_domain()
    _, history = foresighted_train(dom, small_config())
    path = tmp_path / "training.csv"
    write_training_log(history, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,mean_Ls1,mean_Ls2,train_accuracy,negatives_accepted"
    assert len(lines) == len(history) + 1


def test_convergence_stops_before_max_epochs():
    # a generous tolerance makes the plateau rule fire almost immediately
    dom = blob_domain()
    cfg = small_config(max_epochs=50, warmup_epochs=4, convergence_tol=10.0)
    _, history = foresighted_train(dom, cfg)
    assert len(history) < 50
