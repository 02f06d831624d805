import json

import numpy as np
import pytest
import torch
from sklearn.base import clone

from advface import desk, faces
from advface.forensics import (
    ARCHITECTURES,
    ConstantClassifier,
    ForensicClassifier,
    LabeledDataset,
    LinearClassifier,
    TrainConfig,
    evaluate_accuracy,
    load_classifier,
    predict_real_prob,
    preprocess,
    save_classifier,
    train_classifier,
)
from advface.validation import InvalidArgumentError


def test_preprocess_normalises_per_channel():
    clf = LinearClassifier(torch.zeros(3, 4, 4), mean=(0.5, 0.25, 0.0), std=(0.5, 0.25, 2.0))
    x = torch.full((1, 3, 4, 4), 0.5, dtype=torch.float64)
    out = preprocess(x, clf)
    assert torch.allclose(out[0, :, 0, 0], torch.tensor([0.0, 1.0, 0.25], dtype=torch.float64))


def test_preprocess_resizes():
    clf = LinearClassifier(torch.zeros(3, 8, 8))
    assert preprocess(torch.rand(2, 3, 16, 16, dtype=torch.float64), clf).shape == (2, 3, 8, 8)


def test_linear_classifier_closed_form():
    g = torch.Generator().manual_seed(0)
    w = torch.randn(3, 4, 4, generator=g, dtype=torch.float64)
    x = torch.rand(5, 3, 4, 4, generator=g, dtype=torch.float64)
    clf = LinearClassifier(w, bias=0.3)
    expected = torch.sigmoid((x * w).sum(dim=(1, 2, 3)) + 0.3)
    assert torch.allclose(clf.predict_real_prob(x), expected, atol=1e-12)
    assert predict_real_prob(clf, x[0]).dim() == 0


def test_constant_classifier():
    assert torch.equal(ConstantClassifier(0.7).predict_real_prob(torch.rand(3, 3, 32, 32)),
                       torch.full((3,), 0.7))


@pytest.mark.parametrize("arch", sorted(ARCHITECTURES))
def test_architectures_forward_backward(arch):
    clf = ForensicClassifier(arch).initialize()
    x = torch.rand(2, 3, 32, 32, requires_grad=True)
    p = clf.predict_real_prob(x)
    p.sum().backward()
    assert p.shape == (2,) and x.grad is not None
    assert clf.features(x.detach()).shape[0] == 2


def test_fit_small_dataset_learns(gen):
    X, y = desk.real_vs_generated(gen, 400, seed=3)
    clf = ForensicClassifier("plain_vgg", learning_rate=2e-3, epochs=3, seed=1).fit(X, y)
    Xt, yt = desk.real_vs_generated(gen, 100, seed=4)
    assert evaluate_accuracy(clf, LabeledDataset(Xt, yt)) > 0.8
    assert clf.predict_proba(Xt[:4]).shape == (4, 2)
    assert len(clf.loss_curve_) == 3


def test_fit_rejects_single_class():
    with pytest.raises(InvalidArgumentError):
        ForensicClassifier("plain_vgg", epochs=1).fit(np.zeros((4, 3, 32, 32), np.float32), np.ones(4))


def test_train_config_validation():
    with pytest.raises(InvalidArgumentError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(InvalidArgumentError):
        train_classifier(TrainConfig(), LabeledDataset(np.zeros((0, 3, 32, 32))), "plain_vgg")


def test_unknown_architecture():
    with pytest.raises(InvalidArgumentError):
        ForensicClassifier("alexnet").initialize()


def test_sklearn_params_and_clone():
    clf = ForensicClassifier("dense", learning_rate=1e-3, epochs=2)
    assert clf.get_params()["learning_rate"] == 1e-3
    twin = clone(clf)
    assert twin.get_params() == clf.get_params()


def test_predict_threshold_is_strict():
    clf = ForensicClassifier("plain_vgg").initialize()
    x = torch.rand(3, 3, 32, 32)
    p = clf.predict_batched(x)
    assert np.array_equal(clf.predict(x, threshold=float(p[0])), (p > p[0]).astype(np.int64))


def test_checkpoint_round_trip(tmp_path):
    clf = ForensicClassifier("sepconv", seed=5).initialize()
    path = save_classifier(clf, tmp_path / "c.pt")
    back = load_classifier(path)
    x = torch.rand(2, 3, 32, 32)
    assert torch.equal(clf.predict_real_prob(x), back.predict_real_prob(x))
    assert back.input_shape == (28, 28, 3)


def test_packaged_zoo_accuracy(gen, zoo):
    metrics = json.loads((desk.ASSET_DIR / "zoo" / "metrics.json").read_text())
    assert set(desk.ZOO_MEMBERS) <= set(metrics)
    assert min(metrics[k] for k in desk.ZOO_MEMBERS) >= 0.9
    X, y = desk.real_vs_generated(gen, 100, seed=77)
    for name, clf in zoo.items():
        assert evaluate_accuracy(clf, LabeledDataset(X, y)) >= 0.9, name


def test_zoo_gradients_match_finite_differences(zoo64):
    x = torch.from_numpy(faces.real_faces(2, seed=21)[0]).double()
    d = torch.randn(x.shape, generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    h = 1e-5
    for name, clf in zoo64.items():
        xg = x.clone().requires_grad_(True)
        (g,) = torch.autograd.grad(clf.predict_real_prob(xg).sum(), xg)
        with torch.no_grad():
            fd = (clf.predict_real_prob(x + h * d).sum() - clf.predict_real_prob(x - h * d).sum()) / (2 * h)
        analytic = (g * d).sum()
        assert abs(float(fd - analytic)) <= 1e-4 * max(abs(float(fd)), abs(float(analytic))), name
