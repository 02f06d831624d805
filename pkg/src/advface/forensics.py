"""Forensic (real-vs-synthetic) classifiers.

Label convention: ``1`` = real photograph, ``0`` = synthetic. Every classifier
exposes :meth:`ClassifierHandle.predict_real_prob`, a differentiable map from
``[B, 3, H, W]`` images in ``[0, 1]`` to the probability of the real class;
resizing and per-channel normalisation happen inside that call so attack
gradients flow through them.

:class:`ForensicClassifier` wraps the desk-scale architecture zoo in the
scikit-learn estimator API (``fit`` / ``predict_proba`` / ``predict`` /
``score``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .validation import (
    InvalidArgumentError,
    as_tensor,
    check_image_batch,
    check_labels,
    check_positive,
)

log = logging.getLogger(__name__)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
PROB_EPS = 1e-7

CHECKPOINT_FORMAT = "advface-classifier"
CHECKPOINT_VERSION = 1


# --------------------------------------------------------------------------
# architecture zoo


class _ResBlock(nn.Module):
    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.c1 = nn.Conv2d(cin, cout, 3, stride, 1, bias=False)
        self.b1 = nn.BatchNorm2d(cout)
        self.c2 = nn.Conv2d(cout, cout, 3, 1, 1, bias=False)
        self.b2 = nn.BatchNorm2d(cout)
        self.skip = (
            nn.Sequential(nn.Conv2d(cin, cout, 1, stride, bias=False), nn.BatchNorm2d(cout))
            if stride != 1 or cin != cout
            else nn.Identity()
        )

    def forward(self, x):
        y = F.silu(self.b1(self.c1(x)))
        return F.silu(self.b2(self.c2(y)) + self.skip(x))


class _Bottleneck(nn.Module):
    def __init__(self, cin, mid, cout, stride=1):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(cin, mid, 1, bias=False), nn.BatchNorm2d(mid), nn.SiLU(),
            nn.Conv2d(mid, mid, 3, stride, 1, bias=False), nn.BatchNorm2d(mid), nn.SiLU(),
            nn.Conv2d(mid, cout, 1, bias=False), nn.BatchNorm2d(cout),
        )
        self.skip = (
            nn.Sequential(nn.Conv2d(cin, cout, 1, stride, bias=False), nn.BatchNorm2d(cout))
            if stride != 1 or cin != cout
            else nn.Identity()
        )

    def forward(self, x):
        return F.silu(self.body(x) + self.skip(x))


class _DenseBlock(nn.Module):
    def __init__(self, cin, growth, n_layers):
        super().__init__()
        self.layers = nn.ModuleList()
        c = cin
        for _ in range(n_layers):
            self.layers.append(nn.Sequential(nn.BatchNorm2d(c), nn.SiLU(), nn.Conv2d(c, growth, 3, 1, 1, bias=False)))
            c += growth
        self.out_channels = c

    def forward(self, x):
        for layer in self.layers:
            x = torch.cat([x, layer(x)], dim=1)
        return x


class _MBConv(nn.Module):
    def __init__(self, cin, cout, expand=3, stride=1):
        super().__init__()
        mid = cin * expand
        self.expand = nn.Sequential(nn.Conv2d(cin, mid, 1, bias=False), nn.BatchNorm2d(mid), nn.SiLU())
        self.dw = nn.Sequential(nn.Conv2d(mid, mid, 3, stride, 1, groups=mid, bias=False), nn.BatchNorm2d(mid), nn.SiLU())
        self.se = nn.Sequential(nn.AdaptiveAvgPool2d(1), nn.Conv2d(mid, max(4, mid // 4), 1), nn.SiLU(),
                                nn.Conv2d(max(4, mid // 4), mid, 1), nn.Sigmoid())
        self.project = nn.Sequential(nn.Conv2d(mid, cout, 1, bias=False), nn.BatchNorm2d(cout))
        self.residual = stride == 1 and cin == cout

    def forward(self, x):
        y = self.dw(self.expand(x))
        y = self.project(y * self.se(y))
        return y + x if self.residual else y


class _SepConv(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.dw = nn.Conv2d(cin, cin, 3, 1, 1, groups=cin, bias=False)
        self.pw = nn.Conv2d(cin, cout, 1, bias=False)
        self.bn = nn.BatchNorm2d(cout)

    def forward(self, x):
        return self.bn(self.pw(self.dw(x)))


class _XceptionBlock(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.body = nn.Sequential(nn.SiLU(), _SepConv(cin, cout), nn.SiLU(), _SepConv(cout, cout), nn.AvgPool2d(3, 2, 1))
        self.skip = nn.Sequential(nn.Conv2d(cin, cout, 1, 2, bias=False), nn.BatchNorm2d(cout))

    def forward(self, x):
        return self.body(x) + self.skip(x)


class ZooNet(nn.Module):
    """Feature trunk followed by a single-logit head; ``features`` exposes the
    penultimate representation."""

    def __init__(self, trunk: nn.Module, feat_dim: int):
        super().__init__()
        self.trunk = trunk
        self.head = nn.Linear(feat_dim, 1)
        self.feature_dim = feat_dim

    def features(self, x):
        return self.trunk(x)

    def forward(self, x):
        return self.head(self.trunk(x)).squeeze(-1)


# All zoo networks use smooth activations (SiLU) and average pooling so the
# classifier is differentiable everywhere, not just almost everywhere.


def _mini_resnet():
    trunk = nn.Sequential(
        nn.Conv2d(3, 16, 3, 2, 1, bias=False), nn.BatchNorm2d(16), nn.SiLU(),
        _ResBlock(16, 16), _ResBlock(16, 32, stride=2), _ResBlock(32, 32, stride=2),
        nn.AdaptiveAvgPool2d(1), nn.Flatten(),
    )
    return ZooNet(trunk, 32)


def _deep_resnet():
    trunk = nn.Sequential(
        nn.Conv2d(3, 16, 3, 2, 1, bias=False), nn.BatchNorm2d(16), nn.SiLU(),
        _Bottleneck(16, 8, 32), _Bottleneck(32, 8, 32), _Bottleneck(32, 16, 48, stride=2),
        _Bottleneck(48, 16, 48), _Bottleneck(48, 16, 64, stride=2),
        nn.AdaptiveAvgPool2d(1), nn.Flatten(),
    )
    return ZooNet(trunk, 64)


def _plain_vgg():
    def stage(cin, cout):
        return [nn.Conv2d(cin, cout, 3, 1, 1, bias=False), nn.BatchNorm2d(cout), nn.SiLU(),
                nn.Conv2d(cout, cout, 3, 1, 1, bias=False), nn.BatchNorm2d(cout), nn.SiLU(), nn.AvgPool2d(2)]

    trunk = nn.Sequential(*stage(3, 12), *stage(12, 24), *stage(24, 32), nn.Flatten(), nn.Linear(32 * 4 * 4, 32), nn.SiLU())
    return ZooNet(trunk, 32)


def _dense():
    b1 = _DenseBlock(16, 8, 3)
    b2 = _DenseBlock(24, 8, 3)
    trunk = nn.Sequential(
        nn.Conv2d(3, 16, 3, 2, 1, bias=False),
        b1, nn.BatchNorm2d(b1.out_channels), nn.SiLU(), nn.Conv2d(b1.out_channels, 24, 1, bias=False), nn.AvgPool2d(2),
        b2, nn.BatchNorm2d(b2.out_channels), nn.SiLU(), nn.AvgPool2d(2),
        nn.AdaptiveAvgPool2d(1), nn.Flatten(),
    )
    return ZooNet(trunk, b2.out_channels)


def _mbconv():
    trunk = nn.Sequential(
        nn.Conv2d(3, 16, 3, 2, 1, bias=False), nn.BatchNorm2d(16), nn.SiLU(),
        _MBConv(16, 16), _MBConv(16, 24, stride=2), _MBConv(24, 24), _MBConv(24, 40, stride=2),
        nn.Conv2d(40, 48, 1, bias=False), nn.BatchNorm2d(48), nn.SiLU(),
        nn.AdaptiveAvgPool2d(1), nn.Flatten(),
    )
    return ZooNet(trunk, 48)


def _sepconv():
    trunk = nn.Sequential(
        nn.Conv2d(3, 16, 3, 2, 1, bias=False), nn.BatchNorm2d(16), nn.SiLU(),
        _XceptionBlock(16, 32), _XceptionBlock(32, 48), nn.SiLU(),
        _SepConv(48, 64), nn.SiLU(),
        nn.AdaptiveAvgPool2d(1), nn.Flatten(),
    )
    return ZooNet(trunk, 64)


@dataclass(frozen=True)
class ArchSpec:
    build: Callable[[], ZooNet]
    input_size: int
    stands_in_for: str


ARCHITECTURES: Dict[str, ArchSpec] = {
    "mini_resnet": ArchSpec(_mini_resnet, 32, "ResNet-18"),
    "deep_resnet": ArchSpec(_deep_resnet, 32, "ResNet-50"),
    "plain_vgg": ArchSpec(_plain_vgg, 32, "VGG-19"),
    "dense": ArchSpec(_dense, 32, "DenseNet-121"),
    "mbconv": ArchSpec(_mbconv, 32, "EfficientNet-B3"),
    "sepconv": ArchSpec(_sepconv, 28, "Xception"),
}


# --------------------------------------------------------------------------
# handles


def resize_bilinear(img: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    if tuple(img.shape[-2:]) == tuple(size):
        return img
    return F.interpolate(img, size=size, mode="bilinear", align_corners=False)


class ClassifierHandle:
    """Shared behaviour of every forensic classifier.

    Subclasses provide ``network_`` (image batch -> real-class logit),
    ``arch_id``, ``input_shape`` (H, W, C), ``mean`` and ``std``.
    """

    arch_id: str
    input_shape: tuple[int, int, int]
    mean: Sequence[float]
    std: Sequence[float]

    def _net(self) -> nn.Module:
        return self.network_

    @property
    def dtype(self) -> torch.dtype:
        return next(self._net().parameters()).dtype

    def preprocess(self, img) -> torch.Tensor:
        return preprocess(img, self)

    def real_logit(self, img) -> torch.Tensor:
        x = preprocess(img, self)
        H, W, C = self.input_shape
        if tuple(x.shape[1:]) != (C, H, W):
            raise InvalidArgumentError(f"preprocessed image has shape {tuple(x.shape[1:])}, expected {(C, H, W)}")
        return self._net()(x)

    def predict_real_prob(self, img) -> torch.Tensor:
        """Probability of the real class, shape ``[B]`` (differentiable)."""
        return torch.sigmoid(self.real_logit(img))

    def to(self, dtype: torch.dtype):
        self._net().to(dtype)
        return self


def preprocess(img, clf: ClassifierHandle) -> torch.Tensor:
    """Bilinear resize to the classifier's input size plus per-channel normalisation."""
    x = check_image_batch(img, "img")
    H, W, _ = clf.input_shape
    x = resize_bilinear(x, (H, W))
    mean = torch.as_tensor(clf.mean, dtype=x.dtype)[None, :, None, None]
    std = torch.as_tensor(clf.std, dtype=x.dtype)[None, :, None, None]
    return (x - mean) / std


def predict_real_prob(clf: ClassifierHandle, img) -> torch.Tensor:
    """Real-class probability; returns a scalar tensor for a single ``[C, H, W]`` image."""
    single = as_tensor(img).dim() == 3
    p = clf.predict_real_prob(img)
    return p[0] if single else p


class _Frozen:
    def _freeze(self):
        self.network_.eval().requires_grad_(False)
        return self


class LinearClassifier(ClassifierHandle, _Frozen):
    """``sigmoid(<weight, x> + bias)`` on the preprocessed image; used as a
    closed-form oracle."""

    def __init__(self, weight, bias: float = 0.0, mean=(0.0, 0.0, 0.0), std=(1.0, 1.0, 1.0), arch_id="linear"):
        weight = as_tensor(weight, torch.float64)
        if weight.dim() != 3:
            raise InvalidArgumentError("weight must be [C, H, W]")
        C, H, W = weight.shape
        self.arch_id = arch_id
        self.input_shape = (H, W, C)
        self.mean, self.std = tuple(mean), tuple(std)
        lin = nn.Linear(C * H * W, 1).to(torch.float64)
        with torch.no_grad():
            lin.weight.copy_(weight.reshape(1, -1))
            lin.bias.fill_(bias)
        self.network_ = nn.Sequential(nn.Flatten(), lin, nn.Flatten(0))
        self._freeze()


class ConstantClassifier(ClassifierHandle):
    """Outputs the same probability for every image."""

    def __init__(self, prob: float, input_shape=(32, 32, 3), arch_id="constant"):
        self.prob = float(prob)
        self.arch_id = arch_id
        self.input_shape = tuple(input_shape)
        self.mean, self.std = (0.0, 0.0, 0.0), (1.0, 1.0, 1.0)

    def _net(self):
        raise NotImplementedError

    @property
    def dtype(self):
        return torch.get_default_dtype()

    def predict_real_prob(self, img):
        x = check_image_batch(img)
        return torch.full((x.shape[0],), self.prob, dtype=x.dtype)

    def to(self, dtype):
        return self


# --------------------------------------------------------------------------
# estimator


@dataclass
class TrainConfig:
    learning_rate: float = 2e-4
    batch_size: int = 64
    epochs: int = 8
    seed: int = 0

    def __post_init__(self):
        check_positive(self.learning_rate, "learning_rate")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")


@dataclass
class LabeledDataset:
    images: np.ndarray
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = check_labels(self.labels)
        if len(self.images) != len(self.labels):
            raise InvalidArgumentError("images and labels must have equal length")

    def __len__(self):
        return len(self.labels)


class ForensicClassifier(ClassifierHandle, BaseEstimator, ClassifierMixin):
    """Desk-scale forensic classifier trained with Adam on binary cross-entropy.

    Parameters
    ----------
    arch : str
        Key of :data:`ARCHITECTURES`.
    learning_rate, batch_size, epochs, seed
        Training recipe; data order and weight init are driven by ``seed``.
    mean, std : tuple of float
        Per-channel normalisation constants stored with the checkpoint.
    """

    def __init__(self, arch="mini_resnet", learning_rate=2e-4, batch_size=64, epochs=8, seed=0,
                 mean=IMAGENET_MEAN, std=IMAGENET_STD):
        self.arch = arch
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.mean = mean
        self.std = std

    @property
    def arch_id(self) -> str:
        return self.arch

    @property
    def input_shape(self) -> tuple[int, int, int]:
        s = _arch_spec(self.arch).input_size
        return (s, s, 3)

    def _net(self):
        check_is_fitted(self, "network_")
        return self.network_

    def initialize(self):
        """Build the seeded, untrained network (what ``fit`` starts from)."""
        spec = _arch_spec(self.arch)
        with torch.random.fork_rng():
            torch.manual_seed(self.seed)
            self.network_ = spec.build()
        self.network_.eval().requires_grad_(False)
        self.classes_ = np.array([0, 1])
        return self

    def fit(self, X, y):
        TrainConfig(self.learning_rate, self.batch_size, self.epochs, self.seed)
        X = check_image_batch(X, "X").float()
        y = check_labels(y)
        if len(y) != len(X) or len(y) == 0:
            raise InvalidArgumentError("X and y must be non-empty and of equal length")
        if np.unique(y).size < 2:
            raise InvalidArgumentError("training data must contain both real and synthetic samples")
        self.initialize()
        net = self.network_.float().train().requires_grad_(True)
        opt = torch.optim.Adam(net.parameters(), lr=self.learning_rate)
        targets = torch.from_numpy(y).float()
        rng = np.random.default_rng(self.seed)
        self.loss_curve_ = []
        with torch.random.fork_rng():
            torch.manual_seed(self.seed)
            for epoch in range(self.epochs):
                order = rng.permutation(len(y))
                total = 0.0
                for start in range(0, len(order), self.batch_size):
                    idx = torch.from_numpy(order[start : start + self.batch_size])
                    logits = net(preprocess(X[idx], self))
                    loss = F.binary_cross_entropy_with_logits(logits, targets[idx])
                    opt.zero_grad()
                    loss.backward()
                    opt.step()
                    total += loss.item() * len(idx)
                self.loss_curve_.append(total / len(order))
                log.debug("%s epoch %d loss %.4f", self.arch, epoch, self.loss_curve_[-1])
        self._recalibrate_batchnorm(X)
        net.eval().requires_grad_(False)
        return self

    def _recalibrate_batchnorm(self, X):
        """Recompute BatchNorm running statistics over ``X`` with the final weights.

        The exponential running averages lag the weights on short schedules,
        which can leave eval-mode predictions stuck on one class.
        """
        bns = [m for m in self.network_.modules() if isinstance(m, nn.modules.batchnorm._BatchNorm)]
        if not bns:
            return
        saved = [m.momentum for m in bns]
        for m in bns:
            m.reset_running_stats()
            m.momentum = None  # cumulative average over the pass
        self.network_.train()
        with torch.no_grad():
            for start in range(0, len(X), self.batch_size):
                self.network_(preprocess(X[start : start + self.batch_size], self))
        for m, momentum in zip(bns, saved):
            m.momentum = momentum

    def predict_proba(self, X) -> np.ndarray:
        p = self.predict_batched(X)
        return np.stack([1.0 - p, p], axis=1)

    def predict_batched(self, X, batch: int = 512) -> np.ndarray:
        X = check_image_batch(X, "X")
        out = []
        with torch.no_grad():
            for start in range(0, len(X), batch):
                out.append(self.predict_real_prob(X[start : start + batch].to(self.dtype)).double().numpy())
        return np.concatenate(out)

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_batched(X) > threshold).astype(np.int64)

    def features(self, img) -> torch.Tensor:
        """Penultimate-layer features (differentiable)."""
        return self._net().features(preprocess(img, self))


def _arch_spec(arch: str) -> ArchSpec:
    try:
        return ARCHITECTURES[arch]
    except KeyError:
        raise InvalidArgumentError(f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}") from None


def train_classifier(cfg: TrainConfig, data: LabeledDataset, arch: str) -> ForensicClassifier:
    if len(data) == 0:
        raise InvalidArgumentError("dataset is empty")
    clf = ForensicClassifier(arch, cfg.learning_rate, cfg.batch_size, cfg.epochs, cfg.seed)
    return clf.fit(data.images, data.labels)


def evaluate_accuracy(clf: ClassifierHandle, data: LabeledDataset, threshold: float = 0.5) -> float:
    """Fraction of samples where ``p_real > threshold`` agrees with the label."""
    if len(data) == 0:
        raise InvalidArgumentError("dataset is empty")
    X = torch.from_numpy(data.images)
    preds = []
    with torch.no_grad():
        for start in range(0, len(X), 512):
            preds.append((clf.predict_real_prob(X[start : start + 512].to(clf.dtype)) > threshold).numpy())
    return float(np.mean(np.concatenate(preds).astype(np.int64) == data.labels))


# --------------------------------------------------------------------------
# persistence


def save_classifier(clf: ForensicClassifier, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "arch_id": clf.arch_id, "input_shape": list(clf.input_shape),
        "mean": list(clf.mean), "std": list(clf.std), "params": clf.get_params(),
    }
    header["params"]["mean"] = list(clf.mean)
    header["params"]["std"] = list(clf.std)
    blob = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "header": header,
            "state_dict": clf.network_.float().state_dict(),
            "loss_curve": list(getattr(clf, "loss_curve_", []))}
    torch.save(blob, path)
    return path


def load_classifier(path) -> ForensicClassifier:
    blob = torch.load(Path(path), map_location="cpu", weights_only=False)
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise InvalidArgumentError(f"{path} is not a classifier checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise InvalidArgumentError(f"unsupported classifier checkpoint version {blob.get('version')}")
    params = dict(blob["header"]["params"])
    params["mean"] = tuple(params["mean"])
    params["std"] = tuple(params["std"])
    clf = ForensicClassifier(**params).initialize()
    clf.network_.load_state_dict(blob["state_dict"])
    clf.network_.eval().requires_grad_(False)
    clf.loss_curve_ = blob.get("loss_curve", [])
    return clf
