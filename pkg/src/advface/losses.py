"""Objective terms for the latent attacks.

Every loss accepts single images ``[C, H, W]`` (returning a 0-d tensor) or
batches ``[B, C, H, W]`` (returning ``[B]``), and is differentiable with
respect to its image / latent arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from . import faces
from .forensics import PROB_EPS, ClassifierHandle, ForensicClassifier
from .validation import (
    InvalidArgumentError,
    NumericDegeneracyError,
    as_tensor,
    check_image_batch,
    check_same_shape,
)


class FeatureExtractor(Protocol):
    layer_tag: str

    def embed(self, img: torch.Tensor) -> torch.Tensor:
        """``[B, C, H, W]`` -> ``[B, F]``."""


class JointEmbedder(Protocol):
    def embed_image(self, img: torch.Tensor) -> torch.Tensor:
        """``[B, C, H, W]`` -> unit-norm ``[B, E]``."""

    def embed_text(self, text: str) -> torch.Tensor:
        """Unit-norm ``[E]``."""


@dataclass
class Hyperparams:
    """Loss weights. ``lambda1=None`` picks the per-group default."""

    lambda1: float | None = None
    lambda2: float = 0.005
    lambda_id: float = 0.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda_id"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise InvalidArgumentError(f"{name} must be >= 0, got {value}")


# uncalibrated stand-ins: heavier for coarse rows, lighter for fine rows
DEFAULT_LAMBDA1 = {"coarse": 0.02, "middle": 0.01, "fine": 0.002, "all": 0.01}


def _pair(a, b):
    single = as_tensor(a).dim() == 3
    a = check_image_batch(a, "a")
    b = check_image_batch(b, "b")
    check_same_shape(a, b)
    return a, b, single


def _unbatch(x: torch.Tensor, single: bool) -> torch.Tensor:
    return x[0] if single else x


# --------------------------------------------------------------------------
# feature extractors


class PixelFeatures:
    """Flattened pixels; makes the perceptual loss a plain squared L2."""

    layer_tag = "pixels"

    def embed(self, img):
        return check_image_batch(img).flatten(1)


class ClassifierFeatures:
    """Frozen penultimate features of a trained zoo network.

    Features are multiplied by ``scale``; :meth:`calibrate` picks it so that
    real images have mean squared feature norm ``target``.
    """

    def __init__(self, clf: ForensicClassifier, scale: float = 1.0):
        self.clf = clf
        self.scale = float(scale)
        self.layer_tag = f"{clf.arch_id}:penultimate"

    @property
    def dim(self) -> int:
        return self.clf.network_.feature_dim

    def calibrate(self, images, target: float = 0.1) -> "ClassifierFeatures":
        with torch.no_grad():
            f = self.clf.features(check_image_batch(images).to(self.clf.dtype))
        self.scale = float(np.sqrt(target) / f.pow(2).sum(dim=1).mean().sqrt())
        return self

    def embed(self, img):
        return self.clf.features(img) * self.scale

    def to(self, dtype):
        self.clf.to(dtype)
        return self


class ThumbnailIdentity:
    """Identity embedding: mean-centred grayscale thumbnail.

    Area-pools the image to ``size x size`` and subtracts the per-image mean
    so the cosine compares spatial layout rather than overall brightness.
    """

    layer_tag = "thumbnail"

    def __init__(self, size: int = 8):
        self.size = size

    def embed(self, img):
        x = check_image_batch(img)
        gray = x.mean(dim=1, keepdim=True)
        thumb = F.adaptive_avg_pool2d(gray, self.size).flatten(1)
        return thumb - thumb.mean(dim=1, keepdim=True)


# --------------------------------------------------------------------------
# attribute embedder (text -> attribute directions)

PROMPTS: Mapping[str, Mapping[str, float]] = {
    "red hair": {"hair_redness": 1.0, "hair_brightness": 0.5},
    "white hair": {"hair_brightness": 1.0, "hair_redness": -0.5},
    "dark hair": {"hair_brightness": -1.0},
    "long hair": {"hair_length": 1.0},
    "big eyes": {"eye_size": 1.0},
    "small eyes": {"eye_size": -1.0},
    "smiling": {"smile": 1.0},
    "red lipstick": {"lip_redness": 1.0},
    "dark skin": {"skin_tone": -1.0},
    "pale skin": {"skin_tone": 1.0},
    "looking left": {"pose": -1.0},
    "looking right": {"pose": 1.0},
    "wide face": {"face_width": 1.0},
    "bright background": {"background_brightness": 1.0},
    "smiling with red lipstick": {"smile": 1.0, "lip_redness": 1.0},
    "big eyes and dark skin": {"eye_size": 1.0, "skin_tone": -1.0},
}


def _unit(v: torch.Tensor, eps: float = 0.0) -> torch.Tensor:
    n = v.norm(dim=-1, keepdim=True)
    if eps == 0.0 and bool((n == 0).any()):
        raise NumericDegeneracyError("zero-norm embedding")
    return v / n.clamp_min(eps) if eps else v / n


class AttributeEmbedder:
    """Joint image/text embedding over the desk faces' generative attributes.

    Images are scored by a fixed linear probe (pixels -> standardised
    attribute estimates); text prompts are lookup keys to attribute target
    directions. Both sides are L2-normalised.
    """

    def __init__(self, weight: np.ndarray, bias: np.ndarray, prompts: Mapping[str, Mapping[str, float]] = PROMPTS,
                 image_size: int = faces.IMAGE_SIZE):
        self.weight = torch.as_tensor(weight, dtype=torch.float32)  # [P, A]
        self.bias = torch.as_tensor(bias, dtype=torch.float32)  # [A]
        self.prompts = dict(prompts)
        self.image_size = image_size

    @classmethod
    def fit(cls, n: int = 6000, seed: int = 0, alpha: float = 1.0, image_size: int = faces.IMAGE_SIZE):
        """Ridge-regress standardised attributes on pixels of noisy and clean renderings."""
        X, attrs = faces.real_faces(n, seed, image_size)
        clean = faces.render_faces(attrs[: n // 2], image_size)
        X = np.concatenate([X, clean]).reshape(n + n // 2, -1).astype(np.float64)
        A = (np.concatenate([attrs, attrs[: n // 2]]) - 0.5) / np.sqrt(1 / 12)
        mu = X.mean(0)
        Xc = X - mu
        W = np.linalg.solve(Xc.T @ Xc + alpha * np.eye(X.shape[1]), Xc.T @ A)
        b = A.mean(0) - mu @ W
        return cls(W, b, image_size=image_size)

    def to(self, dtype):
        self.weight = self.weight.to(dtype)
        self.bias = self.bias.to(dtype)
        return self

    def attributes(self, img) -> torch.Tensor:
        """Standardised attribute estimates ``[B, A]``."""
        x = check_image_batch(img)
        return x.flatten(1).to(self.weight.dtype) @ self.weight + self.bias

    def embed_image(self, img):
        return _unit(self.attributes(img))

    def target(self, text: str) -> torch.Tensor:
        if not isinstance(text, str) or not text.strip():
            raise InvalidArgumentError("text prompt must be a non-empty string")
        key = text.strip().lower()
        if key not in self.prompts:
            raise InvalidArgumentError(f"unknown prompt {text!r}; known: {sorted(self.prompts)}")
        v = torch.zeros(len(faces.ATTRIBUTES), dtype=self.weight.dtype)
        for name, value in self.prompts[key].items():
            v[faces.ATTRIBUTES.index(name)] = value
        return v

    def embed_text(self, text):
        return _unit(self.target(text))

    def save(self, path):
        np.savez(path, weight=self.weight.double().numpy(), bias=self.bias.double().numpy())

    @classmethod
    def load(cls, path, prompts=PROMPTS):
        blob = np.load(path)
        return cls(blob["weight"], blob["bias"], prompts)


class FixedEmbedder:
    """Embedder with explicitly supplied vectors; for tests and external models."""

    def __init__(self, image_fn: Callable[[torch.Tensor], torch.Tensor], texts: Mapping[str, Sequence[float]]):
        self.image_fn = image_fn
        self.texts = {k: torch.as_tensor(v, dtype=torch.float64) for k, v in texts.items()}

    def embed_image(self, img):
        return _unit(self.image_fn(check_image_batch(img)))

    def embed_text(self, text):
        if not text:
            raise InvalidArgumentError("text prompt must be a non-empty string")
        if text not in self.texts:
            raise InvalidArgumentError(f"unknown prompt {text!r}")
        return _unit(self.texts[text])


# --------------------------------------------------------------------------
# loss terms


def perceptual_loss(a, b, phi: FeatureExtractor) -> torch.Tensor:
    """Squared L2 distance between ``phi`` features."""
    a, b, single = _pair(a, b)
    fa, fb = phi.embed(a), phi.embed(b)
    return _unbatch((fa - fb).pow(2).sum(dim=1), single)


def latent_reg(w, w_s) -> torch.Tensor:
    """Squared Frobenius distance between W+ codes (``[L, D]`` or ``[B, L, D]``)."""
    w, w_s = as_tensor(w), as_tensor(w_s)
    check_same_shape(w, w_s, ("w", "w_s"))
    if w.dim() not in (2, 3):
        raise InvalidArgumentError(f"latent must be [L, D] or [B, L, D], got {tuple(w.shape)}")
    return (w - w_s).pow(2).sum(dim=(-2, -1))


def bce_real(prob: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy against the real label, on clamped probabilities."""
    return -torch.log(prob.clamp(PROB_EPS, 1.0 - PROB_EPS))


def adversarial_bce(clf: ClassifierHandle, img) -> torch.Tensor:
    """``-log p_real`` of ``img`` under ``clf`` (preprocessing included)."""
    single = as_tensor(img).dim() == 3
    return _unbatch(bce_real(clf.predict_real_prob(img)), single)


def cosine_distance(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    return 1.0 - (_unit(u) * _unit(v)).sum(dim=-1)


def clip_distance(img, text: str, emb: JointEmbedder) -> torch.Tensor:
    """``1 - cos(embed_image(img), embed_text(text))`` in [0, 2]."""
    if not isinstance(text, str) or not text:
        raise InvalidArgumentError("text prompt must be a non-empty string")
    single = as_tensor(img).dim() == 3
    t = emb.embed_text(text)
    e = emb.embed_image(img)
    return _unbatch(cosine_distance(e, t.to(e.dtype).expand_as(e)), single)


def identity_loss(a, b, id_emb: FeatureExtractor) -> torch.Tensor:
    """Cosine distance between identity embeddings of two images."""
    a, b, single = _pair(a, b)
    return _unbatch(cosine_distance(id_emb.embed(a), id_emb.embed(b)), single)


def composite_objective(terms: Iterable[tuple[float, Callable[[], torch.Tensor]]],
                        wrt: Sequence[torch.Tensor] | None = None):
    """Weighted sum of loss thunks.

    Returns the summed tensor; with ``wrt`` also returns its gradients with
    respect to those tensors (zeros where a tensor is unused).
    """
    total = None
    for weight, thunk in terms:
        if weight < 0:
            raise InvalidArgumentError(f"term weights must be >= 0, got {weight}")
        if weight == 0:
            continue
        value = weight * thunk()
        total = value if total is None else total + value
    if total is None:
        ref = wrt[0] if wrt else None
        total = torch.zeros((), dtype=ref.dtype if ref is not None else torch.get_default_dtype())
        if ref is not None:
            total = total + 0.0 * ref.sum()
    if wrt is None:
        return total
    grads = torch.autograd.grad(total.sum(), list(wrt), allow_unused=True)
    grads = [torch.zeros_like(t) if g is None else g for t, g in zip(wrt, grads)]
    return total, grads
