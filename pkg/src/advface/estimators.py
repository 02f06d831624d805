"""scikit-learn style wrappers around the attack engines.

``fit`` validates hyperparameters and resolves defaults, ``transform`` maps a
batch of inputs (reference images, seeds or clean images) to adversarial
images as a float32 ``[N, 3, H, W]`` array, and ``score`` returns the attack
success rate on the same inputs.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .attacks import AttackConfig, fgsm, pgd, run_image_guided, run_text_guided
from .losses import Hyperparams
from .validation import InvalidArgumentError, check_image_batch


def _images(X, name="X") -> torch.Tensor:
    x = check_image_batch(torch.as_tensor(np.asarray(X, dtype=np.float32)), name)
    if x.shape[0] == 0:
        raise InvalidArgumentError(f"{name} is empty")
    return x


def _seeds(X) -> list[int]:
    arr = np.asarray(X).reshape(-1)
    if arr.size == 0:
        raise InvalidArgumentError("no seeds given")
    if not np.issubdtype(arr.dtype, np.integer):
        raise InvalidArgumentError("seeds must be integers")
    return [int(s) for s in arr]


class _LatentAttackBase(BaseEstimator, TransformerMixin):
    def _config(self, **defaults) -> AttackConfig:
        hyper = Hyperparams(self.lambda1, self.lambda2, getattr(self, "lambda_id", 0.0))
        kw = {k: getattr(self, k) for k in ("group", "optimize_noise", "learning_rate", "max_iters", "seed")
              if getattr(self, k) is not None}
        return AttackConfig(**{**defaults, **kw, "hyper": hyper})

    def _store(self, results):
        self.results_ = results
        return np.stack([r.image.detach().float().numpy() for r in results])

    def score(self, X, y=None) -> float:
        self.transform(X)
        return float(np.mean([r.success for r in self.results_]))


class ImageGuidedAttack(_LatentAttackBase):
    """Reference-image attack; ``transform(X)`` takes one reference per run.

    Run ``i`` starts from generator seed ``seed + i``.
    """

    def __init__(self, generator=None, classifier=None, phi=None, group="fine", optimize_noise=True,
                 learning_rate=0.01, max_iters=200, lambda1=None, lambda2=0.005, seed=0):
        self.generator = generator
        self.classifier = classifier
        self.phi = phi
        self.group = group
        self.optimize_noise = optimize_noise
        self.learning_rate = learning_rate
        self.max_iters = max_iters
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.seed = seed

    def fit(self, X=None, y=None):
        from . import desk

        self.config_ = self._config()
        self.generator_ = self.generator if self.generator is not None else desk.desk_generator()
        if self.classifier is None:
            raise InvalidArgumentError("classifier is required")
        self.phi_ = self.phi if self.phi is not None else desk.desk_feature_extractor()
        if X is not None:
            _images(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        refs = _images(X)
        seeds = [self.seed + i for i in range(refs.shape[0])]
        return self._store(run_image_guided(self.generator_, self.classifier, refs, self.config_, self.phi_, seeds))


class TextGuidedAttack(_LatentAttackBase):
    """Text-prompt attack; ``transform(X)`` takes a 1-D array of integer seeds."""

    def __init__(self, generator=None, classifier=None, embedder=None, prompt="red hair", group="all",
                 optimize_noise=True, learning_rate=0.001, max_iters=50, lambda1=None, lambda2=0.005,
                 lambda_id=0.0, n_init=50, seed=0):
        self.generator = generator
        self.classifier = classifier
        self.embedder = embedder
        self.prompt = prompt
        self.group = group
        self.optimize_noise = optimize_noise
        self.learning_rate = learning_rate
        self.max_iters = max_iters
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lambda_id = lambda_id
        self.n_init = n_init
        self.seed = seed

    def fit(self, X=None, y=None):
        from . import desk

        self.config_ = self._config()
        self.generator_ = self.generator if self.generator is not None else desk.desk_generator()
        if self.classifier is None:
            raise InvalidArgumentError("classifier is required")
        self.embedder_ = self.embedder if self.embedder is not None else desk.desk_embedder()
        self.embedder_.embed_text(self.prompt)  # fail early on unknown prompts
        if int(self.n_init) < 1:
            raise InvalidArgumentError("n_init must be >= 1")
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        return self._store(run_text_guided(self.generator_, self.classifier, self.prompt, self.config_,
                                           self.embedder_, _seeds(X), n_init=self.n_init))


class PixelAttack(BaseEstimator, TransformerMixin):
    """L-infinity FGSM or PGD on clean images in [0, 1]."""

    def __init__(self, classifier=None, method="pgd", eps=0.06, step=0.01, iters=50):
        self.classifier = classifier
        self.method = method
        self.eps = eps
        self.step = step
        self.iters = iters

    def fit(self, X=None, y=None):
        if self.method not in ("fgsm", "pgd"):
            raise InvalidArgumentError(f"method must be 'fgsm' or 'pgd', got {self.method!r}")
        if self.classifier is None:
            raise InvalidArgumentError("classifier is required")
        if not self.eps > 0:
            raise InvalidArgumentError("eps must be > 0")
        self.is_fitted_ = True
        return self

    def transform(self, X):
        check_is_fitted(self, "is_fitted_")
        x = _images(X).to(self.classifier.dtype)
        if self.method == "fgsm":
            adv = fgsm(x, self.classifier, self.eps)
        else:
            adv = pgd(x, self.classifier, self.eps, self.step, self.iters)
        return adv.detach().float().numpy()

    def score(self, X, y=None) -> float:
        adv = torch.from_numpy(self.transform(X)).to(self.classifier.dtype)
        with torch.no_grad():
            return float((self.classifier.predict_real_prob(adv) > 0.5).double().mean())
