"""Latent-space and pixel-space attacks on forensic classifiers.

The latent attacks share one batched engine: a batch of independent runs
(one per seed) is optimised with Adam, gradients reach only the W+ rows of
the chosen layer group (and the noise maps when ``optimize_noise``), and a
run is frozen the first time its target classifier is fooled. Each run's
loss is a per-sample sum, so runs in a batch do not interact.

Single-run entry points (``attack_image_guided`` etc.) use ``cfg.seed``;
``run_*`` variants take a list of seeds and batch them.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Mapping, Sequence

import numpy as np
import torch

from .forensics import ClassifierHandle
from .generator import (
    LayerGroup,
    StyleGenerator,
    row_mask,
    sample_initial,
    sample_initial_batch,
    synthesize,
)
from .losses import (
    DEFAULT_LAMBDA1,
    FeatureExtractor,
    Hyperparams,
    JointEmbedder,
    ThumbnailIdentity,
    bce_real,
    clip_distance,
    composite_objective,
    identity_loss,
    latent_reg,
    perceptual_loss,
)
from .validation import InvalidArgumentError, check_image_batch, check_positive

log = logging.getLogger(__name__)


@dataclass
class AttackConfig:
    group: str = "fine"
    optimize_noise: bool = True
    learning_rate: float = 0.01
    max_iters: int = 200
    hyper: Hyperparams = field(default_factory=Hyperparams)
    seed: int = 0
    stop_on_success: bool = True
    success_threshold: float = 0.5

    def __post_init__(self):
        self.group = LayerGroup(self.group).value
        if isinstance(self.hyper, Mapping):
            self.hyper = Hyperparams(**self.hyper)
        check_positive(self.learning_rate, "learning_rate")
        if int(self.max_iters) < 1:
            raise InvalidArgumentError("max_iters must be >= 1")
        if not 0.0 <= self.success_threshold <= 1.0:
            raise InvalidArgumentError("success_threshold must be a probability")

    @property
    def lambda1(self) -> float:
        if self.hyper.lambda1 is not None:
            return self.hyper.lambda1
        return DEFAULT_LAMBDA1[self.group]

    @classmethod
    def image_guided(cls, **kw) -> "AttackConfig":
        return cls(**{"learning_rate": 0.01, "max_iters": 200, **kw})

    @classmethod
    def text_guided(cls, **kw) -> "AttackConfig":
        return cls(**{"group": "all", "learning_rate": 0.001, "max_iters": 50, **kw})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetaConfig:
    pool: Sequence[ClassifierHandle]
    inner_lr: float = 50.0
    combos_per_iter: int = 1

    def __post_init__(self):
        if len(self.pool) < 2:
            raise InvalidArgumentError("meta attack needs a pool of at least 2 classifiers")
        check_positive(self.inner_lr, "inner_lr", strict=False)
        if self.combos_per_iter < 1:
            raise InvalidArgumentError("combos_per_iter must be >= 1")


@dataclass
class AttackResult:
    final_latent: torch.Tensor
    final_noise: List[torch.Tensor]
    image: torch.Tensor
    loss_trace: List[Dict[str, float]]
    success_per_classifier: Dict[str, bool]
    iterations_used: int
    wall_clock_seconds: float
    start_latent: torch.Tensor | None = None
    start_noise: List[torch.Tensor] | None = None
    seed: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return bool(self.success_per_classifier) and all(self.success_per_classifier.values())


# --------------------------------------------------------------------------
# guidance terms


class ImageGuidance:
    """Perceptual distance to a reference image (one per run, or shared)."""

    name = "perceptual"

    def __init__(self, ref, phi: FeatureExtractor):
        self.ref = check_image_batch(ref, "ref")
        self.phi = phi

    def prepare(self, n: int, dtype) -> "ImageGuidance":
        ref = self.ref.to(dtype)
        if ref.shape[0] == 1:
            ref = ref.expand(n, -1, -1, -1)
        elif ref.shape[0] != n:
            raise InvalidArgumentError(f"got {ref.shape[0]} reference images for {n} runs")
        g = ImageGuidance.__new__(ImageGuidance)
        g.ref, g.phi = ref, self.phi
        g._ref_feat = self.phi.embed(ref).detach()
        return g

    def select(self, idx):
        g = ImageGuidance.__new__(ImageGuidance)
        g.ref, g.phi, g._ref_feat = self.ref[idx], self.phi, self._ref_feat[idx]
        return g

    def __call__(self, img):
        return (self.phi.embed(img) - self._ref_feat).pow(2).sum(dim=1)


class TextGuidance:
    """Embedding cosine distance to a text prompt."""

    name = "clip"

    def __init__(self, text: str, emb: JointEmbedder):
        if not isinstance(text, str) or not text:
            raise InvalidArgumentError("text prompt must be a non-empty string")
        self.text, self.emb = text, emb
        self.target = emb.embed_text(text)

    def prepare(self, n: int, dtype) -> "TextGuidance":
        return self

    def select(self, idx):
        return self

    def __call__(self, img):
        e = self.emb.embed_image(img)
        return 1.0 - (e * self.target.to(e.dtype)).sum(dim=-1)


# --------------------------------------------------------------------------
# batched engine


class _Batch:
    """Optimisation state for a batch of runs sharing a generator."""

    def __init__(self, gen, w_start, noise_start, group, optimize_noise):
        self.gen = gen
        self.w_start = w_start
        self.noise_start = noise_start
        self.mask = row_mask(group, gen.layer_count)[None, :, None]
        self.optimize_noise = optimize_noise
        self.w_var = w_start.clone().requires_grad_(True)
        self.noise_vars = [n.clone().requires_grad_(optimize_noise) for n in noise_start]

    def params(self):
        return [self.w_var] + (self.noise_vars if self.optimize_noise else [])

    def latent(self, w_var=None):
        return torch.where(self.mask, self.w_var if w_var is None else w_var, self.w_start)

    def noise(self, noise_vars=None):
        if not self.optimize_noise:
            return self.noise_start
        return self.noise_vars if noise_vars is None else noise_vars

    def render(self, w_var=None, noise_vars=None):
        return self.gen.synthesis(self.latent(w_var), self.noise(noise_vars))

    def shrink(self, keep: torch.Tensor, opt: torch.optim.Adam) -> torch.optim.Adam:
        """Drop finished runs, carrying Adam moments of the kept ones."""
        old = self.params()
        states = [opt.state.get(p, {}) for p in old]
        self.w_start = self.w_start[keep]
        self.noise_start = [n[keep] for n in self.noise_start]
        self.w_var = self.w_var.detach()[keep].requires_grad_(True)
        self.noise_vars = [n.detach()[keep].requires_grad_(self.optimize_noise) for n in self.noise_vars]
        new_opt = torch.optim.Adam(self.params(), **{k: opt.defaults[k] for k in ("lr", "betas", "eps")})
        for p, st in zip(self.params(), states):
            if st:
                new_opt.state[p] = {
                    "step": st["step"].clone(),
                    "exp_avg": st["exp_avg"][keep].clone(),
                    "exp_avg_sq": st["exp_avg_sq"][keep].clone(),
                }
        return new_opt


# objective(batch, it) -> (total[B], terms{name: [B]}, stop_prob[B] | None, extra_grads_done)
Objective = Callable[["_Batch", int, torch.Tensor], tuple]


def _run_engine(gen, w_start, noise_start, cfg: AttackConfig, objective, *, stop: bool,
                select: Callable[[torch.Tensor], None] | None = None):
    """Optimise a batch; returns per-run (latent, noise, trace, iterations)."""
    B = w_start.shape[0]
    batch = _Batch(gen, w_start, noise_start, cfg.group, cfg.optimize_noise)
    opt = torch.optim.Adam(batch.params(), lr=cfg.learning_rate, betas=(0.9, 0.999))
    ids = torch.arange(B)
    traces = [[] for _ in range(B)]
    final_w = [None] * B
    final_noise = [None] * B
    used = [0] * B

    def freeze(local: torch.Tensor, iteration: int):
        w = batch.latent().detach()
        noise = [n.detach() for n in batch.noise()]
        for j in local.tolist():
            i = int(ids[j])
            final_w[i] = w[j].clone()
            final_noise[i] = [n[j].clone() for n in noise]
            used[i] = iteration

    for it in range(int(cfg.max_iters)):
        opt.zero_grad(set_to_none=True)
        total, terms, prob = objective(batch, it, ids)
        with torch.no_grad():
            cols = {k: v.detach().double().tolist() for k, v in terms.items()}
            cols["total"] = total.detach().double().tolist()
            for j, i in enumerate(ids.tolist()):
                traces[i].append({k: v[j] for k, v in cols.items()})
        if stop and prob is not None:
            done = (prob.detach() > cfg.success_threshold)
            if done.any():
                freeze(done.nonzero().flatten(), it + 1)
                keep = (~done).nonzero().flatten()
                if keep.numel() == 0:
                    return final_w, final_noise, traces, used
                # the graph is rebuilt next iteration, so reuse the loss on kept rows only
                total = total[keep]
                if total.requires_grad:
                    total.sum().backward()
                    _drop_grads(batch, keep)
                opt.step()
                opt = batch.shrink(keep, opt)
                ids = ids[keep]
                if select is not None:
                    select(keep)
                continue
        if total.requires_grad:
            total.sum().backward()
        opt.step()
    freeze(torch.arange(len(ids)), int(cfg.max_iters))
    return final_w, final_noise, traces, used


def _drop_grads(batch: _Batch, keep: torch.Tensor):
    # rows that just finished are removed by shrink(); zero their grads so the
    # last Adam step only moves kept rows (their values are already frozen)
    for p in batch.params():
        if p.grad is not None:
            g = torch.zeros_like(p.grad)
            g[keep] = p.grad[keep]
            p.grad = g


def _success_flags(image: torch.Tensor, classifiers: Mapping[str, ClassifierHandle], threshold: float):
    with torch.no_grad():
        return {cid: bool(clf.predict_real_prob(image.unsqueeze(0).to(clf.dtype))[0] > threshold)
                for cid, clf in classifiers.items()}


def _finish(gen, seeds, w_start, noise_start, final_w, final_noise, traces, used, elapsed,
            classifiers, cfg, metadata) -> List[AttackResult]:
    results = []
    per_run = elapsed / len(seeds)
    with torch.no_grad():
        for i, seed in enumerate(seeds):
            image = synthesize(gen, final_w[i], final_noise[i])
            results.append(AttackResult(
                final_latent=final_w[i],
                final_noise=final_noise[i],
                image=image,
                loss_trace=traces[i][: used[i]],
                success_per_classifier=_success_flags(image, classifiers, cfg.success_threshold),
                iterations_used=used[i],
                wall_clock_seconds=per_run,
                start_latent=w_start[i].clone(),
                start_noise=[n[i].clone() for n in noise_start],
                seed=int(seed),
                metadata=dict(metadata, batch_size=len(seeds)),
            ))
    return results


def _clf_ids(classifiers) -> Dict[str, ClassifierHandle]:
    if isinstance(classifiers, Mapping):
        return dict(classifiers)
    return {getattr(c, "arch_id", f"clf{i}"): c for i, c in enumerate(classifiers)}


def _dtype(gen) -> torch.dtype:
    return next(gen.parameters()).dtype


def _guided_objective(guidance, adv_fn, cfg, id_ref=None, id_emb=None):
    """Guidance + lambda1 * latent_reg + lambda2 * adversarial (+ identity) per sample."""
    lam1, lam2, lam_id = cfg.lambda1, cfg.hyper.lambda2, cfg.hyper.lambda_id
    state = {"guidance": guidance, "id_ref": id_ref}

    def objective(batch, it, ids):
        img = batch.render()
        g = state["guidance"](img)
        reg = latent_reg(batch.latent(), batch.w_start)
        adv, prob = adv_fn(img)
        terms = {guidance.name: g, "latent_reg": reg, "adversarial": adv}
        parts = [(1.0, lambda: g), (lam1, lambda: reg), (lam2, lambda: adv)]
        if lam_id > 0:
            idl = identity_loss(img, state["id_ref"], id_emb)
            terms["identity"] = idl
            parts.append((lam_id, lambda: idl))
        return composite_objective(parts), terms, prob

    def select(keep):
        state["guidance"] = state["guidance"].select(keep)
        if state["id_ref"] is not None:
            state["id_ref"] = state["id_ref"][keep]
        adv_fn.select(keep)

    return objective, select


class _SingleAdv:
    def __init__(self, clf):
        self.clf = clf

    def __call__(self, img):
        p = self.clf.predict_real_prob(img)
        return bce_real(p), p

    def select(self, keep):
        pass


class _MeanAdv:
    def __init__(self, pool):
        self.pool = list(pool)

    def __call__(self, img):
        probs = torch.stack([c.predict_real_prob(img) for c in self.pool])
        return bce_real(probs).mean(dim=0), probs.min(dim=0).values

    def select(self, keep):
        pass


def _latent_attack(gen, seeds, cfg, guidance, adv, classifiers, metadata, *, start=None,
                   stop=None, id_emb=None) -> List[AttackResult]:
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise InvalidArgumentError("need at least one seed")
    dtype = _dtype(gen)
    t0 = time.perf_counter()
    if start is None:
        w_start, noise_start = sample_initial_batch(gen, seeds)
    else:
        w_start, noise_start = start
    g = guidance.prepare(len(seeds), dtype)
    id_ref = None
    if cfg.hyper.lambda_id > 0:
        id_emb = id_emb or ThumbnailIdentity()
        with torch.no_grad():
            id_ref = gen.synthesis(w_start, noise_start)
    objective, select = _guided_objective(g, adv, cfg, id_ref, id_emb)
    stop = cfg.stop_on_success if stop is None else stop
    fw, fn, tr, used = _run_engine(gen, w_start, noise_start, cfg, objective, stop=stop, select=select)
    elapsed = time.perf_counter() - t0
    return _finish(gen, seeds, w_start, noise_start, fw, fn, tr, used, elapsed, classifiers, cfg, metadata)


# --------------------------------------------------------------------------
# image-guided


def run_image_guided(gen: StyleGenerator, clf: ClassifierHandle, ref, cfg: AttackConfig,
                     phi: FeatureExtractor, seeds: Sequence[int]) -> List[AttackResult]:
    """Batched reference-image attack; ``ref`` is one image or one per seed."""
    guidance = ImageGuidance(ref, phi)
    meta = {"method": "image_guided", "group": cfg.group, "optimize_noise": cfg.optimize_noise}
    return _latent_attack(gen, seeds, cfg, guidance, _SingleAdv(clf), {clf.arch_id: clf}, meta)


def attack_image_guided(gen, clf, ref, cfg: AttackConfig, phi) -> AttackResult:
    """Perceptual + latent-regulariser + adversarial BCE descent over the group rows."""
    return run_image_guided(gen, clf, ref, cfg, phi, [cfg.seed])[0]


# --------------------------------------------------------------------------
# text-guided


def _candidate_seeds(seed: int, n: int) -> list[int]:
    return np.random.default_rng(int(seed)).integers(0, 2**31 - 1, size=n).tolist()


def init_best_latent(gen, text: str, emb: JointEmbedder, n: int = 50, seed: int = 0):
    """Among ``n`` seeded samples, the (latent, noise) whose image is closest to ``text``."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    cands = _candidate_seeds(seed, n)
    w, noise = sample_initial_batch(gen, cands)
    with torch.no_grad():
        d = clip_distance(gen.synthesis(w, noise), text, emb)
    best = int(torch.argmin(d))
    return w[best].clone(), [x[best].clone() for x in noise]


def _best_starts(gen, text, emb, seeds, n):
    draws = [init_best_latent(gen, text, emb, n, s) for s in seeds]
    w = torch.stack([d[0] for d in draws])
    noise = [torch.stack([d[1][i] for d in draws]) for i in range(gen.layer_count)]
    return w, noise


def run_text_guided(gen, clf, text: str, cfg: AttackConfig, emb: JointEmbedder, seeds: Sequence[int],
                    n_init: int = 50, id_emb: FeatureExtractor | None = None) -> List[AttackResult]:
    guidance = TextGuidance(text, emb)
    start = _best_starts(gen, text, emb, seeds, n_init)
    meta = {"method": "text_guided", "prompt": text, "group": cfg.group, "optimize_noise": cfg.optimize_noise}
    return _latent_attack(gen, seeds, cfg, guidance, _SingleAdv(clf), {clf.arch_id: clf}, meta,
                          start=start, id_emb=id_emb)


def attack_text_guided(gen, clf, text: str, cfg: AttackConfig, emb: JointEmbedder, n_init: int = 50,
                       id_emb: FeatureExtractor | None = None) -> AttackResult:
    """Embedding-distance + regulariser + adversarial BCE (+ identity) descent from
    the best of ``n_init`` samples."""
    return run_text_guided(gen, clf, text, cfg, emb, [cfg.seed], n_init, id_emb)[0]


# --------------------------------------------------------------------------
# multi-classifier attacks


def _guidance_of(guidance, gen):
    if isinstance(guidance, (ImageGuidance, TextGuidance)):
        return guidance
    raise InvalidArgumentError("guidance must be an ImageGuidance or TextGuidance")


def _starts_for(gen, guidance, seeds, n_init):
    if isinstance(guidance, TextGuidance):
        return _best_starts(gen, guidance.text, guidance.emb, seeds, n_init)
    return sample_initial_batch(gen, seeds)


def run_ensemble(gen, pool: Sequence[ClassifierHandle], guidance, cfg: AttackConfig, seeds,
                 n_init: int = 50, stop_on_success: bool = False) -> List[AttackResult]:
    pool = _clf_ids(pool)
    if not pool:
        raise InvalidArgumentError("ensemble pool must be non-empty")
    guidance = _guidance_of(guidance, gen)
    start = _starts_for(gen, guidance, seeds, n_init)
    meta = {"method": "ensemble", "pool": list(pool), "group": cfg.group, "optimize_noise": cfg.optimize_noise}
    return _latent_attack(gen, seeds, cfg, guidance, _MeanAdv(pool.values()), pool, meta,
                          start=start, stop=stop_on_success)


def attack_ensemble(gen, pool, guidance, cfg: AttackConfig, n_init: int = 50) -> AttackResult:
    """Guided attack whose adversarial term is the mean BCE over ``pool``."""
    return run_ensemble(gen, pool, guidance, cfg, [cfg.seed], n_init)[0]


def run_meta(gen, meta: MetaConfig, guidance, cfg: AttackConfig, seeds, n_init: int = 50) -> List[AttackResult]:
    """First-order meta-learning attack.

    Every iteration and run draws a random meta-test classifier from the pool
    (the rest form meta-train). The meta-train objective (guidance +
    regulariser + mean BCE on meta-train) gives a provisional step of size
    ``inner_lr``; the meta-test BCE is evaluated at the stepped point, and the
    sum of both losses drives the Adam update. The inner gradient is treated
    as a constant (no second-order term).
    """
    pool = _clf_ids(meta.pool)
    members = list(pool.values())
    K = len(members)
    guidance = _guidance_of(guidance, gen)
    seeds = [int(s) for s in seeds]
    dtype = _dtype(gen)
    t0 = time.perf_counter()
    w_start, noise_start = _starts_for(gen, guidance, seeds, n_init)
    state = {"g": guidance.prepare(len(seeds), dtype)}
    rngs = [np.random.default_rng([s, 0x5EED]) for s in seeds]
    lam1, lam2 = cfg.lambda1, cfg.hyper.lambda2

    def draw_test(ids):
        # [combos, B] meta-test index per run; the rest of the pool is meta-train
        return torch.tensor([[int(rngs[int(i)].integers(K)) for i in ids.tolist()]
                             for _ in range(meta.combos_per_iter)])

    def objective(batch, it, ids):
        img = batch.render()
        g = state["g"](img)
        reg = latent_reg(batch.latent(), batch.w_start)
        bce = torch.stack([bce_real(c.predict_real_prob(img)) for c in members])  # [K, B]
        tests = draw_test(ids)
        train_total, test_total = 0.0, 0.0
        for test_idx in tests:
            onehot = torch.nn.functional.one_hot(test_idx, K).T.to(bce.dtype)  # [K, B]
            train_adv = (bce * (1 - onehot)).sum(0) / (K - 1)
            train = g + lam1 * reg + lam2 * train_adv
            grads = torch.autograd.grad(train.sum(), batch.params(), retain_graph=True)
            stepped = [p - meta.inner_lr * gr.detach() for p, gr in zip(batch.params(), grads)]
            w_var = stepped[0]
            noise_vars = stepped[1:] if batch.optimize_noise else None
            img2 = batch.render(w_var, noise_vars)
            # only each run's own meta-test classifier is evaluated at the stepped point
            test_bce = torch.zeros_like(g)
            for k in torch.unique(test_idx).tolist():
                rows = (test_idx == k).nonzero().squeeze(1)
                test_bce = test_bce.index_put((rows,), bce_real(members[k].predict_real_prob(img2[rows])))
            test = lam2 * test_bce
            train_total = train_total + train
            test_total = test_total + test
        n = len(tests)
        train_total, test_total = train_total / n, test_total / n
        total = train_total + test_total
        terms = {guidance.name: g, "latent_reg": reg, "meta_train": train_total, "meta_test": test_total,
                 "meta_test_index": tests[0].to(g.dtype)}
        return total, terms, None

    fw, fn, tr, used = _run_engine(gen, w_start, noise_start, cfg, objective, stop=False)
    elapsed = time.perf_counter() - t0
    info = {"method": "meta", "pool": list(pool), "inner_lr": meta.inner_lr, "group": cfg.group,
            "optimize_noise": cfg.optimize_noise}
    return _finish(gen, seeds, w_start, noise_start, fw, fn, tr, used, elapsed, pool, cfg, info)


def attack_meta(gen, meta: MetaConfig, guidance, cfg: AttackConfig, n_init: int = 50) -> AttackResult:
    return run_meta(gen, meta, guidance, cfg, [cfg.seed], n_init)[0]


# --------------------------------------------------------------------------
# naive two-stage baseline


def invert_image(gen, ref, phi, iters: int = 500, lr: float = 0.01, seed: int = 0, pixel_weight: float = 1.0):
    """Optimisation-based inversion over a fresh W+ code (noise held fixed)."""
    ref = check_image_batch(ref, "ref").to(_dtype(gen))
    w, noise = sample_initial(gen, seed)
    w = w.unsqueeze(0).clone().requires_grad_(True)
    noise = [n.unsqueeze(0) for n in noise]
    ref_feat = phi.embed(ref).detach()
    opt = torch.optim.Adam([w], lr=lr, betas=(0.9, 0.999))
    for _ in range(iters):
        img = gen.synthesis(w, noise)
        loss = (phi.embed(img) - ref_feat).pow(2).sum() + pixel_weight * (img - ref).pow(2).mean()
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
    return w.detach()[0]


def mix_rows(w_s: torch.Tensor, w_r: torch.Tensor, group) -> torch.Tensor:
    """Copy of ``w_s`` with the group rows taken from ``w_r``."""
    mask = row_mask(group, w_s.shape[-2])
    return torch.where(mask[:, None], w_r, w_s)


def attack_image_naive(gen, clf, ref, group, cfg: AttackConfig, phi, inversion_iters: int = 500) -> AttackResult:
    """Invert ``ref``, splice its group rows into the initial code, then optimise
    the spliced code adversarially (BCE + latent regulariser)."""
    cfg = replace(cfg, group=LayerGroup(group).value)
    t0 = time.perf_counter()
    w_s, noise_s = sample_initial(gen, cfg.seed)
    w_r = invert_image(gen, ref, phi, iters=inversion_iters, seed=cfg.seed + 7919)
    mixed = mix_rows(w_s, w_r, cfg.group)
    lam1, lam2 = cfg.lambda1, cfg.hyper.lambda2
    adv = _SingleAdv(clf)

    def objective(batch, it, ids):
        img = batch.render()
        a, p = adv(img)
        reg = latent_reg(batch.latent(), batch.w_start)
        return composite_objective([(lam1, lambda: reg), (lam2, lambda: a)]), {"latent_reg": reg, "adversarial": a}, p

    w0, n0 = mixed.unsqueeze(0), [n.unsqueeze(0) for n in noise_s]
    fw, fn, tr, used = _run_engine(gen, w0, n0, cfg, objective, stop=cfg.stop_on_success)
    elapsed = time.perf_counter() - t0
    res = _finish(gen, [cfg.seed], w0, n0, fw, fn, tr, used, elapsed, {clf.arch_id: clf}, cfg,
                  {"method": "image_naive", "group": cfg.group, "inversion_iters": inversion_iters})[0]
    res.start_latent = w_s
    res.metadata["mixed_latent"] = mixed
    return res


# --------------------------------------------------------------------------
# pixel-space baselines


def _bce_grad(img: torch.Tensor, clf: ClassifierHandle) -> torch.Tensor:
    x = img.detach().clone().requires_grad_(True)
    loss = bce_real(clf.predict_real_prob(x)).sum()
    (grad,) = torch.autograd.grad(loss, x)
    return grad


def fgsm(img, clf: ClassifierHandle, eps: float = 0.06) -> torch.Tensor:
    """One signed-gradient step toward the real label, clipped to [0, 1]."""
    single = torch.as_tensor(img).dim() == 3
    x = check_image_batch(img, "img", unit_range=True)
    check_positive(eps, "eps")
    adv = (x - eps * torch.sign(_bce_grad(x, clf))).clamp(0.0, 1.0)
    return adv[0] if single else adv


def pgd(img, clf: ClassifierHandle, eps: float = 0.06, step: float = 0.01, iters: int = 50) -> torch.Tensor:
    """Iterated signed-gradient steps projected onto the eps-ball and [0, 1]."""
    single = torch.as_tensor(img).dim() == 3
    x0 = check_image_batch(img, "img", unit_range=True)
    check_positive(eps, "eps")
    check_positive(step, "step")
    if step > eps:
        raise InvalidArgumentError("step must not exceed eps")
    lo, hi = (x0 - eps).clamp_min(0.0), (x0 + eps).clamp_max(1.0)
    x = x0.clone()
    for _ in range(int(iters)):
        x = x - step * torch.sign(_bce_grad(x, clf))
        x = torch.max(torch.min(x, hi), lo)
    return x[0] if single else x
