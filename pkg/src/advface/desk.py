"""Desk-scale assets: a trained toy generator, the real-vs-generated dataset
and a packaged set of pretrained checkpoints.

The generator is fitted by regression: the first ``N_ATTRIBUTES`` coordinates
of ``z`` are pushed through the normal CDF to obtain face attributes, and the
generator is trained to reproduce the clean rendering of those attributes.
Its samples are therefore face-like but smoother than the noisy "real"
renderings and carry the generator's own noise texture, which is what the
forensic classifiers learn to spot.
"""

from __future__ import annotations

import logging
from importlib import resources
from pathlib import Path

import numpy as np
import torch

from . import faces
from .generator import StyleGenerator, load_generator, sample_initial_batch, save_generator

log = logging.getLogger(__name__)

ASSET_DIR = Path(str(resources.files("advface") / "assets"))


def z_to_attributes(z: torch.Tensor) -> torch.Tensor:
    return 0.5 * (1.0 + torch.erf(z[..., : faces.N_ATTRIBUTES] / np.sqrt(2.0)))


def train_desk_generator(steps: int = 2500, batch_size: int = 32, seed: int = 0, lr: float = 2e-3,
                         **gen_kwargs) -> StyleGenerator:
    torch.manual_seed(seed)
    gen = StyleGenerator(seed=seed, **gen_kwargs)
    opt = torch.optim.Adam(gen.parameters(), lr=lr, betas=(0.9, 0.99))
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, steps)
    rng = torch.Generator().manual_seed(seed)
    L = gen.layer_count
    for step in range(steps):
        z = torch.randn(batch_size, gen.style_dim, generator=rng)
        noise = [torch.randn(batch_size, *s, generator=rng) for s in gen.noise_shapes]
        target = torch.from_numpy(faces.render_faces(z_to_attributes(z).numpy(), gen.image_size))
        w = gen.mapping(z).unsqueeze(1).expand(-1, L, -1)
        loss = (gen.synthesis(w, noise) - target).pow(2).mean()
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
        if step % 250 == 0 or step == steps - 1:
            log.info("generator step %d loss %.5f", step, loss.item())
    return gen.eval().requires_grad_(False)


def generated_faces(gen: StyleGenerator, n: int, seed: int, batch: int = 256) -> np.ndarray:
    """``n`` generator samples from seeds ``seed * 1_000_003 + i`` as float32 NCHW."""
    out = []
    base = int(seed) * 1_000_003
    with torch.no_grad():
        for start in range(0, n, batch):
            seeds = range(base + start, base + min(n, start + batch))
            w, noise = sample_initial_batch(gen, seeds)
            out.append(gen.synthesis(w, noise).float().numpy())
    return np.concatenate(out)


def real_vs_generated(gen: StyleGenerator, n_per_class: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Balanced, shuffled dataset; label 1 = real rendering, 0 = generator sample."""
    real, _ = faces.real_faces(n_per_class, seed=2 * seed + 1, size=gen.image_size)
    fake = generated_faces(gen, n_per_class, seed=2 * seed + 2)
    X = np.concatenate([real, fake]).astype(np.float32)
    y = np.concatenate([np.ones(n_per_class, np.int64), np.zeros(n_per_class, np.int64)])
    perm = np.random.default_rng(seed).permutation(len(y))
    return X[perm], y[perm]


def desk_generator() -> StyleGenerator:
    """The packaged pretrained desk generator."""
    return load_generator(ASSET_DIR / "generator.pt")


# zoo member id -> (architecture, seed)
ZOO_MEMBERS = {
    "mini_resnet": ("mini_resnet", 0),
    "deep_resnet": ("deep_resnet", 0),
    "plain_vgg": ("plain_vgg", 0),
    "dense": ("dense", 0),
    "mbconv": ("mbconv", 0),
    "sepconv": ("sepconv", 0),
}
# frozen network whose penultimate features serve as phi (perceptual loss, FID)
FEATURE_NET = ("plain_vgg", 101)

TABLE1_POOL = ("mini_resnet", "deep_resnet", "plain_vgg", "dense")
TABLE4_POOL = ("mini_resnet", "deep_resnet", "dense", "mbconv", "sepconv")


def build_zoo(gen: StyleGenerator, members=None, n_train: int = 2000, n_test: int = 500,
              epochs: int = 4, learning_rate: float = 2e-4, batch_size: int = 64, data_seed: int = 0):
    """Train each zoo member on real-vs-generated data; returns ``(zoo, accuracies)``.

    The hold-out set is drawn from seeds disjoint from the training set.
    """
    from .forensics import ForensicClassifier, LabeledDataset, evaluate_accuracy

    members = dict(ZOO_MEMBERS if members is None else members)
    X, y = real_vs_generated(gen, n_train, seed=data_seed)
    holdout = LabeledDataset(*real_vs_generated(gen, n_test, seed=data_seed + 1000))
    zoo, acc = {}, {}
    for name, (arch, seed) in members.items():
        clf = ForensicClassifier(arch, learning_rate=learning_rate, batch_size=batch_size,
                                 epochs=epochs, seed=seed).fit(X, y)
        zoo[name] = clf
        acc[name] = evaluate_accuracy(clf, holdout)
        log.info("zoo member %s (%s): hold-out accuracy %.4f", name, arch, acc[name])
    return zoo, acc


def desk_zoo(names=None) -> dict:
    """Packaged pretrained zoo members keyed by id."""
    from .forensics import load_classifier

    names = list(ZOO_MEMBERS) if names is None else list(names)
    return {n: load_classifier(ASSET_DIR / "zoo" / f"{n}.pt") for n in names}


def desk_feature_extractor():
    from .forensics import load_classifier
    from .losses import ClassifierFeatures

    real, _ = faces.real_faces(256, seed=4242)
    return ClassifierFeatures(load_classifier(ASSET_DIR / "zoo" / "phi.pt")).calibrate(real)


def desk_embedder():
    from .losses import AttributeEmbedder

    return AttributeEmbedder.load(ASSET_DIR / "attribute_probe.npz")


def build_assets(out_dir=ASSET_DIR, generator_steps: int = 2500, seed: int = 0):
    """Regenerate every packaged asset (generator, zoo, feature net, probe)."""
    import json

    from .forensics import save_classifier
    from .losses import AttributeEmbedder

    out_dir = Path(out_dir)
    gen_path = out_dir / "generator.pt"
    if gen_path.exists():
        gen = load_generator(gen_path)
    else:
        gen = train_desk_generator(steps=generator_steps, seed=seed)
        save_generator(gen, gen_path)
    zoo, acc = build_zoo(gen, {**ZOO_MEMBERS, "phi": FEATURE_NET})
    for name, clf in zoo.items():
        save_classifier(clf, out_dir / "zoo" / f"{name}.pt")
    (out_dir / "zoo" / "metrics.json").write_text(json.dumps(acc, indent=2, sort_keys=True) + "\n")
    AttributeEmbedder.fit(seed=seed).save(out_dir / "attribute_probe.npz")
    return acc
