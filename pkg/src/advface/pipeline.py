"""Experiment plumbing behind the command-line verbs.

Each config is content-addressed: its outputs live under
``<root>/<config-hash>/{checkpoints,results,reports}`` next to a
``manifest.json``. A stage whose manifest entry exists with all of its
artifacts on disk is skipped, so re-running an unchanged config is a no-op.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
import time
from dataclasses import replace
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import torch
import yaml

from . import desk, faces
from .attacks import (
    AttackConfig,
    AttackResult,
    ImageGuidance,
    MetaConfig,
    TextGuidance,
    attack_image_naive,
    fgsm,
    pgd,
    run_ensemble,
    run_image_guided,
    run_meta,
    run_text_guided,
)
from .config import ExperimentConfig, dump_config
from .evaluation import TransferTable, contact_sheet, fid, held_out_success
from .forensics import (
    ARCHITECTURES,
    ForensicClassifier,
    LabeledDataset,
    evaluate_accuracy,
    load_classifier,
    save_classifier,
)
from .generator import load_generator, sample_initial_batch
from .losses import PROMPTS, AttributeEmbedder, Hyperparams
from .results import load_result, read_png, run_ids, save_result
from .validation import ConfigError, InvalidArgumentError

log = logging.getLogger(__name__)

OUTPUT_ENV = "ADVFACE_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "outputs"


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def output_root(out=None) -> Path:
    return Path(out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT_ROOT)


def set_jobs(jobs: int | None):
    if jobs:
        torch.set_num_threads(int(jobs))


# --------------------------------------------------------------------------
# run directory and manifest


class RunDir:
    def __init__(self, cfg: ExperimentConfig, root=None):
        self.cfg = cfg
        self.hash = cfg.config_hash()
        self.path = output_root(root) / self.hash
        self.checkpoints = self.path / "checkpoints"
        self.results = self.path / "results"
        self.reports = self.path / "reports"
        self.manifest_path = self.path / "manifest.json"

    def prepare(self) -> "RunDir":
        for d in (self.checkpoints, self.results, self.reports):
            d.mkdir(parents=True, exist_ok=True)
        cfg_file = self.path / "config.yaml"
        if not cfg_file.exists():
            cfg_file.write_text(dump_config(self.cfg))
        return self

    def manifest(self) -> dict:
        if self.manifest_path.exists():
            return json.loads(self.manifest_path.read_text())
        return {"config_hash": self.hash, "code_version": code_version(), "stages": {}}

    def done(self, stage: str) -> bool:
        entry = self.manifest()["stages"].get(stage)
        return bool(entry) and all((self.path / a).exists() for a in entry["artifacts"])

    def record(self, stage: str, artifacts: Sequence[Path], started: float):
        m = self.manifest()
        m["stages"][stage] = {
            "artifacts": sorted(str(Path(a).relative_to(self.path)) for a in artifacts),
            "started": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        self.manifest_path.write_text(json.dumps(m, indent=1, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# assets


def load_gen(cfg: ExperimentConfig):
    return desk.desk_generator() if cfg.generator == "desk" else load_generator(cfg.generator)


def load_zoo(cfg: ExperimentConfig, names=None) -> Dict[str, ForensicClassifier]:
    names = list(cfg.zoo.members if names is None else names)
    unknown = [n for n in names if n not in cfg.zoo.members]
    if unknown:
        raise ConfigError(f"classifier(s) {unknown} are not zoo members", field="attack")
    if cfg.zoo.checkpoints == "desk":
        missing = [n for n in names if n not in desk.ZOO_MEMBERS]
        if missing:
            raise ConfigError(f"no packaged checkpoint for {missing}", field="zoo.members")
        return desk.desk_zoo(names)
    zoo = {}
    for n in names:
        path = Path(cfg.zoo.checkpoints) / f"{n}.pt"
        if not path.exists():
            raise ConfigError(f"missing checkpoint {path}", field="zoo.checkpoints")
        zoo[n] = load_classifier(path)
    return zoo


def load_embedder(cfg: ExperimentConfig) -> AttributeEmbedder:
    emb = desk.desk_embedder()
    if cfg.guidance.prompt_file:
        extra = yaml.safe_load(Path(cfg.guidance.prompt_file).read_text()) or {}
        bad = [k for k, v in extra.items() if not isinstance(v, dict) or set(v) - set(faces.ATTRIBUTES)]
        if bad:
            raise ConfigError(f"prompt entries {bad} must map attribute names to weights",
                              field="guidance.prompt_file")
        emb.prompts = {**PROMPTS, **{k.lower(): v for k, v in extra.items()}}
    return emb


def references(cfg: ExperimentConfig, n: int) -> torch.Tensor:
    if cfg.guidance.references == "desk":
        return torch.from_numpy(faces.real_faces(n, seed=cfg.guidance.reference_seed)[0])
    files = sorted(Path(cfg.guidance.references).glob("*.png"))
    if not files:
        raise ConfigError("reference directory holds no PNG files", field="guidance.references")
    return torch.stack([read_png(files[i % len(files)]) for i in range(n)])


def attack_config(cfg: ExperimentConfig, group=None) -> AttackConfig:
    a = cfg.attack
    return AttackConfig(group=group or a.group, optimize_noise=a.optimize_noise, learning_rate=a.learning_rate,
                        max_iters=a.max_iters, hyper=Hyperparams(a.lambda1, a.lambda2, a.lambda_id),
                        stop_on_success=a.stop_on_success, success_threshold=a.success_threshold)


def _chunks(items: List[int], size: int | None):
    size = size or len(items)
    for start in range(0, len(items), size):
        yield start, items[start : start + size]


# --------------------------------------------------------------------------
# train-zoo


def _training_data(cfg: ExperimentConfig, gen):
    t = cfg.zoo.train
    if cfg.zoo.dataset == "desk":
        X, y = desk.real_vs_generated(gen, t.n_train, seed=t.data_seed)
        Xh, yh = desk.real_vs_generated(gen, t.n_test, seed=t.data_seed + 1000)
        return (X, y), LabeledDataset(Xh, yh)
    blob = np.load(cfg.zoo.dataset)
    for key in ("X", "y"):
        if key not in blob:
            raise ConfigError(f"dataset file lacks array {key!r}", field="zoo.dataset")
    X, y = blob["X"].astype(np.float32), blob["y"].astype(np.int64)
    perm = np.random.default_rng(t.data_seed).permutation(len(y))
    cut = len(y) - min(t.n_test, len(y) // 5)
    return (X[perm[:cut]], y[perm[:cut]]), LabeledDataset(X[perm[cut:]], y[perm[cut:]])


def train_zoo(cfg: ExperimentConfig, out=None) -> Path:
    """Train one classifier per zoo member; writes checkpoints and ``metrics.json``."""
    run = RunDir(cfg, out).prepare()
    if run.done("train_zoo"):
        log.info("train-zoo: outputs for %s exist, skipping", run.hash)
        return run.checkpoints
    started = time.time()
    unknown = [m for m in cfg.zoo.members if m not in ARCHITECTURES]
    if unknown:
        raise ConfigError(f"unknown architecture(s) {unknown}; choose from {sorted(ARCHITECTURES)}",
                          field="zoo.members")
    gen = load_gen(cfg)
    (X, y), holdout = _training_data(cfg, gen)
    t = cfg.zoo.train
    acc, artifacts = {}, []
    for i, name in enumerate(cfg.zoo.members):
        clf = ForensicClassifier(name, learning_rate=t.learning_rate, batch_size=t.batch_size,
                                 epochs=t.epochs, seed=cfg.zoo.seed + i).fit(X, y)
        acc[name] = round(float(evaluate_accuracy(clf, holdout)), 6)
        artifacts.append(save_classifier(clf, run.checkpoints / f"{name}.pt"))
        log.info("trained %s: hold-out accuracy %.4f", name, acc[name])
    metrics = run.checkpoints / "metrics.json"
    metrics.write_text(json.dumps(acc, indent=2, sort_keys=True) + "\n")
    run.record("train_zoo", artifacts + [metrics], started)
    return run.checkpoints


# --------------------------------------------------------------------------
# attack


def _save_all(results: Sequence[AttackResult], directory: Path, cfg: ExperimentConfig) -> List[Path]:
    echo = cfg.model_dump(mode="json")
    paths = []
    for r in results:
        written = save_result(r, directory, f"seed{r.seed:06d}", echo)
        paths += [Path(p) for p in written.values()]
    return paths


def _pixel_results(gen, clf, cid, seeds, cfg: ExperimentConfig) -> List[AttackResult]:
    a = cfg.attack
    t0 = time.perf_counter()
    w, noise = sample_initial_batch(gen, seeds)
    with torch.no_grad():
        clean = gen.synthesis(w, noise).to(clf.dtype)
    adv = fgsm(clean, clf, a.eps) if a.method == "fgsm" else pgd(clean, clf, a.eps, a.step, a.iters)
    per_run = (time.perf_counter() - t0) / len(seeds)
    with torch.no_grad():
        probs = clf.predict_real_prob(adv)
    out = []
    for i, s in enumerate(seeds):
        # pixel attacks leave the latent untouched; the image is the perturbed rendering
        out.append(AttackResult(
            final_latent=w[i], final_noise=[n[i] for n in noise], image=adv[i].detach(),
            loss_trace=[], success_per_classifier={cid: bool(probs[i] > a.success_threshold)},
            iterations_used=1 if a.method == "fgsm" else a.iters, wall_clock_seconds=per_run,
            start_latent=w[i], start_noise=[n[i] for n in noise], seed=s,
            metadata={"method": a.method, "eps": a.eps, "linf": float((adv[i] - clean[i]).abs().max())}))
    return out


def _single_target(gen, clf, cid, seeds, cfg: ExperimentConfig, phi, emb) -> List[AttackResult]:
    a = cfg.attack
    acfg = attack_config(cfg)
    refs = references(cfg, len(seeds)) if a.method in ("image_guided", "naive") else None
    out: List[AttackResult] = []
    for start, chunk in _chunks(seeds, 1 if a.method == "naive" else a.batch_size):
        if a.method == "image_guided":
            res = run_image_guided(gen, clf, refs[start : start + len(chunk)], acfg, phi, chunk)
        elif a.method == "text_guided":
            res = run_text_guided(gen, clf, cfg.guidance.prompt, acfg, emb, chunk, n_init=a.n_init)
        elif a.method == "naive":
            res = [attack_image_naive(gen, clf, refs[start], a.group, replace(acfg, seed=chunk[0]), phi,
                                      inversion_iters=a.inversion_iters)]
            res[0].metadata.pop("mixed_latent", None)
        else:
            res = _pixel_results(gen, clf, cid, chunk, cfg)
        for r in res:
            r.success_per_classifier = {cid: v for v in r.success_per_classifier.values()}
        out += res
    return out


def _multi(gen, method, pool, seeds, cfg: ExperimentConfig, phi, emb) -> List[AttackResult]:
    a = cfg.attack
    acfg = attack_config(cfg)
    out: List[AttackResult] = []
    refs = references(cfg, len(seeds)) if a.guidance == "image" else None
    for start, chunk in _chunks(seeds, a.batch_size):
        guidance = (ImageGuidance(refs[start : start + len(chunk)], phi) if a.guidance == "image"
                    else TextGuidance(cfg.guidance.prompt, emb))
        if method == "ensemble":
            out += run_ensemble(gen, pool, guidance, acfg, chunk, n_init=a.n_init, stop_on_success=False)
        else:
            meta = MetaConfig(pool, inner_lr=a.inner_lr, combos_per_iter=a.combos_per_iter)
            out += run_meta(gen, meta, guidance, acfg, chunk, n_init=a.n_init)
    return out


def run_attack(cfg: ExperimentConfig, out=None) -> Path:
    """Run the configured attack campaign; one PNG/JSON/NPZ triple per run."""
    run = RunDir(cfg, out).prepare()
    if run.done("attack"):
        log.info("attack: outputs for %s exist, skipping", run.hash)
        return run.results
    started = time.time()
    a = cfg.attack
    gen = load_gen(cfg)
    seeds = cfg.seed_list()
    phi = desk.desk_feature_extractor()
    emb = load_embedder(cfg)
    if a.method == "text_guided" or a.guidance == "text":
        emb.embed_text(cfg.guidance.prompt)  # unknown prompts fail before any work
    artifacts: List[Path] = []
    if cfg.evaluation.leave_one_out:
        pool = load_zoo(cfg, a.pool)
        if len(pool) < 2:
            raise ConfigError("leave-one-out needs a pool of at least 2 classifiers", field="attack.pool")
        n = len(seeds)
        for method in cfg.evaluation.methods:
            for held in pool:
                kept = {k: c for k, c in pool.items() if k != held}
                for r in range(cfg.evaluation.repetitions):
                    rep_seeds = [s + r * n for s in seeds]
                    res = _multi(gen, method, kept, rep_seeds, cfg, phi, emb)
                    artifacts += _save_all(res, run.results / method / f"heldout-{held}" / f"rep{r}", cfg)
                    log.info("%s held-out %s rep %d done", method, held, r)
    elif a.method in ("ensemble", "meta"):
        pool = load_zoo(cfg, a.pool)
        if a.method == "meta" and len(pool) < 2:
            raise ConfigError("meta attack needs a pool of at least 2 classifiers", field="attack.pool")
        res = _multi(gen, a.method, pool, seeds, cfg, phi, emb)
        artifacts += _save_all(res, run.results / a.method / "pool", cfg)
    else:
        for cid, clf in load_zoo(cfg, a.targets).items():
            res = _single_target(gen, clf, cid, seeds, cfg, phi, emb)
            artifacts += _save_all(res, run.results / a.method / cid, cfg)
            log.info("%s vs %s: ASR %.3f", a.method, cid, np.mean([r.success for r in res]))
    run.record("attack", artifacts, started)
    return run.results


# --------------------------------------------------------------------------
# evaluate

FID_REFERENCE_SEED = 9001


def _stack_images(results) -> torch.Tensor:
    return torch.stack([r.image.float() for r in results])


def evaluate(cfg: ExperimentConfig, out=None) -> Dict[str, Path]:
    """Score saved results: campaign CSV, optional transfer CSV, contact sheets."""
    run = RunDir(cfg, out).prepare()
    if run.done("evaluate"):
        log.info("evaluate: reports for %s exist, skipping", run.hash)
        return {p.stem: p for p in run.reports.iterdir()}
    started = time.time()
    if not run.results.exists() or not any(run.results.rglob("*.json")):
        raise InvalidArgumentError(f"no results under {run.results}; run the attack first")
    reports: Dict[str, Path] = {}
    if cfg.evaluation.leave_one_out:
        table = transfer_table(cfg, run)
        reports["transfer"] = run.reports / "transfer.csv"
        table.to_csv(reports["transfer"])
        reports["transfer_detail"] = run.reports / "transfer_detail.json"
        reports["transfer_detail"].write_text(json.dumps(
            {"held_out_asr": table.rows, "white_box_asr": table.white_box, "per_repetition": table.per_repetition},
            indent=1, sort_keys=True) + "\n")
    else:
        reports.update(campaign_reports(cfg, run))
    run.record("evaluate", list(reports.values()), started)
    return reports


def campaign_reports(cfg: ExperimentConfig, run: RunDir) -> Dict[str, Path]:
    phi = desk.desk_feature_extractor() if cfg.evaluation.fid else None
    rows, timing_rows, sheets = [], [], {}
    for method_dir in sorted(p for p in run.results.iterdir() if p.is_dir()):
        for target_dir in sorted(p for p in method_dir.iterdir() if p.is_dir()):
            results = [load_result(target_dir, i) for i in run_ids(target_dir)]
            if not results:
                continue
            flags = [all(r.success_per_classifier.values()) for r in results]
            score = ""
            if phi is not None:
                real = torch.from_numpy(faces.real_faces(max(len(results), 200), seed=FID_REFERENCE_SEED)[0])
                score = f"{fid(_stack_images(results), real, phi):.4f}"
            rows.append([method_dir.name, target_dir.name, f"{np.mean(flags):.4f}", score, len(results)])
            for r in results:
                timing_rows.append([method_dir.name, target_dir.name, r.seed, f"{r.wall_clock_seconds:.6f}",
                                    r.iterations_used, int(all(r.success_per_classifier.values()))])
            if cfg.evaluation.contact_sheet:
                key = f"sheet_{method_dir.name}_{target_dir.name}"
                sheets[key] = contact_sheet(_stack_images(results[:100]), run.reports / f"{key}.png")
    if not rows:
        raise InvalidArgumentError(f"no results under {run.results}")
    campaign = run.reports / "campaign.csv"
    _write_csv(campaign, ["method", "classifier", "asr", "fid", "runs"], rows)
    timings = run.reports / "timings.csv"
    _write_csv(timings, ["method", "classifier", "seed", "wall_clock_seconds", "iterations", "success"], timing_rows)
    return {"campaign": campaign, "timings": timings, **sheets}


def transfer_table(cfg: ExperimentConfig, run: RunDir) -> TransferTable:
    pool = load_zoo(cfg, cfg.attack.pool)
    table = TransferTable()
    for method in cfg.evaluation.methods:
        table.rows[method], table.white_box[method], table.per_repetition[method] = {}, {}, {}
        for held, clf in pool.items():
            reps, wb = [], []
            for r in range(cfg.evaluation.repetitions):
                d = run.results / method / f"heldout-{held}" / f"rep{r}"
                results = [load_result(d, i) for i in run_ids(d)]
                if not results:
                    raise InvalidArgumentError(f"missing results in {d}")
                reps.append(float(held_out_success(results, clf).mean()))
                wb.append(float(np.mean([np.mean(list(x.success_per_classifier.values())) for x in results])))
            table.rows[method][held] = 100.0 * float(np.mean(reps))
            table.white_box[method][held] = 100.0 * float(np.mean(wb))
            table.per_repetition[method][held] = [100.0 * v for v in reps]
    table.__post_init__()
    return table


def _write_csv(path: Path, header, rows):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
