"""Attack metrics and experiment protocols: ASR, Frechet feature distance,
leave-one-out transferability and timing comparisons."""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Mapping, Sequence

import numpy as np
import torch
from PIL import Image

from .attacks import AttackResult
from .forensics import ClassifierHandle
from .validation import InvalidArgumentError, NumericDegeneracyError, check_image_batch


def attack_success_rate(results: Sequence[AttackResult], clf_id: str) -> float:
    """Fraction of results flagged as fooling ``clf_id``."""
    if not results:
        raise InvalidArgumentError("no results to score")
    try:
        flags = [r.success_per_classifier[clf_id] for r in results]
    except KeyError:
        raise InvalidArgumentError(f"a result carries no flag for classifier {clf_id!r}") from None
    return float(np.mean(flags))


def held_out_success(results: Sequence[AttackResult], clf: ClassifierHandle, threshold: float = 0.5) -> np.ndarray:
    """Per-result success against a classifier the attack never saw."""
    imgs = torch.stack([r.image for r in results]).to(clf.dtype)
    with torch.no_grad():
        return (clf.predict_real_prob(imgs) > threshold).numpy()


# --------------------------------------------------------------------------
# Frechet distance


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_distance(mu_a, cov_a, mu_b, cov_b) -> float:
    """``|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))``.

    The trace of ``(S_a S_b)^(1/2)`` is taken as the trace of the symmetric
    ``(S_a^(1/2) S_b S_a^(1/2))^(1/2)``, with negative eigenvalues clamped.
    """
    mu_a, mu_b = np.asarray(mu_a, np.float64), np.asarray(mu_b, np.float64)
    cov_a, cov_b = np.atleast_2d(cov_a).astype(np.float64), np.atleast_2d(cov_b).astype(np.float64)
    root_a = _psd_sqrt(cov_a)
    cross = np.trace(_psd_sqrt(root_a @ cov_b @ root_a))
    return float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - 2.0 * cross)


def feature_statistics(features: np.ndarray, shrinkage: float | None = 1e-6):
    """Mean and covariance of ``[N, F]`` features.

    With ``shrinkage=None`` a rank-deficient covariance raises
    :class:`NumericDegeneracyError`; otherwise ``shrinkage * I`` is added.
    """
    f = np.asarray(features, np.float64)
    if f.ndim != 2 or f.shape[0] < 2:
        raise InvalidArgumentError("need at least two feature vectors of shape [N, F]")
    mu = f.mean(axis=0)
    cov = np.cov(f, rowvar=False).reshape(f.shape[1], f.shape[1])
    if shrinkage is None:
        if f.shape[0] <= f.shape[1] or np.linalg.matrix_rank(cov) < f.shape[1]:
            raise NumericDegeneracyError(
                f"covariance of {f.shape[0]} samples in {f.shape[1]} dimensions is singular; enable shrinkage"
            )
    else:
        cov = cov + shrinkage * np.eye(f.shape[1])
    return mu, cov


def fid_from_features(feat_a, feat_b, shrinkage: float | None = 1e-6) -> float:
    mu_a, cov_a = feature_statistics(feat_a, shrinkage)
    mu_b, cov_b = feature_statistics(feat_b, shrinkage)
    return frechet_distance(mu_a, cov_a, mu_b, cov_b)


def _embed_all(images, phi, batch: int = 256) -> np.ndarray:
    x = check_image_batch(torch.stack(list(images)) if isinstance(images, (list, tuple)) else images)
    out = []
    with torch.no_grad():
        for start in range(0, len(x), batch):
            out.append(phi.embed(x[start : start + batch]).double().numpy())
    return np.concatenate(out)


def fid(set_a, set_b, phi=None, shrinkage: float | None = 1e-6) -> float:
    """Frechet distance between Gaussian fits of ``phi`` features of two image sets.

    With ``phi=None`` the sets are taken to be feature matrices already.
    """
    if phi is None:
        return fid_from_features(set_a, set_b, shrinkage)
    return fid_from_features(_embed_all(set_a, phi), _embed_all(set_b, phi), shrinkage)


# --------------------------------------------------------------------------
# transferability


@dataclass
class TransferTable:
    """``rows[method][held_out_id]`` = ASR percentage on the held-out model."""

    rows: Dict[str, Dict[str, float]] = field(default_factory=dict)
    white_box: Dict[str, Dict[str, float]] = field(default_factory=dict)
    per_repetition: Dict[str, Dict[str, list]] = field(default_factory=dict)

    def __post_init__(self):
        for method, row in self.rows.items():
            for cid, v in row.items():
                if not 0.0 <= v <= 100.0 or v != v:
                    raise InvalidArgumentError(f"ASR for {method}/{cid} out of range: {v}")

    def columns(self) -> list[str]:
        cols: list[str] = []
        for row in self.rows.values():
            cols += [c for c in row if c not in cols]
        return cols

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = self.columns()
        writer.writerow(["method", *cols])
        for method, row in self.rows.items():
            writer.writerow([method, *(f"{row[c]:.1f}" for c in cols)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


AttackRunner = Callable[[Mapping[str, ClassifierHandle], Sequence[int]], Sequence[AttackResult]]


def leave_one_out_transfer(pool: Mapping[str, ClassifierHandle], methods: Mapping[str, AttackRunner],
                           n_seeds: int, repetitions: int = 1, seed_offset: int = 0) -> TransferTable:
    """Hold each classifier out in turn, attack the rest, score on the held-out one.

    ``methods`` maps a name to ``runner(kept_pool, seeds) -> results``. The
    held-out handle is never passed to the runner. Repetition ``r`` uses
    seeds ``seed_offset + r * n_seeds + [0, n_seeds)``.
    """
    pool = dict(pool)
    if len(pool) < 2:
        raise InvalidArgumentError("leave-one-out needs at least 2 classifiers")
    table = TransferTable()
    for method, runner in methods.items():
        table.rows[method], table.white_box[method], table.per_repetition[method] = {}, {}, {}
        for held_id, held in pool.items():
            kept = {k: v for k, v in pool.items() if k != held_id}
            rep_asr, wb = [], []
            for r in range(repetitions):
                seeds = list(range(seed_offset + r * n_seeds, seed_offset + (r + 1) * n_seeds))
                results = runner(kept, seeds)
                rep_asr.append(float(held_out_success(results, held).mean()))
                wb.append(float(np.mean([attack_success_rate(results, k) for k in kept])))
            table.rows[method][held_id] = 100.0 * float(np.mean(rep_asr))
            table.white_box[method][held_id] = 100.0 * float(np.mean(wb))
            table.per_repetition[method][held_id] = [100.0 * a for a in rep_asr]
    table.__post_init__()
    return table


# --------------------------------------------------------------------------
# timing and reports


@dataclass
class TimingSummary:
    mean_a: float
    median_a: float
    mean_b: float
    median_b: float
    speedup: float  # mean_b / mean_a: how many times faster set a is


def timing_comparison(runs_a: Sequence[AttackResult], runs_b: Sequence[AttackResult]) -> TimingSummary:
    if not runs_a or not runs_b:
        raise InvalidArgumentError("both run lists must be non-empty")
    ta = [r.wall_clock_seconds for r in runs_a]
    tb = [r.wall_clock_seconds for r in runs_b]
    mean_a, mean_b = statistics.fmean(ta), statistics.fmean(tb)
    return TimingSummary(mean_a, statistics.median(ta), mean_b, statistics.median(tb), mean_b / mean_a)


@dataclass
class CampaignReport:
    per_classifier_asr: Dict[str, float]
    fid: float | None = None
    timings: Dict[str, float] = field(default_factory=dict)
    config_echo: dict = field(default_factory=dict)

    def __post_init__(self):
        for cid, v in self.per_classifier_asr.items():
            if not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"ASR for {cid} out of range: {v}")
        if self.fid is not None and self.fid < -1e-6:
            raise InvalidArgumentError(f"negative FID {self.fid}")

    def to_csv(self, path=None, method: str = "") -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["method", "classifier", "asr", "fid"])
        fid_txt = "" if self.fid is None else f"{self.fid:.6f}"
        for cid, asr in sorted(self.per_classifier_asr.items()):
            writer.writerow([method, cid, f"{asr:.4f}", fid_txt])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def campaign_report(results: Sequence[AttackResult], reference_images=None, phi=None,
                    config_echo: dict | None = None) -> CampaignReport:
    ids = sorted({cid for r in results for cid in r.success_per_classifier})
    asr = {cid: attack_success_rate([r for r in results if cid in r.success_per_classifier], cid) for cid in ids}
    score = None
    if reference_images is not None and phi is not None:
        score = fid([r.image for r in results], reference_images, phi)
    times = [r.wall_clock_seconds for r in results]
    timings = {"mean_seconds": statistics.fmean(times), "median_seconds": statistics.median(times)}
    return CampaignReport(asr, score, timings, dict(config_echo or {}))


def contact_sheet(images, path, columns: int = 10, scale: int = 2) -> Path:
    """Tile ``[N, 3, H, W]`` images into one 8-bit PNG."""
    x = check_image_batch(torch.stack(list(images)) if isinstance(images, (list, tuple)) else images)
    x = x.detach().double().clamp(0, 1).numpy()
    n, c, h, w = x.shape
    rows = -(-n // columns)
    sheet = np.ones((rows * h, columns * w, 3))
    for i in range(n):
        r, col = divmod(i, columns)
        sheet[r * h : (r + 1) * h, col * w : (col + 1) * w] = x[i].transpose(1, 2, 0)
    img = Image.fromarray(np.round(sheet * 255).astype(np.uint8))
    if scale != 1:
        img = img.resize((img.width * scale, img.height * scale), Image.NEAREST)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path)
    return path
