"""Attribute-conditioned adversarial face generation against forensic classifiers.

Latent-space attacks on a style-based generator (reference-image and
text-guided), ensemble and meta-learning transfer attacks, pixel-space
FGSM/PGD baselines, and the metrics to compare them. Desk-scale pretrained
assets (generator, classifier zoo, attribute embedder) ship with the package.
"""

from .attacks import (
    AttackConfig,
    AttackResult,
    ImageGuidance,
    MetaConfig,
    TextGuidance,
    attack_ensemble,
    attack_image_guided,
    attack_image_naive,
    attack_meta,
    attack_text_guided,
    fgsm,
    init_best_latent,
    pgd,
)
from .estimators import ImageGuidedAttack, PixelAttack, TextGuidedAttack
from .evaluation import (
    CampaignReport,
    TransferTable,
    attack_success_rate,
    fid,
    leave_one_out_transfer,
    timing_comparison,
)
from .forensics import ForensicClassifier, LinearClassifier, load_classifier, save_classifier
from .generator import LayerGroup, StyleGenerator, layer_rows, sample_initial, synthesize
from .losses import Hyperparams
from .validation import ConfigError, InvalidArgumentError, NumericDegeneracyError

__all__ = [
    "AttackConfig", "AttackResult", "ImageGuidance", "MetaConfig", "TextGuidance",
    "attack_ensemble", "attack_image_guided", "attack_image_naive", "attack_meta", "attack_text_guided",
    "fgsm", "init_best_latent", "pgd",
    "ImageGuidedAttack", "PixelAttack", "TextGuidedAttack",
    "CampaignReport", "TransferTable", "attack_success_rate", "fid", "leave_one_out_transfer",
    "timing_comparison",
    "ForensicClassifier", "LinearClassifier", "load_classifier", "save_classifier",
    "LayerGroup", "StyleGenerator", "layer_rows", "sample_initial", "synthesize",
    "Hyperparams", "ConfigError", "InvalidArgumentError", "NumericDegeneracyError",
]
