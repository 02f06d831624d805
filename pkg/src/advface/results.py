"""On-disk form of attack results: an 8-bit PNG, a JSON sidecar (config echo,
loss trace, success flags, timing) and an ``.npz`` with the exact tensors."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, List

import numpy as np
import torch
from PIL import Image

from .attacks import AttackResult
from .validation import InvalidArgumentError

TIMING_KEYS = ("wall_clock_seconds", "created")


def to_png(image: torch.Tensor, path) -> Path:
    """Write a ``[3, H, W]`` image in [0, 1] as an 8-bit RGB PNG."""
    arr = image.detach().double().clamp(0, 1).permute(1, 2, 0).numpy()
    path = Path(path)
    Image.fromarray(np.round(arr * 255).astype(np.uint8)).save(path)
    return path


def read_png(path) -> torch.Tensor:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def _jsonable(value):
    if isinstance(value, torch.Tensor):
        return value.detach().double().tolist()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def save_result(result: AttackResult, directory, run_id: str, config_echo: dict | None = None) -> dict:
    """Write ``<run_id>.png``, ``<run_id>.json`` and ``<run_id>.npz``; returns their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    png = to_png(result.image, directory / f"{run_id}.png")
    tensors = {
        "final_latent": result.final_latent.detach().double().numpy(),
        "image": result.image.detach().double().numpy(),
    }
    for i, n in enumerate(result.final_noise):
        tensors[f"final_noise_{i}"] = n.detach().double().numpy()
    if result.start_latent is not None:
        tensors["start_latent"] = result.start_latent.detach().double().numpy()
    for i, n in enumerate(result.start_noise or []):
        tensors[f"start_noise_{i}"] = n.detach().double().numpy()
    npz = directory / f"{run_id}.npz"
    np.savez_compressed(npz, **tensors)
    meta = {k: v for k, v in result.metadata.items() if not isinstance(v, torch.Tensor)}
    sidecar = {
        "run_id": run_id,
        "seed": result.seed,
        "success_per_classifier": result.success_per_classifier,
        "iterations_used": result.iterations_used,
        "wall_clock_seconds": result.wall_clock_seconds,
        "loss_trace": result.loss_trace,
        "metadata": meta,
        "config": config_echo or {},
        "noise_layers": len(result.final_noise),
    }
    js = directory / f"{run_id}.json"
    js.write_text(json.dumps(_jsonable(sidecar), indent=1, sort_keys=True) + "\n")
    return {"png": str(png), "json": str(js), "npz": str(npz)}


def load_result(directory, run_id: str) -> AttackResult:
    directory = Path(directory)
    js = directory / f"{run_id}.json"
    if not js.exists():
        raise InvalidArgumentError(f"no result {run_id!r} in {directory}")
    side = json.loads(js.read_text())
    blob = np.load(directory / f"{run_id}.npz")
    n_layers = side["noise_layers"]
    t = lambda k: torch.from_numpy(blob[k])  # noqa: E731
    start_noise = [t(f"start_noise_{i}") for i in range(n_layers)] if "start_noise_0" in blob else None
    return AttackResult(
        final_latent=t("final_latent"),
        final_noise=[t(f"final_noise_{i}") for i in range(n_layers)],
        image=t("image"),
        loss_trace=side["loss_trace"],
        success_per_classifier={k: bool(v) for k, v in side["success_per_classifier"].items()},
        iterations_used=int(side["iterations_used"]),
        wall_clock_seconds=float(side["wall_clock_seconds"]),
        start_latent=t("start_latent") if "start_latent" in blob else None,
        start_noise=start_noise,
        seed=int(side["seed"]),
        metadata=dict(side["metadata"], config=side.get("config", {})),
    )


def run_ids(directory) -> List[str]:
    return sorted(p.stem for p in Path(directory).glob("*.json"))


def load_results(directory, ids: Iterable[str] | None = None) -> List[AttackResult]:
    ids = run_ids(directory) if ids is None else list(ids)
    return [load_result(directory, i) for i in ids]
