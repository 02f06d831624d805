"""Input validation helpers and the package's exception types.

Images are torch tensors in channel-first layout, ``[C, H, W]`` for a single
image or ``[B, C, H, W]`` for a batch, with values in ``[0, 1]``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch


class InvalidArgumentError(ValueError):
    """Raised when an argument violates a documented precondition."""


class NumericDegeneracyError(ArithmeticError):
    """Raised when a computation hits a degenerate numeric case (zero norm,
    singular covariance, ...)."""


class ConfigError(ValueError):
    """Raised for invalid experiment configs; carries the offending field."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = ""
        if field is not None:
            where += f"field '{field}'"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {message}" if where else message)


def as_tensor(x, dtype: torch.dtype | None = None) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x if dtype is None else x.to(dtype)
    arr = np.asarray(x)
    t = torch.from_numpy(np.ascontiguousarray(arr))
    if dtype is None:
        dtype = torch.get_default_dtype() if t.is_floating_point() else t.dtype
    return t.to(dtype)


def check_finite(x: torch.Tensor, name: str) -> torch.Tensor:
    if not torch.isfinite(x).all():
        raise InvalidArgumentError(f"{name} contains non-finite entries")
    return x


def check_image_batch(img, name: str = "img", unit_range: bool = False) -> torch.Tensor:
    """Return ``img`` as a ``[B, C, H, W]`` tensor, adding a batch axis if needed."""
    img = as_tensor(img)
    if img.dim() == 3:
        img = img.unsqueeze(0)
    if img.dim() != 4:
        raise InvalidArgumentError(
            f"{name} must have shape [C, H, W] or [B, C, H, W], got {tuple(img.shape)}"
        )
    check_finite(img, name)
    if unit_range and (img.min() < 0 or img.max() > 1):
        raise InvalidArgumentError(f"{name} must lie in [0, 1]")
    return img


def check_same_shape(a: torch.Tensor, b: torch.Tensor, names: Sequence[str] = ("a", "b")):
    if a.shape != b.shape:
        raise InvalidArgumentError(
            f"shape mismatch: {names[0]} {tuple(a.shape)} vs {names[1]} {tuple(b.shape)}"
        )


def check_positive(value, name: str, strict: bool = True):
    if value is None or (value <= 0 if strict else value < 0):
        bound = "> 0" if strict else ">= 0"
        raise InvalidArgumentError(f"{name} must be {bound}, got {value!r}")
    return value


def check_labels(y) -> np.ndarray:
    y = np.asarray(y).ravel()
    if y.size and not np.isin(y, (0, 1)).all():
        raise InvalidArgumentError("labels must be 0 (synthetic) or 1 (real)")
    return y.astype(np.int64)
