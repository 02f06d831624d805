"""Style-based generator contract and the desk-scale reference generator.

A generator maps a latent ``z`` through a mapping network to a style vector,
which is broadcast to one row per synthesis layer (the extended ``W+`` code).
Each synthesis layer is modulated by its own row and receives its own noise
map, so editing a range of rows edits the attributes controlled by those
layers.

Shapes: a :data:`LatentCode` is ``[L, D]`` (``[B, L, D]`` batched) and a
:data:`NoiseStack` is a list of ``L`` tensors ``[H_l, W_l]`` (``[B, H_l, W_l]``
batched).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .validation import InvalidArgumentError, as_tensor, check_finite

LatentCode = torch.Tensor
NoiseStack = List[torch.Tensor]

CHECKPOINT_FORMAT = "advface-generator"
CHECKPOINT_VERSION = 1


class LayerGroup(str, enum.Enum):
    COARSE = "coarse"
    MIDDLE = "middle"
    FINE = "fine"
    ALL = "all"

    @classmethod
    def _missing_(cls, value):
        raise InvalidArgumentError(f"unknown layer group {value!r}; expected one of {[g.value for g in cls]}")


def layer_rows(group, L: int) -> tuple[int, int]:
    """Inclusive 1-based row range controlled by ``group`` in an ``L``-layer code.

    The 18-layer split is 1-4 / 5-8 / 9-18; other depths keep the same ratio
    with coarse and middle each taking ``ceil(2L/9)`` rows.
    """
    group = LayerGroup(group)
    if not isinstance(L, int) or L < 1:
        raise InvalidArgumentError(f"L must be a positive integer, got {L!r}")
    if group is LayerGroup.ALL:
        return 1, L
    n = math.ceil(2 * L / 9)
    coarse_end = min(n, L)
    middle_end = min(2 * n, L)
    if group is LayerGroup.COARSE:
        return 1, coarse_end
    if group is LayerGroup.MIDDLE:
        if coarse_end >= L:
            raise InvalidArgumentError(f"L={L} is too shallow for a middle group")
        return coarse_end + 1, middle_end
    if middle_end >= L:
        raise InvalidArgumentError(f"L={L} is too shallow for a fine group")
    return middle_end + 1, L


def row_mask(group, L: int) -> torch.Tensor:
    """Boolean ``[L]`` mask of the rows belonging to ``group``."""
    lo, hi = layer_rows(group, L)
    mask = torch.zeros(L, dtype=torch.bool)
    mask[lo - 1 : hi] = True
    return mask


def broadcast_to_wplus(w_m: torch.Tensor, L: int) -> LatentCode:
    """Stack ``L`` copies of a style vector (``[D]`` or ``[B, D]``) into W+."""
    if not isinstance(L, int) or L <= 0:
        raise InvalidArgumentError(f"L must be a positive integer, got {L!r}")
    w_m = as_tensor(w_m)
    if w_m.dim() not in (1, 2):
        raise InvalidArgumentError(f"w_m must be [D] or [B, D], got {tuple(w_m.shape)}")
    return w_m.unsqueeze(-2).expand(*w_m.shape[:-1], L, w_m.shape[-1]).clone()


class MappingNetwork(nn.Module):
    def __init__(self, style_dim: int, n_layers: int = 4):
        super().__init__()
        layers = []
        for _ in range(n_layers):
            layers += [nn.Linear(style_dim, style_dim), nn.LeakyReLU(0.2)]
        self.net = nn.Sequential(*layers)

    def forward(self, z):
        z = z * torch.rsqrt(z.pow(2).mean(dim=-1, keepdim=True) + 1e-8)
        return self.net(z)


class ModulatedConv(nn.Module):
    """3x3 conv whose input channels are scaled by a style, with demodulation."""

    def __init__(self, style_dim: int, in_ch: int, out_ch: int):
        super().__init__()
        self.affine = nn.Linear(style_dim, in_ch)
        nn.init.zeros_(self.affine.weight)
        nn.init.ones_(self.affine.bias)
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, 3, 3))
        self.bias = nn.Parameter(torch.zeros(out_ch))

    def forward(self, x, w):
        s = self.affine(w)  # [B, in]
        wt = self.weight.unsqueeze(0) * s[:, None, :, None, None]
        demod = torch.rsqrt(wt.pow(2).sum(dim=(2, 3, 4)) + 1e-8)  # [B, out]
        y = F.conv2d(x * s[:, :, None, None], self.weight, padding=1)
        return y * demod[:, :, None, None] + self.bias[None, :, None, None]


class StyleGenerator(nn.Module):
    """Desk-scale style-modulated convolutional generator.

    Layers run at resolutions doubling from 4x4 up to ``image_size``; each
    layer consumes one W+ row and one noise map. Output passes through a
    sigmoid so pixels lie in (0, 1).
    """

    def __init__(
        self,
        layer_count: int = 8,
        style_dim: int = 64,
        image_size: int = 32,
        channels: int = 16,
        mapping_layers: int = 4,
        noise_strength: float = 0.15,
        seed: int = 0,
    ):
        super().__init__()
        n_up = int(round(math.log2(image_size / 4)))
        if 4 * 2**n_up != image_size:
            raise InvalidArgumentError("image_size must be 4 * 2**k")
        if layer_count < n_up + 1:
            raise InvalidArgumentError(f"layer_count must be >= {n_up + 1} for image_size {image_size}")
        self.layer_count = layer_count
        self.style_dim = style_dim
        self.image_size = image_size
        self.channels = channels
        self.mapping_layers = mapping_layers
        self.noise_strength_init = noise_strength
        self.seed = seed
        self.resolutions = [4 * 2 ** (i * (n_up + 1) // layer_count) for i in range(layer_count)]

        g = torch.random.fork_rng()
        with g:
            torch.manual_seed(seed)
            self.mapping = MappingNetwork(style_dim, mapping_layers)
            self.const = nn.Parameter(torch.randn(1, channels, 4, 4))
            self.convs = nn.ModuleList(
                ModulatedConv(style_dim, channels, channels) for _ in range(layer_count)
            )
            self.to_rgb = nn.Conv2d(channels, 3, 1)
        # fixed per-layer, per-channel noise gains
        gains = torch.linspace(1.0, 0.5, layer_count)[:, None] * noise_strength
        self.register_buffer("noise_gain", gains.expand(layer_count, channels).clone())

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.image_size, self.image_size, 3)

    @property
    def noise_shapes(self) -> list[tuple[int, int]]:
        return [(r, r) for r in self.resolutions]

    def synthesis(self, w: torch.Tensor, noise: Sequence[torch.Tensor]) -> torch.Tensor:
        """Batched synthesis: ``w`` is ``[B, L, D]``, noise maps are ``[B, H, W]``."""
        x = self.const.expand(w.shape[0], -1, -1, -1)
        for i, conv in enumerate(self.convs):
            if x.shape[-1] != self.resolutions[i]:
                x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            x = conv(x, w[:, i])
            x = x + self.noise_gain[i][None, :, None, None] * noise[i][:, None]
            x = F.silu(x)  # smooth, so finite-difference checks hold at any point
        return torch.sigmoid(self.to_rgb(x))

    def forward(self, w, noise):
        return self.synthesis(w, noise)


def _check_z(gen, z) -> torch.Tensor:
    z = as_tensor(z, _param_dtype(gen))
    if z.shape[-1] != gen.style_dim or z.dim() not in (1, 2):
        raise InvalidArgumentError(f"z must have trailing dimension {gen.style_dim}, got {tuple(z.shape)}")
    return check_finite(z, "z")


def _param_dtype(gen) -> torch.dtype:
    return next(gen.parameters()).dtype


def map_latent(gen: StyleGenerator, z) -> torch.Tensor:
    """Mapping network output for ``z`` (``[D]`` or ``[B, D]``)."""
    z = _check_z(gen, z)
    return gen.mapping(z)


def _batch_inputs(gen, w, eta):
    w = as_tensor(w)
    single = w.dim() == 2
    if single:
        w = w.unsqueeze(0)
    L, D = gen.layer_count, gen.style_dim
    if w.dim() != 3 or w.shape[1:] != (L, D):
        raise InvalidArgumentError(f"latent must be [{L}, {D}] (or batched), got {tuple(w.shape)}")
    if len(eta) != L:
        raise InvalidArgumentError(f"noise stack must have {L} tensors, got {len(eta)}")
    noise = []
    for i, (n, shape) in enumerate(zip(eta, gen.noise_shapes)):
        n = as_tensor(n)
        if single:
            n = n.unsqueeze(0)
        if tuple(n.shape[1:]) != shape or n.shape[0] != w.shape[0]:
            raise InvalidArgumentError(f"noise[{i}] has shape {tuple(n.shape)}, expected {shape}")
        noise.append(check_finite(n, f"noise[{i}]"))
    check_finite(w, "latent")
    return w, noise, single


def synthesize(gen: StyleGenerator, w: LatentCode, eta: NoiseStack) -> torch.Tensor:
    """Render ``[3, H, W]`` (or ``[B, 3, H, W]`` for batched inputs) in (0, 1)."""
    w, noise, single = _batch_inputs(gen, w, eta)
    img = gen.synthesis(w, noise)
    return img[0] if single else img


def sample_initial(gen: StyleGenerator, seed: int) -> tuple[LatentCode, NoiseStack]:
    """Seeded draw of ``z ~ N(0, I)`` mapped and broadcast to W+, plus N(0, 1) noise."""
    dtype = _param_dtype(gen)
    rng = torch.Generator().manual_seed(int(seed))
    z = torch.randn(gen.style_dim, generator=rng, dtype=dtype)
    noise = [torch.randn(*shape, generator=rng, dtype=dtype) for shape in gen.noise_shapes]
    with torch.no_grad():
        w = broadcast_to_wplus(map_latent(gen, z), gen.layer_count)
    return w, noise


def sample_initial_batch(gen: StyleGenerator, seeds: Sequence[int]) -> tuple[LatentCode, NoiseStack]:
    draws = [sample_initial(gen, s) for s in seeds]
    w = torch.stack([d[0] for d in draws])
    noise = [torch.stack([d[1][i] for d in draws]) for i in range(gen.layer_count)]
    return w, noise


@dataclass(frozen=True)
class GeneratorHeader:
    layer_count: int
    style_dim: int
    image_shape: tuple[int, int, int]
    channels: int
    mapping_layers: int
    noise_strength: float
    seed: int


def save_generator(gen: StyleGenerator, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = GeneratorHeader(
        gen.layer_count, gen.style_dim, gen.image_shape, gen.channels,
        gen.mapping_layers, gen.noise_strength_init, gen.seed,
    )
    torch.save(
        {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
         "header": header.__dict__, "state_dict": gen.state_dict()},
        path,
    )
    return path


def load_generator(path) -> StyleGenerator:
    blob = torch.load(Path(path), map_location="cpu", weights_only=False)
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise InvalidArgumentError(f"{path} is not a generator checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise InvalidArgumentError(f"unsupported generator checkpoint version {blob.get('version')}")
    h = blob["header"]
    gen = StyleGenerator(
        layer_count=h["layer_count"], style_dim=h["style_dim"], image_size=h["image_shape"][0],
        channels=h["channels"], mapping_layers=h["mapping_layers"],
        noise_strength=h["noise_strength"], seed=h["seed"],
    )
    gen.load_state_dict(blob["state_dict"])
    gen.eval().requires_grad_(False)
    return gen
