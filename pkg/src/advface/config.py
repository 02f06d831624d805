"""Experiment configuration: YAML files validated against a strict schema.

Unknown keys are rejected and every validation error is reported as a
:class:`ConfigError` naming the dotted field and, when known, the line of
the YAML file it came from.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .validation import ConfigError

METHODS = ("image_guided", "text_guided", "ensemble", "meta", "naive", "fgsm", "pgd")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TrainSpec(_Strict):
    n_train: int = Field(2000, ge=2)
    n_test: int = Field(500, ge=2)
    epochs: int = Field(4, ge=1)
    learning_rate: float = Field(2e-4, gt=0)
    batch_size: int = Field(64, ge=1)
    data_seed: int = 0


class ZooSpec(_Strict):
    # "desk" = packaged pretrained checkpoints; otherwise a directory of <id>.pt files
    checkpoints: str = "desk"
    members: List[str] = ["mini_resnet", "deep_resnet", "plain_vgg", "dense", "mbconv", "sepconv"]
    # training data: "desk" = procedural real-vs-generated set; otherwise an .npz with X, y
    dataset: str = "desk"
    train: TrainSpec = TrainSpec()
    seed: int = 0

    @field_validator("members")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("at least one zoo member is required")
        return v


class AttackSpec(_Strict):
    method: Literal[METHODS] = "image_guided"  # type: ignore[valid-type]
    targets: Optional[List[str]] = None  # single-classifier methods; default: all zoo members
    pool: Optional[List[str]] = None  # ensemble / meta; default: all zoo members
    group: Literal["coarse", "middle", "fine", "all"] = "fine"
    optimize_noise: bool = True
    learning_rate: float = Field(0.01, gt=0)
    max_iters: int = Field(200, ge=1)
    lambda1: Optional[float] = Field(None, ge=0)
    lambda2: float = Field(0.005, ge=0)
    lambda_id: float = Field(0.0, ge=0)
    stop_on_success: bool = True
    success_threshold: float = Field(0.5, ge=0, le=1)
    inner_lr: float = Field(50.0, ge=0)
    combos_per_iter: int = Field(1, ge=1)
    n_init: int = Field(50, ge=1)
    inversion_iters: int = Field(500, ge=1)
    eps: float = Field(0.06, gt=0)
    step: float = Field(0.01, gt=0)
    iters: int = Field(50, ge=1)
    # guidance used by ensemble / meta attacks
    guidance: Literal["image", "text"] = "image"
    # runs optimised together; None = all seeds in one batch, 1 = isolated timing
    batch_size: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _pool_size(self):
        if self.method == "meta" and self.pool is not None and len(self.pool) < 2:
            raise ValueError("meta attack needs a pool of at least 2 classifiers")
        if self.step > self.eps:
            raise ValueError("step must not exceed eps")
        return self


class GuidanceSpec(_Strict):
    # "desk" = procedural real faces drawn from reference_seed; otherwise a directory of PNGs
    references: str = "desk"
    reference_seed: int = 777
    prompt: str = "red hair"
    prompt_file: Optional[str] = None


class SeedRange(_Strict):
    start: int = 0
    count: int = Field(ge=1)


class EvalSpec(_Strict):
    leave_one_out: bool = False
    repetitions: int = Field(1, ge=1)
    methods: List[Literal["ensemble", "meta"]] = ["ensemble", "meta"]
    fid: bool = True
    contact_sheet: bool = True


class ExperimentConfig(_Strict):
    name: str = "experiment"
    generator: str = "desk"  # "desk" = packaged checkpoint; otherwise a generator .pt path
    zoo: ZooSpec = ZooSpec()
    attack: AttackSpec = AttackSpec()
    guidance: GuidanceSpec = GuidanceSpec()
    seeds: Union[List[int], SeedRange] = SeedRange(count=10)
    evaluation: EvalSpec = EvalSpec()

    @field_validator("seeds")
    @classmethod
    def _seeds_non_empty(cls, v):
        if isinstance(v, list) and not v:
            raise ValueError("seeds must be non-empty")
        return v

    def seed_list(self) -> List[int]:
        if isinstance(self.seeds, SeedRange):
            return list(range(self.seeds.start, self.seeds.start + self.seeds.count))
        return list(self.seeds)

    def config_hash(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# fields holding paths, checked for existence unless set to "desk"
_PATH_FIELDS = (("generator",), ("zoo", "checkpoints"), ("zoo", "dataset"),
                ("guidance", "references"), ("guidance", "prompt_file"))


def _key_lines(node, prefix=()) -> dict:
    """Map dotted key tuples to 1-based line numbers from a YAML node tree."""
    lines = {}
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = prefix + (key.value,)
            lines[path] = key.start_mark.line + 1
            lines.update(_key_lines(value, path))
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            lines[prefix + (i,)] = item.start_mark.line + 1
            lines.update(_key_lines(item, prefix + (i,)))
    return lines


def _line_for(loc: tuple, lines: dict) -> Optional[int]:
    loc = tuple(loc)
    while loc:
        if loc in lines:
            return lines[loc]
        loc = loc[:-1]
    return None


def _check_paths(cfg: ExperimentConfig, base: Path, lines: dict) -> ExperimentConfig:
    updates = {}
    for path in _PATH_FIELDS:
        obj = cfg
        for part in path:
            obj = getattr(obj, part)
        if obj is None or obj == "desk":
            continue
        p = Path(obj)
        if not p.is_absolute():
            p = base / p
        if not p.exists():
            raise ConfigError(f"path does not exist: {obj}", field=".".join(path), line=_line_for(path, lines))
        updates[path] = str(p.resolve())
    data = cfg.model_dump()
    for path, value in updates.items():
        d = data
        for part in path[:-1]:
            d = d[part]
        d[path[-1]] = value
    return ExperimentConfig.model_validate(data)


def parse_config(data: dict, lines: Optional[dict] = None, base: Path = Path(".")) -> ExperimentConfig:
    lines = lines or {}
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level of the config must be a mapping", line=1)
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = tuple(p for p in err["loc"] if not (isinstance(p, str) and p in ("list[int]", "SeedRange")))
        field = ".".join(str(p) for p in loc) or None
        kind = "unknown key" if err["type"] == "extra_forbidden" else err["msg"]
        raise ConfigError(f"{kind} (in {len(exc.errors())} error(s))", field=field,
                          line=_line_for(loc, lines)) from None
    return _check_paths(cfg, base, lines)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1) from None
    lines = _key_lines(node) if node is not None else {}
    return parse_config(data, lines, base=path.parent)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=True)
