"""Experiment configuration (JSON, unknown keys rejected)."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..data import DATA_DIR_ENV, find_dataset

ALGORITHMS = ("cr", "scr", "svrc", "lite_svrc")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SyntheticSpec(_Strict):
    kind: Literal["separable-cubic", "separable-cosine", "random-quadratic-mixture"]
    n: int = Field(ge=1)
    d: int = Field(ge=1)
    seed: int = 0
    params: dict = Field(default_factory=dict)


class DatasetSpec(_Strict):
    """A LIBSVM file (``path``, or ``name`` under $CUBICVR_DATA_DIR), or a
    generated one-hot surrogate (``surrogate_n`` rows)."""

    name: Optional[str] = None
    path: Optional[str] = None
    surrogate_n: Optional[int] = Field(default=None, ge=1)
    subsample: Optional[int] = Field(default=None, ge=1)
    seed: int = 0
    normalize: bool = False
    binarize_threshold: Optional[float] = None

    @model_validator(mode="after")
    def _one_source(self):
        given = [v is not None for v in (self.name, self.path, self.surrogate_n)]
        if sum(given) != 1:
            raise ValueError("give exactly one of name, path, surrogate_n")
        return self

    def key(self) -> str:
        if self.surrogate_n is not None:
            src = f"surrogate{self.surrogate_n}"
        else:
            src = self.name or Path(self.path).name
        parts = [src]
        if self.subsample is not None:
            parts.append(f"m{self.subsample}s{self.seed}")
        if self.normalize:
            parts.append("norm")
        return "-".join(parts)


class ObjectiveSpec(_Strict):
    preset: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None

    @model_validator(mode="after")
    def _one_kind(self):
        if (self.preset is None) == (self.synthetic is None):
            raise ValueError("give exactly one of preset, synthetic")
        return self


class SubsolverSpec(_Strict):
    kind: Literal["auto", "exact", "krylov"] = "auto"
    tol: float = Field(default=1e-6, gt=0)
    max_dim: int = Field(default=100, ge=1)


class AlgorithmSpec(_Strict):
    """Per-algorithm settings.  Unset values fall back to the defaults
    derived from n, d and the Lipschitz constants."""

    key: Literal["cr", "scr", "svrc", "lite_svrc"]
    M: Optional[float] = Field(default=None, gt=0)
    iters: Optional[int] = Field(default=None, ge=1)
    S: Optional[int] = Field(default=None, ge=1)
    T: Optional[int] = Field(default=None, ge=1)
    D_g: Optional[float] = Field(default=None, gt=0)
    D_h: Optional[int] = Field(default=None, ge=1)
    b_max: Optional[int] = Field(default=None, ge=1)
    grad_scale: float = Field(default=1.0, gt=0)
    hess_scale: float = Field(default=1.0, gt=0)
    floor_frac: float = Field(default=0.01, gt=0, le=1)


class LipschitzSpec(_Strict):
    L1: float = Field(gt=0)
    L2: float = Field(gt=0)


class ExperimentConfig(_Strict):
    name: str = "experiment"
    objective: ObjectiveSpec
    dataset: Optional[DatasetSpec] = None
    algorithms: list[AlgorithmSpec] = Field(min_length=1)
    seeds: list[int] = Field(min_length=1)
    mode: Literal["theory", "practical"] = "practical"
    # Hessian-sample budget in units of n; each algorithm runs until it
    # would exceed it (overrides iters / S)
    hess_budget_per_n: Optional[float] = Field(default=None, gt=0)
    M_multiple: float = Field(default=10.0, gt=0)
    lipschitz: Optional[LipschitzSpec] = None
    lipschitz_probes: int = Field(default=20, ge=2)
    lipschitz_radius: float = Field(default=1.0, gt=0)
    x0_scale: float = 0.0
    subsolver: SubsolverSpec = Field(default_factory=SubsolverSpec)
    eval_mu_every: int = Field(default=0, ge=0)
    out_dir: Optional[str] = None
    ledger: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if self.objective.preset is not None and self.dataset is None:
            raise ValueError("a preset objective needs a dataset")
        if self.hess_budget_per_n is None:
            for a in self.algorithms:
                if a.key in ("cr", "scr") and a.iters is None:
                    raise ValueError(f"{a.key}: set iters or hess_budget_per_n")
                if a.key in ("svrc", "lite_svrc") and a.S is None:
                    raise ValueError(f"{a.key}: set S or hess_budget_per_n")
        if self.dataset is not None and self.dataset.path is not None and not Path(self.dataset.path).is_file():
            raise FileNotFoundError(f"dataset file not found: {self.dataset.path}")
        if self.dataset is not None and self.dataset.name is not None and os.environ.get(DATA_DIR_ENV):
            find_dataset(self.dataset.name)
        return self

    def objective_key(self) -> str:
        if self.objective.preset is not None:
            return f"{self.objective.preset}@{self.dataset.key()}"
        s = self.objective.synthetic
        params = json.dumps(s.params, sort_keys=True, separators=(",", ":"))
        return f"{s.kind}:n{s.n}:d{s.d}:seed{s.seed}:{params}"


_UNHASHED = {"out_dir", "ledger"}


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON of all result-relevant fields."""
    data = cfg.model_dump(mode="json", exclude=_UNHASHED)
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return ExperimentConfig.model_validate(raw)


__all__ = [
    "ALGORITHMS",
    "AlgorithmSpec",
    "DatasetSpec",
    "ExperimentConfig",
    "LipschitzSpec",
    "ObjectiveSpec",
    "SubsolverSpec",
    "SyntheticSpec",
    "ValidationError",
    "config_hash",
    "load_config",
]
