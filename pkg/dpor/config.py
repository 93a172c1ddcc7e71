"""
Configuration for a rating round.

Config files are ``key=value`` lines with ``#`` comments. Keys are namespaced
by group (``stake.theta``, ``graph.eta`` ...) and validated into the pydantic
models below.
"""

import logging
import math
from decimal import Decimal
from pathlib import Path
from typing import Dict, Literal, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

logger = logging.getLogger(__name__)

NEM_PHI = math.e
NEM_ETA = -math.log(0.9)


class _Group(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class StakeParams(_Group):
    """Common minimum threshold; the 10% daily rate is a network constant."""

    theta: Decimal = Field(default=Decimal("100"), gt=0)


class UsageParams(_Group):
    lo: float = 0.68
    hi: float = 0.88

    @model_validator(mode="after")
    def _band(self) -> "UsageParams":
        if not 0 < self.lo < self.hi < 1:
            raise ValueError(f"usage band must satisfy 0 < lo < hi < 1, got lo={self.lo} hi={self.hi}")
        return self


class ShrinkParams(_Group):
    preset: Literal["default", "nem"] = "default"
    phi: float = Field(default=2.0, gt=1)
    eta: float = Field(default=0.02, ge=0)
    # None means: on iff eta > 0
    shrunk_normalizer: Optional[bool] = None

    @model_validator(mode="before")
    @classmethod
    def _apply_preset(cls, data):
        if isinstance(data, dict) and data.get("preset") == "nem":
            data = dict(data)
            data.setdefault("phi", NEM_PHI)
            data.setdefault("eta", NEM_ETA)
        return data

    @property
    def use_shrunk_normalizer(self) -> bool:
        if self.shrunk_normalizer is None:
            return self.eta > 0
        return self.shrunk_normalizer


class RankParams(_Group):
    alpha: float = Field(default=0.85, gt=0, lt=1)


class LoopParams(_Group):
    tau: float = Field(default=0.2, ge=0, le=1)


class SolveParams(_Group):
    method: Literal["direct", "cg"] = "direct"
    tol: float = Field(default=1e-10, gt=0)
    # None means 10 * m
    max_iter: Optional[int] = Field(default=None, gt=0)

    def iterations_for(self, m: int) -> int:
        return self.max_iter if self.max_iter is not None else max(10 * m, 1)


class BaselineParams(_Group):
    mu: float = Field(default=0.1, ge=0, lt=1)
    tol: float = Field(default=1e-12, gt=0)
    max_iter: int = Field(default=10000, gt=0)


class RepWeights(_Group):
    """Weights of stake power, resource usage and ranking in the reputation score."""

    w1: float = Field(default=0.4, ge=0)
    w2: float = Field(default=0.3, ge=0)
    w3: float = Field(default=0.3, ge=0)

    @model_validator(mode="after")
    def _sum_to_one(self) -> "RepWeights":
        total = self.w1 + self.w2 + self.w3
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"reputation weights must add up to 1, got {total}")
        return self


class ElectionParams(_Group):
    vmax: int = Field(default=30, gt=0)
    producers: int = Field(default=21, gt=0)
    standby_through: int = Field(default=72, gt=0)

    @model_validator(mode="after")
    def _ranks(self) -> "ElectionParams":
        if self.standby_through < self.producers:
            raise ValueError("election.standby_through must not be below election.producers")
        return self


class Settings(_Group):
    stake: StakeParams = Field(default_factory=StakeParams)
    usage: UsageParams = Field(default_factory=UsageParams)
    graph: ShrinkParams = Field(default_factory=ShrinkParams)
    rank: RankParams = Field(default_factory=RankParams)
    loops: LoopParams = Field(default_factory=LoopParams)
    solve: SolveParams = Field(default_factory=SolveParams)
    baseline: BaselineParams = Field(default_factory=BaselineParams)
    rep: RepWeights = Field(default_factory=RepWeights)
    election: ElectionParams = Field(default_factory=ElectionParams)

    def snapshot(self) -> Dict[str, str]:
        """Flat ``group.key -> value`` view, sorted by key."""
        flat = {}
        for group, values in self.model_dump().items():
            for key, value in values.items():
                flat[f"{group}.{key}"] = "auto" if value is None else str(value)
        return dict(sorted(flat.items()))


def read_key_values(path: Union[str, Path]) -> Dict[str, str]:
    """Read a ``key=value`` file. Keys without a value are rejected."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        values = dotenv_values(path, encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ConfigError(f"{path}: not valid UTF-8 at byte {e.start}") from None
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigError(f"{path}: keys without a value: {', '.join(missing)}")
    return dict(values)


def nest(values: Mapping[str, str]) -> Dict[str, Dict[str, str]]:
    """Turn dotted ``group.key`` names into a ``{group: {key: value}}`` mapping."""
    nested: Dict[str, Dict[str, str]] = {}
    for key, value in values.items():
        group, dot, name = key.partition(".")
        if not dot or not name:
            raise ConfigError(f"config key '{key}' is not of the form group.key")
        nested.setdefault(group, {})[name] = value
    return nested


def nest_group(values: Mapping[str, str], namespace: str) -> Dict[str, str]:
    """The flat ``key: value`` group under ``namespace``; any other group is rejected."""
    nested = nest(values)
    unexpected = sorted(set(nested) - {namespace})
    if unexpected:
        raise ConfigError(f"unexpected config groups: {', '.join(unexpected)}")
    return nested.get(namespace, {})


def parse_settings(values: Mapping[str, str]) -> Settings:
    try:
        return Settings.model_validate(nest(values))
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def load_settings(path: Optional[Union[str, Path]] = None) -> Settings:
    """Load settings from a config file, or the defaults when no path is given."""
    if path is None:
        return Settings()
    settings = parse_settings(read_key_values(path))
    logger.debug(f"Loaded configuration from {path}: {settings.snapshot()}")
    return settings
