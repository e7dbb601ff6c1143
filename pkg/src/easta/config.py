"""Run configuration: JSON schema, validation and canonical hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from .model import SCHEDULE_KINDS

SCHEMA_VERSION = 1
EXPERIMENTS = ("figure-overlap", "figure-cost", "sweep-tau", "verify")
DEFAULT_TAU_LIST = (0.1, 0.3, 0.5, 1.0, 3.0, 10.0)

# Named tolerances used by the verify suite; any of them may be overridden.
DEFAULT_TOLERANCES: dict[str, float] = {
    "frame_orthonormality": 1e-10,
    "gauge_continuity": 1e-12,
    "propagator_unitarity": 1e-9,
    "self_convergence": 1e-6,
    "easta_unitarity": 1e-9,
    "defining_identity": 1e-7,
    "easta_overlap": 1e-6,
    "cd_transitionless": 1e-10,
    "cd_diagonal": 1e-9,
    "cd_symmetry": 1e-6,
    "cd_generator": 1e-5,
    "spectrum_equality": 1e-8,
    "similarity": 1e-8,
    "env_routes": 5e-4,
    "cost_equality": 1e-6,
    "generalized_consistency": 1e-12,
    "reduced_state": 1e-8,
    "uneven_obstruction": 1e-2,
    "defect_decomposition": 1e-8,
    "even_defect": 1e-9,
    "even_extension": 1e-9,
}

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "easta run config",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "experiment": {"enum": list(EXPERIMENTS)},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "B": {"type": "number"},
                "tau": {"type": "number", "exclusiveMinimum": 0},
                "schedule": {"enum": list(SCHEDULE_KINDS)},
                "samples": {"type": "array", "items": {"type": "number"}, "minItems": 2},
                "steps": {"type": "integer", "minimum": 2},
                "dim": {"type": "integer", "minimum": 1, "maximum": 36},
            },
        },
        "branching": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "probabilities": {
                    "type": "array",
                    "items": {"type": "number", "minimum": 0, "maximum": 1},
                    "minItems": 1,
                },
                "dim_environment": {"type": "integer", "minimum": 1},
            },
        },
        "tau_list": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0},
            "minItems": 1,
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output_dir": {"type": "string"},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {name: {"type": "number", "exclusiveMinimum": 0} for name in DEFAULT_TOLERANCES},
        },
    },
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    B: float = 1.0
    tau: float = 1.0
    schedule: str = "cosine-squared"
    steps: int = 2000
    dim: int = 2
    samples: tuple[float, ...] | None = None


@dataclass(frozen=True)
class BranchingConfig:
    probabilities: tuple[float, ...] | None = None
    dim_environment: int | None = None


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    branching: BranchingConfig = field(default_factory=BranchingConfig)
    experiment: str | None = None
    tau_list: tuple[float, ...] = DEFAULT_TAU_LIST
    seed: int = 0
    output_dir: str = "results"
    tolerances: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "RunConfig":
        try:
            jsonschema.validate(raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid config at {where}: {exc.message}") from None

        m = dict(raw.get("model", {}))
        if "samples" in m:
            m["samples"] = tuple(m["samples"])
        model = ModelConfig(**m)
        if model.schedule == "custom-sampled" and model.samples is None:
            raise ConfigError("custom-sampled schedule requires model.samples")
        if model.dim != 2 and model.schedule != "cosine-squared":
            raise ConfigError("schedule applies to the two-level model only (dim = 2)")

        b = dict(raw.get("branching", {}))
        if "probabilities" in b:
            b["probabilities"] = tuple(b["probabilities"])
            if len(b["probabilities"]) != model.dim:
                raise ConfigError(
                    f"branching.probabilities needs one weight per system level ({model.dim})"
                )
            if abs(sum(b["probabilities"]) - 1.0) > 1e-12:
                raise ConfigError("branching.probabilities must sum to 1")
        branching = BranchingConfig(**b)
        if branching.dim_environment is not None and branching.dim_environment < model.dim:
            raise ConfigError("branching.dim_environment must be at least model.dim")

        tolerances = dict(DEFAULT_TOLERANCES)
        tolerances.update(raw.get("tolerances", {}))
        return cls(
            model=model,
            branching=branching,
            experiment=raw.get("experiment"),
            tau_list=tuple(raw.get("tau_list", DEFAULT_TAU_LIST)),
            seed=int(raw.get("seed", 0)),
            output_dir=raw.get("output_dir", "results"),
            tolerances=tolerances,
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict[str, Any]:
        model = {
            "B": self.model.B,
            "tau": self.model.tau,
            "schedule": self.model.schedule,
            "steps": self.model.steps,
            "dim": self.model.dim,
        }
        if self.model.samples is not None:
            model["samples"] = list(self.model.samples)
        branching: dict[str, Any] = {}
        if self.branching.probabilities is not None:
            branching["probabilities"] = list(self.branching.probabilities)
        if self.branching.dim_environment is not None:
            branching["dim_environment"] = self.branching.dim_environment
        out: dict[str, Any] = {
            "schema": SCHEMA_VERSION,
            "model": model,
            "branching": branching,
            "tau_list": list(self.tau_list),
            "seed": self.seed,
            "output_dir": self.output_dir,
            "tolerances": dict(sorted(self.tolerances.items())),
        }
        if self.experiment is not None:
            out["experiment"] = self.experiment
        return out

    def replace(self, **changes: Any) -> "RunConfig":
        """Copy with top-level or ``model.<field>`` overrides, revalidated."""
        raw = copy.deepcopy(self.to_dict())
        for key, value in changes.items():
            if key.startswith("model_"):
                raw["model"][key[len("model_"):]] = value
            else:
                raw[key] = value
        return RunConfig.from_dict(raw)

    def canonical_json(self) -> str:
        """Config as compact sorted JSON, without ``output_dir`` (location is not an input)."""
        raw = self.to_dict()
        raw.pop("output_dir")
        return json.dumps(raw, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()
