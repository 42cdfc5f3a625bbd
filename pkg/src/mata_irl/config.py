"""Run configuration: versioned JSON files, profiles, schema and hashing.

A config file names a profile (``desk`` or ``reference``) and overrides any
subset of its fields. Unknown keys are rejected. The resolved configuration
is what gets hashed and snapshotted, so a profile-only file and its fully
spelled-out equivalent hash identically.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .env import EnvConfig
from .errors import ConfigError
from .irl import IrlConfig
from .marl import MarlConfig
from .nets import MhsaConfig

SCHEMA_VERSION = 1
SCHEMA_FILE = "run_config.schema.json"


@dataclass(frozen=True)
class Ablation:
    no_gat: bool = False
    no_mhsa: bool = False
    no_irl: bool = False

    @property
    def label(self) -> str:
        on = [name[3:] for name in ("no_gat", "no_mhsa", "no_irl") if getattr(self, name)]
        return "full" if not on else "no_" + "_".join(on)


@dataclass(frozen=True)
class DemoSpec:
    path: str | None = None  # expert demo file, relative to the config file
    episodes: int = 100
    seed: int = 0


SECTIONS = {"env": EnvConfig, "marl": MarlConfig, "mhsa": MhsaConfig, "irl": IrlConfig,
            "ablation": Ablation, "demos": DemoSpec}

PROFILES = {
    "reference": {
        "mhsa": {"d": 256, "heads": 16},
    },
    "desk": {
        "env": {"n_agents": 3, "n_tasks": 8, "world_size": 10.0, "speed": 2.5, "completion_radius": 1.5,
                "max_steps": 25},
        "marl": {"lr_actor": 3e-4, "lr_critic": 1e-3, "batch_size": 256, "buffer_capacity": 100_000,
                 "episodes": 300, "hidden": 64, "entropy_weight": 0.2},
        "mhsa": {"d": 32, "heads": 4},
        "irl": {"lr_gen": 1e-4, "lr_disc": 1e-3},
    },
}

_JSON_TYPES = {"int": "integer", "float": "number", "bool": "boolean", "str | None": ["string", "null"]}


def _section_schema(cls) -> dict:
    props = {f.name: {"type": _JSON_TYPES[f.type]} for f in dataclasses.fields(cls)}
    return {"type": "object", "additionalProperties": False, "properties": props}


def build_schema() -> dict:
    props = {name: _section_schema(cls) for name, cls in SECTIONS.items()}
    props.update({
        "schema_version": {"const": SCHEMA_VERSION},
        "profile": {"enum": sorted(PROFILES)},
        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "out_dir": {"type": "string"},
    })
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "mata-irl run configuration",
        "type": "object",
        "additionalProperties": False,
        "required": ["schema_version"],
        "properties": props,
    }


def published_schema() -> dict:
    return json.loads(resources.files("mata_irl").joinpath(SCHEMA_FILE).read_text(encoding="utf-8"))


def _coerce(cls, values: dict):
    """Cast to the declared field types so 10 and 10.0 resolve identically."""
    out = {}
    for f in dataclasses.fields(cls):
        v = values[f.name]
        out[f.name] = float(v) if f.type == "float" else v
    return out


@dataclass(frozen=True)
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    marl: MarlConfig = field(default_factory=MarlConfig)
    mhsa: MhsaConfig = field(default_factory=MhsaConfig)
    irl: IrlConfig = field(default_factory=IrlConfig)
    ablation: Ablation = field(default_factory=Ablation)
    demos: DemoSpec = field(default_factory=DemoSpec)
    seeds: tuple = (0, 1, 2, 3, 4)
    out_dir: str = "runs"
    profile: str = "desk"
    base_dir: Path | None = None  # where relative paths resolve; not part of the config

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "RunConfig":
        try:
            jsonschema.validate(raw, build_schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"schema violation at {where}: {exc.message}") from None
        profile = raw.get("profile", "desk")
        sections = {}
        for name, section_cls in SECTIONS.items():
            values = {f.name: f.default for f in dataclasses.fields(section_cls)}
            values.update(PROFILES[profile].get(name, {}))
            values.update(raw.get(name, {}))
            try:
                sections[name] = section_cls(**_coerce(section_cls, values))
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{name}: {exc}") from None
        return cls(**sections, seeds=tuple(raw.get("seeds", (0, 1, 2, 3, 4))),
                   out_dir=raw.get("out_dir", "runs"), profile=profile,
                   base_dir=Path(base_dir) if base_dir is not None else None)

    @classmethod
    def profile_defaults(cls, profile: str = "desk") -> "RunConfig":
        return cls.from_dict({"schema_version": SCHEMA_VERSION, "profile": profile})

    def to_dict(self) -> dict:
        out = {"schema_version": SCHEMA_VERSION, "profile": self.profile}
        for name in SECTIONS:
            out[name] = dataclasses.asdict(getattr(self, name))
        out["seeds"] = list(self.seeds)
        out["out_dir"] = self.out_dir
        return out

    def replace(self, **sections) -> "RunConfig":
        """Copy with whole sections swapped, or section fields given as ``section__field``."""
        updates = {}
        for key, value in sections.items():
            if "__" in key:
                sec, fname = key.split("__", 1)
                current = updates.get(sec, getattr(self, sec))
                updates[sec] = dataclasses.replace(current, **{fname: value})
            else:
                updates[key] = value
        return dataclasses.replace(self, **updates)

    def config_hash(self) -> str:
        """SHA-256 over the canonical resolved config, ignoring where output goes."""
        body = self.to_dict()
        for key in ("out_dir", "profile"):
            body.pop(key)
        canon = json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def demo_path(self) -> Path | None:
        if self.demos.path is None:
            return None
        p = Path(self.demos.path)
        return p if p.is_absolute() or self.base_dir is None else self.base_dir / p


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return RunConfig.from_dict(copy.deepcopy(raw), base_dir=path.parent)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
