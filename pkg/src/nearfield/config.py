"""Pipeline configuration: YAML schema, engine registry, derived seeds.

One config file drives every subcommand. All randomness flows from the
single top-level seed through named sub-seeds, so any stage is exactly
reproducible in isolation. Engines are declared by name and type; mocks
are built in-process, real backends as subprocess commands.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .corpus import Manifest, load_manifest
from .engines.mocks import (
    DegradingTranscriber,
    EnergyVad,
    FailingAligner,
    SignatureTranscriber,
    TruthJitterAligner,
    UniformAligner,
)
from .engines.subproc import (
    SubprocessAligner,
    SubprocessFrameScorer,
    SubprocessHandle,
    SubprocessTranscriber,
)
from .errors import ConfigError
from .filtering import CriterionId

_KNOWN_SECTIONS = {"seed", "paths", "engines", "split", "align", "filter",
                   "detector", "tune", "synth", "evaluate", "report"}


def derive_seed(seed: int, name: str) -> int:
    """Stable named sub-seed from the top-level seed."""
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class PipelineConfig:
    raw: dict[str, Any]
    path: Path
    overrides: dict[str, Any] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return int(self.overrides.get("seed", self.raw.get("seed", 0)))

    @property
    def base_dir(self) -> Path:
        return self.path.parent

    @property
    def out_dir(self) -> Path:
        if "out" in self.overrides:
            return Path(self.overrides["out"])
        return self._resolve(self.section("paths").get("out_dir", "out"))

    def _resolve(self, p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def section(self, name: str) -> dict[str, Any]:
        value = self.raw.get(name, {})
        if not isinstance(value, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        return value

    def manifest_path(self) -> Path:
        paths = self.section("paths")
        if "manifest" not in paths:
            raise ConfigError("paths.manifest is required")
        return self._resolve(paths["manifest"])

    def audio_root(self) -> Path:
        paths = self.section("paths")
        if "audio_root" in paths:
            return self._resolve(paths["audio_root"])
        return self.manifest_path().parent

    def criterion(self) -> CriterionId:
        value = self.overrides.get("criterion",
                                   self.section("filter").get("criterion", "c3"))
        try:
            return CriterionId(value)
        except ValueError as exc:
            raise ConfigError(f"unknown filter criterion {value!r}") from exc

    def config_hash(self) -> str:
        canonical = json.dumps(
            {"config": self.raw, "overrides": self.overrides}, sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def meta(self) -> dict[str, Any]:
        return {"config_hash": self.config_hash(), "seed": self.seed}


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(raw) - _KNOWN_SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return PipelineConfig(raw=raw, path=path,
                          overrides=dict(overrides or {}))


# ---------------------------------------------------------------------------
# Engine registry


class EngineRegistry:
    """Engines declared in config, constructed lazily on first use.

    Lazy construction matters: a truth-timeline aligner reads the manifest
    its config names, which may only exist after the synth stage has run.
    """

    def __init__(self, config: PipelineConfig):
        self._config = config
        section = config.section("engines")
        self._specs = {
            "transcriber": {s.get("name"): s for s in section.get("transcribers", [])},
            "aligner": {s.get("name"): s for s in section.get("aligners", [])},
            "scorer": {s.get("name"): s for s in section.get("scorers", [])},
        }
        for kind, specs in self._specs.items():
            if None in specs or len(specs) != len(section.get(f"{kind}s", specs)):
                raise ConfigError(f"every {kind} engine needs a unique name")
        self._built: dict[tuple[str, str], Any] = {}
        self.handles: list[SubprocessHandle] = []

    @property
    def transcriber_names(self) -> list[str]:
        return list(self._specs["transcriber"])

    def transcriber(self, name: str):
        return self._get("transcriber", name)

    def aligner(self, name: str):
        return self._get("aligner", name)

    def scorer(self, name: str):
        return self._get("scorer", name)

    def close(self) -> None:
        for handle in self.handles:
            handle.close()

    def _get(self, kind: str, name: str):
        key = (kind, name)
        if key not in self._built:
            spec = self._specs[kind].get(name)
            if spec is None:
                raise ConfigError(f"{kind} engine {name!r} is not configured")
            self._built[key] = self._build(kind, name, spec)
        return self._built[key]

    def _subprocess_handle(self, spec: dict, name: str) -> SubprocessHandle:
        command = spec.get("command")
        if not isinstance(command, list) or not command:
            raise ConfigError(f"engine {name!r}: subprocess needs a command list")
        handle = SubprocessHandle([str(c) for c in command], name=name,
                                  timeout_s=float(spec.get("timeout_s", 120.0)))
        self.handles.append(handle)
        return handle

    def _truth_manifest(self, spec: dict) -> Manifest:
        manifest_path = spec.get("manifest")
        if manifest_path is None:
            path = self._config.manifest_path()
        else:
            path = self._config._resolve(manifest_path)
        return load_manifest(path)

    def _build(self, kind: str, name: str, spec: dict):
        engine_type = spec.get("type")
        config = self._config
        if kind == "transcriber":
            if engine_type == "signature":
                return SignatureTranscriber()
            if engine_type == "degrading":
                inner = self.transcriber(spec.get("inner", ""))
                return DegradingTranscriber(
                    inner, dropout=float(spec.get("dropout", 0.5)),
                    seed=derive_seed(config.seed, f"degrade:{name}"))
            if engine_type == "subprocess":
                return SubprocessTranscriber(self._subprocess_handle(spec, name))
        elif kind == "aligner":
            if engine_type == "uniform":
                return UniformAligner()
            if engine_type == "truth_jitter":
                return TruthJitterAligner.from_manifest(
                    self._truth_manifest(spec),
                    jitter_s=float(spec.get("jitter_s", 0.02)),
                    seed=derive_seed(config.seed, f"jitter:{name}"))
            if engine_type == "failing":
                return FailingAligner()
            if engine_type == "subprocess":
                return SubprocessAligner(self._subprocess_handle(spec, name))
        elif kind == "scorer":
            if engine_type == "energy":
                return EnergyVad()
            if engine_type == "subprocess":
                return SubprocessFrameScorer(self._subprocess_handle(spec, name))
        raise ConfigError(f"{kind} {name!r}: unknown type {engine_type!r}")


def build_engines(config: PipelineConfig) -> EngineRegistry:
    return EngineRegistry(config)
