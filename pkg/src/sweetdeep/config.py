"""Nested YAML configuration for the CLI.

Every section is optional and missing keys take the library defaults.
Unknown keys are rejected so that typos surface as :class:`ConfigError`
instead of being ignored. Paths may be overridden from the environment,
nothing else may.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .ecgproc import QcSettings
from .errors import ConfigError, ParameterError
from .experiment import VARIANTS
from .model import AdamConfig, ModelConfig
from .screen import HALF_WIDTH
from .seeds import derive_seed
from .signalgen import BeatTemplateParams, CohortSpec, beat_params_from_dict, cohort_spec_from_dict

ENV_PREFIX = "SWEETDEEP_"
STAGES = ("cohort", "ecg", "folds", "train")


@dataclass(frozen=True)
class EcgGenSettings:
    beat: BeatTemplateParams = BeatTemplateParams()
    duration_s: float = 120.0
    fs_hz: float = 500.0


@dataclass(frozen=True)
class AbstentionSettings:
    enabled: bool = True
    half_width: float = HALF_WIDTH
    tune: bool = False
    max_abstain: float = 0.10


@dataclass(frozen=True)
class Paths:
    output_dir: str = "out"
    cohort: str | None = None
    folds: str | None = None
    models: str | None = None


@dataclass(frozen=True)
class PipelineConfig:
    cohort: CohortSpec = CohortSpec()
    ecg: EcgGenSettings = EcgGenSettings()
    ecg_qc: QcSettings = QcSettings()
    model: ModelConfig = ModelConfig()
    n_folds: int = 3
    smote_k: int = 5
    threshold: float = 0.5
    variants: tuple[str, ...] = tuple(VARIANTS)
    abstention: AbstentionSettings = AbstentionSettings()
    seed: int = 0
    seeds: dict[str, int] = field(default_factory=dict)
    paths: Paths = Paths()

    def stage_seed(self, stage: str) -> int:
        """Explicit per-stage seed if configured, else one hashed from ``seed``."""
        if stage in self.seeds:
            return int(self.seeds[stage])
        return derive_seed(self.seed, stage)

    def with_seed(self, seed: int) -> "PipelineConfig":
        """``--seed``: drop per-stage seeds and derive every stream from ``seed``."""
        return replace(self, seed=int(seed), seeds={})

    def cohort_spec(self) -> CohortSpec:
        return replace(self.cohort, seed=self.stage_seed("cohort"))

    def to_dict(self) -> dict:
        """Nested mapping in the same layout that :func:`config_from_dict` reads."""
        cohort = asdict(self.cohort)
        cohort.pop("seed")
        model = self.model.to_dict()
        model.pop("seed")
        return _plain(
            {
                "seed": self.seed,
                "seeds": dict(self.seeds),
                "generator": {
                    "cohort": cohort,
                    "ecg": {**asdict(self.ecg.beat), "duration_s": self.ecg.duration_s, "fs_hz": self.ecg.fs_hz},
                },
                "ecg_qc": asdict(self.ecg_qc),
                "model": model,
                "dataset": {"n_folds": self.n_folds, "smote_k": self.smote_k},
                "experiment": {"variants": list(self.variants), "threshold": self.threshold},
                "abstention": asdict(self.abstention),
                "paths": asdict(self.paths),
            }
        )


def _check_keys(section: str, given: dict, allowed) -> None:
    extra = sorted(set(given) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(extra)}")


def _names(cls) -> list[str]:
    return [f.name for f in fields(cls)]


def _section(raw: dict, name: str) -> dict:
    v = raw.get(name)
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ConfigError(f"section [{name}] must be a mapping")
    return v


def _coerce(section: str, defaults, given: dict) -> dict:
    """Cast values to the type of the matching default (bool stays strict)."""
    out = {}
    for key, value in given.items():
        ref = getattr(defaults, key)
        try:
            if isinstance(ref, bool):
                if not isinstance(value, bool):
                    raise TypeError("expected true/false")
                out[key] = value
            elif isinstance(ref, (int, float)):
                if isinstance(value, bool):
                    raise TypeError("expected a number")
                out[key] = type(ref)(value)
            elif isinstance(ref, tuple):
                out[key] = tuple(float(x) for x in value)
            else:
                out[key] = value
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return out


def config_from_dict(raw: dict[str, Any]) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    top = ["generator", "ecg_qc", "model", "dataset", "experiment", "abstention", "seed", "seeds", "paths"]
    _check_keys("root", raw, top)
    try:
        gen = _section(raw, "generator")
        _check_keys("generator", gen, ["cohort", "ecg"])
        seeds = dict(_section(raw, "seeds"))
        cohort_raw = dict(_section(gen, "cohort"))
        _check_keys("generator.cohort", cohort_raw, _names(CohortSpec))
        if "seed" in cohort_raw:
            seeds.setdefault("cohort", cohort_raw.pop("seed"))
        cohort = cohort_spec_from_dict(cohort_raw)
        ecg_raw = dict(_section(gen, "ecg"))
        _check_keys("generator.ecg", ecg_raw, _names(BeatTemplateParams) + ["duration_s", "fs_hz", "seed"])
        if "seed" in ecg_raw:
            seeds.setdefault("ecg", ecg_raw["seed"])
        ecg = EcgGenSettings(
            beat_params_from_dict({k: v for k, v in ecg_raw.items() if k not in ("duration_s", "fs_hz", "seed")}),
            float(ecg_raw.get("duration_s", EcgGenSettings.duration_s)),
            float(ecg_raw.get("fs_hz", EcgGenSettings.fs_hz)),
        )

        qc_raw = _section(raw, "ecg_qc")
        _check_keys("ecg_qc", qc_raw, _names(QcSettings))
        qc = replace(QcSettings(), **_coerce("ecg_qc", QcSettings(), qc_raw))

        m_raw = dict(_section(raw, "model"))
        _check_keys("model", m_raw, _names(ModelConfig))
        if "seed" in m_raw:
            seeds.setdefault("train", m_raw.pop("seed"))
        if "adam" in m_raw:
            _check_keys("model.adam", m_raw["adam"], _names(AdamConfig))
            m_raw["adam"] = AdamConfig(**{**asdict(AdamConfig()), **m_raw["adam"]})
        model = replace(ModelConfig(), **m_raw)
        model.validate()

        ds = _section(raw, "dataset")
        _check_keys("dataset", ds, ["n_folds", "smote_k"])
        ex = _section(raw, "experiment")
        _check_keys("experiment", ex, ["variants", "threshold"])
        variants = tuple(ex.get("variants", VARIANTS))
        for v in variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}")

        ab_raw = _section(raw, "abstention")
        _check_keys("abstention", ab_raw, _names(AbstentionSettings))
        abst = replace(AbstentionSettings(), **_coerce("abstention", AbstentionSettings(), ab_raw))

        _check_keys("seeds", seeds, STAGES)
        p_raw = _section(raw, "paths")
        _check_keys("paths", p_raw, _names(Paths))
        paths = replace(Paths(), **p_raw)

        cfg = PipelineConfig(
            cohort=cohort,
            ecg=ecg,
            ecg_qc=qc,
            model=model,
            n_folds=int(ds.get("n_folds", 3)),
            smote_k=int(ds.get("smote_k", 5)),
            threshold=float(ex.get("threshold", 0.5)),
            variants=variants,
            abstention=abst,
            seed=int(raw.get("seed", 0)),
            seeds={k: int(v) for k, v in seeds.items()},
            paths=paths,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config value: {exc}") from exc
    try:
        cfg.cohort.validate()
        cfg.ecg.beat.validate()
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def env_overrides(paths: Paths, environ=os.environ) -> Paths:
    """``SWEETDEEP_OUTPUT_DIR`` etc. replace the matching path entries."""
    updates = {}
    for name in _names(Paths):
        key = ENV_PREFIX + name.upper()
        if environ.get(key):
            updates[name] = environ[key]
    return replace(paths, **updates)


def load_config(path: str | Path | None = None, environ=os.environ) -> PipelineConfig:
    raw: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    cfg = config_from_dict(raw)
    return replace(cfg, paths=env_overrides(cfg.paths, environ))


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v
