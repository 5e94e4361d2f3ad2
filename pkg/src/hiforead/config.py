"""Pipeline configuration: a YAML file with nested sections, validated with key paths."""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .bo import ACQUISITIONS, BOConfig
from .forecasters import ENSEMBLE_KINDS, ForecasterError, ForecasterSpec, default_grids, expand_grid
from .ingestion import FILL_POLICIES, FREQUENCIES
from .reconcile import STAGES, MultiStageConfig

_TOP_KEYS = {
    "data", "frequency", "horizon", "folds", "validation_folds", "fill_policy", "nonnegative",
    "td_window", "spectral", "model_periods", "bo", "workers", "seed", "output_dir", "stages",
    "grids", "tolerance",
}


class ConfigError(ValueError):
    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("; ".join(f"{k}: {m}" for k, m in errors))


@dataclass(frozen=True)
class PipelineConfig:
    observations: Path | None = None
    hierarchy: Path | None = None
    id_column: str = "series_id"
    time_column: str = "timestamp"
    value_column: str = "value"
    frequency: str = "daily"
    horizon: int = 7
    folds: int = 4
    validation_folds: int | None = None
    fill_policy: str = "zero"
    nonnegative: bool = False
    td_window: int | None = None
    max_peaks: int = 5
    tau: int | None = None
    model_periods: int = 2
    bo: BOConfig = field(default_factory=BOConfig)
    workers: int = 1
    seed: int = 0
    output_dir: Path = Path("out")
    stages: tuple[str, ...] = STAGES
    grids: Mapping[str, list[dict]] = field(default_factory=default_grids)
    tolerance: float = 1e-8

    @property
    def n_validation_folds(self) -> int:
        return self.validation_folds or self.folds

    def multistage(self) -> MultiStageConfig:
        return MultiStageConfig(
            td_window=self.td_window, max_peaks=self.max_peaks, tau=self.tau,
            bo=self.bo, nonnegative=self.nonnegative, tolerance=self.tolerance,
        )

    def with_overrides(self, *, seed=None, workers=None, output_dir=None, stages=None) -> PipelineConfig:
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed), bo=replace(cfg.bo, seed=int(seed)))
        if workers is not None:
            cfg = replace(cfg, workers=int(workers))
        if output_dir is not None:
            cfg = replace(cfg, output_dir=Path(output_dir))
        if stages is not None:
            cfg = replace(cfg, stages=tuple(stages))
        return cfg


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def parse_config(raw: Mapping, base_dir: str | Path = ".", check_paths: bool = True) -> PipelineConfig:
    """Validate a raw mapping and build a :class:`PipelineConfig`.

    Every problem is collected with its dotted key path before raising.
    """
    base_dir = Path(base_dir)
    errors: list[tuple[str, str]] = []
    if not isinstance(raw, Mapping):
        raise ConfigError([("<root>", "config must be a mapping")])
    for key in raw:
        if key not in _TOP_KEYS:
            errors.append((str(key), "unknown key"))
    kw: dict = {}

    data = raw.get("data", {}) or {}
    if not isinstance(data, Mapping):
        errors.append(("data", "must be a mapping"))
        data = {}
    for key in ("observations", "hierarchy"):
        value = data.get(key)
        if value is None:
            errors.append((f"data.{key}", "required"))
            continue
        path = Path(value)
        path = path if path.is_absolute() else base_dir / path
        if check_paths and not path.is_file():
            errors.append((f"data.{key}", f"file not found: {path}"))
        kw[key] = path
    for key in ("id_column", "time_column", "value_column"):
        if key in data:
            kw[key] = str(data[key])

    def pos_int(key, value, minimum=1):
        if not _is_int(value) or value < minimum:
            errors.append((key, f"must be an integer >= {minimum}, got {value!r}"))
            return None
        return value

    if "frequency" in raw:
        if raw["frequency"] not in FREQUENCIES:
            errors.append(("frequency", f"must be one of {FREQUENCIES}"))
        else:
            kw["frequency"] = raw["frequency"]
    for key in ("horizon", "folds", "workers", "model_periods"):
        if key in raw:
            v = pos_int(key, raw[key], 0 if key == "model_periods" else 1)
            if v is not None:
                kw[key] = v
    for key in ("validation_folds", "td_window"):
        if raw.get(key) is not None:
            v = pos_int(key, raw[key])
            if v is not None:
                kw[key] = v
    if "seed" in raw:
        v = pos_int("seed", raw["seed"], 0)
        if v is not None:
            kw["seed"] = v
    if "fill_policy" in raw:
        if raw["fill_policy"] not in FILL_POLICIES:
            errors.append(("fill_policy", f"must be one of {FILL_POLICIES}"))
        else:
            kw["fill_policy"] = raw["fill_policy"]
    if "nonnegative" in raw:
        if not isinstance(raw["nonnegative"], bool):
            errors.append(("nonnegative", "must be true or false"))
        else:
            kw["nonnegative"] = raw["nonnegative"]
    if "tolerance" in raw:
        tol = raw["tolerance"]
        if not isinstance(tol, (int, float)) or isinstance(tol, bool) or tol < 0:
            errors.append(("tolerance", "must be a number >= 0"))
        else:
            kw["tolerance"] = float(tol)
    if "output_dir" in raw:
        out = Path(str(raw["output_dir"]))
        kw["output_dir"] = out if out.is_absolute() else base_dir / out

    spectral = raw.get("spectral", {}) or {}
    if "max_peaks" in spectral:
        v = pos_int("spectral.max_peaks", spectral["max_peaks"])
        if v is not None:
            kw["max_peaks"] = v
    if spectral.get("tau") is not None:
        v = pos_int("spectral.tau", spectral["tau"], 2)
        if v is not None:
            kw["tau"] = v

    bo_raw = dict(raw.get("bo", {}) or {})
    bo_kw = {"seed": kw.get("seed", 0)}
    if "acquisition" in bo_raw:
        if bo_raw["acquisition"] not in ACQUISITIONS:
            errors.append(("bo.acquisition", f"must be one of {ACQUISITIONS}"))
        else:
            bo_kw["acquisition"] = bo_raw["acquisition"]
    for key, minimum in (("init_points", 3), ("iterations", 0), ("seed", 0), ("grid_resolution", 2)):
        if key in bo_raw:
            v = pos_int(f"bo.{key}", bo_raw[key], minimum)
            if v is not None:
                bo_kw[key] = v
    for key in ("xi", "kappa", "length_scale", "noise"):
        if key in bo_raw:
            v = bo_raw[key]
            if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
                errors.append((f"bo.{key}", "must be a number >= 0"))
            else:
                bo_kw[key] = float(v)
    kw["bo"] = BOConfig(**bo_kw)

    if "stages" in raw:
        stages = raw["stages"]
        if isinstance(stages, str):
            stages = [s.strip() for s in stages.split(",") if s.strip()]
        bad = [s for s in stages if s not in STAGES]
        if bad or not stages:
            errors.append(("stages", f"unknown stage(s) {bad}; expected a subset of {STAGES}"))
        else:
            kw["stages"] = tuple(s for s in STAGES if s in stages)

    grids = default_grids()
    for kind, grid in (raw.get("grids", {}) or {}).items():
        if kind not in grids:
            errors.append((f"grids.{kind}", "unknown model kind"))
            continue
        try:
            candidates = expand_grid(grid)
            if not candidates:
                raise ForecasterError("empty grid")
            for cand in candidates:
                ForecasterSpec(kind, cand)
        except (ForecasterError, TypeError) as exc:
            errors.append((f"grids.{kind}", str(exc)))
            continue
        grids[kind] = candidates
    kw["grids"] = {k: grids[k] for k in (*ENSEMBLE_KINDS, *[g for g in grids if g not in ENSEMBLE_KINDS])}

    if errors:
        raise ConfigError(errors)
    return PipelineConfig(**kw)


def load_config(path: str | Path, check_paths: bool = True) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([("<file>", f"cannot read {path}: {exc.strerror}")]) from None
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError([("<file>", f"invalid YAML: {exc}")]) from None
    return parse_config(raw, path.parent, check_paths)
