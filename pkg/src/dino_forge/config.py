"""Run configuration files (INI: sections of key = value).

Sections: ``[run]`` (TrainRecipe scalars), ``[model]`` (optional ``preset``
plus ModelConfig fields), ``[optim]``, ``[dino]``, ``[augment]`` and
``[paths]``.  Unknown sections or keys are rejected.  ``dump`` writes every
field, defaults included, so the echoed copy in a run directory fully
determines the run.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .augment import AugmentConfig
from .engine import DinoConfig, OptimConfig, TrainRecipe, default_recipe
from .model import ModelConfig, preset

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class PathsConfig:
    dataset: str = ""
    image_root: str = ""
    val_dataset: str = ""
    ciw: str = ""
    pretrained: str = ""
    resume: str = ""
    out_root: str = "runs"


@dataclass
class RunConfig:
    recipe: TrainRecipe = field(default_factory=TrainRecipe)
    paths: PathsConfig = field(default_factory=PathsConfig)


_RUN_KEYS = [f.name for f in fields(TrainRecipe) if f.name not in ("model", "augment", "optim", "dino")]


def _convert(type_name: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if type_name == "int":
            return int(raw)
        if type_name == "float":
            return float(raw)
        if type_name == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if type_name == "str":
            return raw
        if type_name.startswith("tuple[float"):
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if type_name == "list[int]":
            return [int(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type_name}") from None
    raise ConfigError(f"{where}: unsupported field type {type_name}")


def _format(value) -> str:
    if isinstance(value, (tuple, list)):
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _apply(obj, section: configparser.SectionProxy, skip=()):
    types = {f.name: f.type for f in fields(obj)}
    updates = {}
    for key, raw in section.items():
        if key in skip:
            continue
        if key not in types:
            raise ConfigError(f"[{section.name}]: unknown key {key!r}")
        updates[key] = _convert(types[key], raw, f"[{section.name}] {key}")
    try:
        return replace(obj, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section.name}]: {exc}") from None


SECTIONS = ("run", "model", "optim", "dino", "augment", "paths")


def parse(text: str, source: str = "<config>", mode: str | None = None,
          overrides: list[tuple[str, str, str]] = ()) -> RunConfig:
    """Parse config text; ``mode`` must agree with ``[run] mode`` if both are set.

    ``overrides`` are (section, key, value) triples applied on top of the file.
    """
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {' '.join(str(exc).split())}") from None
    unknown = set(cp.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")
    if mode is not None:
        if cp.has_option("run", "mode") and cp["run"]["mode"].strip() != mode:
            raise ConfigError(f"{source}: config mode {cp['run']['mode'].strip()!r} does not match {mode!r}")
        if not cp.has_section("run"):
            cp.add_section("run")
        cp["run"]["mode"] = mode
    for section, key, value in overrides:
        if section not in SECTIONS:
            raise ConfigError(f"override: unknown section {section!r}")
        if not cp.has_section(section):
            cp.add_section(section)
        cp[section][key] = value
    run = cp["run"] if cp.has_section("run") else {}
    version = int(run.get("version", CONFIG_VERSION))
    if version != CONFIG_VERSION:
        raise ConfigError(f"{source}: unsupported config version {version}")
    mode = run.get("mode", "pretrain").strip()
    try:
        recipe = default_recipe(mode)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None

    model = ModelConfig()
    if cp.has_section("model"):
        sec = cp["model"]
        if "preset" in sec:
            try:
                model = preset(sec["preset"].strip())
            except ValueError as exc:
                raise ConfigError(f"{source}: {exc}") from None
        model = _apply(model, sec, skip=("preset",))
    optim = _apply(recipe.optim, cp["optim"]) if cp.has_section("optim") else recipe.optim
    dino = _apply(recipe.dino, cp["dino"]) if cp.has_section("dino") else recipe.dino
    augment = _apply(AugmentConfig(image_size=model.image_size), cp["augment"]) if cp.has_section("augment") \
        else AugmentConfig(image_size=model.image_size)
    paths = _apply(PathsConfig(), cp["paths"]) if cp.has_section("paths") else PathsConfig()

    recipe = replace(recipe, model=model, optim=optim, dino=dino, augment=augment)
    if cp.has_section("run"):
        recipe = _apply(recipe, cp["run"], skip=("version", "mode"))
    return RunConfig(recipe, paths)


def load(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse(text, str(path))


def dump(cfg: RunConfig) -> str:
    r = cfg.recipe
    lines = ["[run]", f"version = {CONFIG_VERSION}", f"mode = {r.mode}"]
    lines += [f"{k} = {_format(getattr(r, k))}" for k in _RUN_KEYS if k != "mode"]
    for name, obj in (("model", r.model), ("optim", r.optim), ("dino", r.dino), ("augment", r.augment),
                      ("paths", cfg.paths)):
        lines += ["", f"[{name}]"]
        lines += [f"{f.name} = {_format(getattr(obj, f.name))}" for f in fields(obj)]
    return "\n".join(lines) + "\n"
