"""
config.py
- TrainConfig: every knob of a training run, with per-model-kind defaults
- INI files with [model] [train] [data] [run]; errors carry the line they came from
- sweep grid files: [base] overrides + [grid] comma-separated value lists
"""

from __future__ import annotations

import configparser
import json
import re
from dataclasses import asdict, dataclass, fields, replace
from hashlib import sha1
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from motzkin_tn.errors import ConfigError

MODEL_KINDS = ("dense", "factored", "skip", "mlp")
NORM_MODES = ("exact", "constant_one", "l2_params")
INIT_KINDS = ("factorized", "uniform")
SVD_ENGINES = ("jacobi", "lapack", "auto")

KIND_DEFAULTS: Dict[str, Dict[str, int]] = {
    "dense": {"chi": 8},
    "factored": {"height": 2, "chi_h": 3, "chi_v": 8},
    "skip": {"height": 3, "chi_h": 2, "chi_v": 4},
    "mlp": {"d_e": 16, "d_h": 256},
}

SECTIONS: Dict[str, Tuple[str, ...]] = {
    "model": ("model_kind", "n", "v", "chi", "chi_h", "chi_v", "height", "d_e", "d_h",
              "sigma_inner", "sigma_outer", "sv_fill_lo", "sv_fill_hi", "init", "svd_engine"),
    "train": ("learning_rate", "epochs", "batch_size", "alpha", "norm_mode", "eval_every"),
    "data": ("mu", "train_fraction"),
    "run": ("seed", "record_timestamps"),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class TrainConfig:
    # model
    model_kind: str = "dense"
    n: int = 16
    v: int = 3
    chi: Optional[int] = None
    chi_h: Optional[int] = None
    chi_v: Optional[int] = None
    height: Optional[int] = None
    d_e: Optional[int] = None
    d_h: Optional[int] = None
    sigma_inner: float = 0.01
    sigma_outer: float = 0.01
    sv_fill_lo: float = 0.001
    sv_fill_hi: float = 0.01
    init: str = "factorized"          # factored/skip only; "uniform" is the negative control
    svd_engine: str = "jacobi"

    # train
    learning_rate: float = 0.05
    epochs: int = 50
    batch_size: int = 32
    alpha: float = 0.0
    norm_mode: str = "exact"
    eval_every: int = 1

    # data
    mu: float = 1.0
    train_fraction: float = 0.25

    # run
    seed: int = 0
    # off keeps metrics and checkpoints byte-identical across reruns
    record_timestamps: bool = False


_FIELD_TYPES: Dict[str, type] = {
    "model_kind": str, "n": int, "v": int, "chi": int, "chi_h": int, "chi_v": int, "height": int,
    "d_e": int, "d_h": int, "sigma_inner": float, "sigma_outer": float, "sv_fill_lo": float,
    "sv_fill_hi": float, "init": str, "svd_engine": str, "learning_rate": float, "epochs": int,
    "batch_size": int, "alpha": float, "norm_mode": str, "eval_every": int, "mu": float,
    "train_fraction": float, "seed": int, "record_timestamps": bool,
}


def default_config(model_kind: str = "dense") -> TrainConfig:
    return resolve(TrainConfig(model_kind=model_kind))


def resolve(cfg: TrainConfig) -> TrainConfig:
    """Fill unset model dims from the model kind's defaults."""
    defaults = KIND_DEFAULTS.get(cfg.model_kind, {})
    updates = {k: v for k, v in defaults.items() if getattr(cfg, k) is None}
    return replace(cfg, **updates) if updates else cfg


def problems(cfg: TrainConfig) -> List[str]:
    out: List[str] = []
    if cfg.model_kind not in MODEL_KINDS:
        out.append(f"model_kind must be one of {', '.join(MODEL_KINDS)}, got {cfg.model_kind!r}")
    if cfg.norm_mode not in NORM_MODES:
        out.append(f"norm_mode must be one of {', '.join(NORM_MODES)}, got {cfg.norm_mode!r}")
    if cfg.init not in INIT_KINDS:
        out.append(f"init must be one of {', '.join(INIT_KINDS)}, got {cfg.init!r}")
    if cfg.svd_engine not in SVD_ENGINES:
        out.append(f"svd_engine must be one of {', '.join(SVD_ENGINES)}, got {cfg.svd_engine!r}")
    if cfg.n < 2:
        out.append(f"n must be >= 2, got {cfg.n}")
    if cfg.v != 3:
        out.append(f"v must be 3 for spin-1 chains, got {cfg.v}")
    for name in KIND_DEFAULTS.get(cfg.model_kind, {}):
        value = getattr(cfg, name)
        if value is not None and value < 1:
            out.append(f"{name} must be >= 1, got {value}")
    if cfg.learning_rate <= 0:
        out.append(f"learning_rate must be > 0, got {cfg.learning_rate}")
    if cfg.epochs < 1:
        out.append(f"epochs must be >= 1, got {cfg.epochs}")
    if cfg.batch_size < 1:
        out.append(f"batch_size must be >= 1, got {cfg.batch_size}")
    if cfg.eval_every < 1:
        out.append(f"eval_every must be >= 1, got {cfg.eval_every}")
    if cfg.alpha < 0:
        out.append(f"alpha must be >= 0, got {cfg.alpha}")
    if not (0.0 <= cfg.mu <= 1.0):
        out.append(f"mu must be in [0, 1], got {cfg.mu}")
    if not (0.0 < cfg.train_fraction <= 1.0):
        out.append(f"train_fraction must be in (0, 1], got {cfg.train_fraction}")
    if cfg.sigma_inner < 0 or cfg.sigma_outer < 0:
        out.append(f"sigmas must be >= 0, got {cfg.sigma_inner}, {cfg.sigma_outer}")
    if cfg.sv_fill_lo > cfg.sv_fill_hi or cfg.sv_fill_lo < 0:
        out.append(f"need 0 <= sv_fill_lo <= sv_fill_hi, got {cfg.sv_fill_lo}, {cfg.sv_fill_hi}")
    return out


def validate(cfg: TrainConfig) -> TrainConfig:
    found = problems(cfg)
    if found:
        raise ConfigError([(None, p) for p in found])
    return cfg


def coerce(name: str, text: Any) -> Any:
    if name not in _FIELD_TYPES:
        raise KeyError(name)
    kind = _FIELD_TYPES[name]
    if not isinstance(text, str):
        return kind(text)
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def apply_overrides(
    cfg: TrainConfig,
    overrides: Dict[str, Any],
    lines: Optional[Dict[str, int]] = None,
) -> TrainConfig:
    """Typed overrides by field name; every bad key or value is collected before raising."""
    lines = lines or {}
    found: List[Tuple[Optional[int], str]] = []
    updates: Dict[str, Any] = {}
    for key, raw in overrides.items():
        try:
            updates[key] = coerce(key, raw)
        except KeyError:
            found.append((lines.get(key), f"unknown key {key!r}"))
        except ValueError as e:
            found.append((lines.get(key), f"bad value for {key}: {e}"))
    if found:
        raise ConfigError(found)
    return replace(cfg, **updates)


def parse_assignments(items: List[str]) -> Dict[str, str]:
    """`key=value` strings from the command line."""
    out: Dict[str, str] = {}
    bad: List[Tuple[Optional[int], str]] = []
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            bad.append((None, f"expected key=value, got {item!r}"))
            continue
        out[key.strip()] = value.strip()
    if bad:
        raise ConfigError(bad)
    return out


# ---------------- INI files ----------------

_KEY_RE = re.compile(r"^\s*([^=:#;\[\s][^=:]*?)\s*[=:]")
_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")


def _line_index(text: str) -> Dict[Tuple[str, str], int]:
    index: Dict[Tuple[str, str], int] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            index[(section, "")] = lineno
            continue
        m = _KEY_RE.match(line)
        if m and section:
            index[(section, m.group(1).strip().lower())] = lineno
    return index


def _read_ini(text: str) -> Tuple[configparser.ConfigParser, Dict[Tuple[str, str], int]]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError([(e.lineno, "key outside of any section")]) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
        raise ConfigError([(e.lineno, e.message.splitlines()[0])]) from None
    except configparser.ParsingError as e:
        raise ConfigError([(lineno, f"cannot parse {line.strip()!r}") for lineno, line in e.errors]) from None
    return parser, _line_index(text)


def config_from_text(text: str, base: Optional[TrainConfig] = None) -> TrainConfig:
    parser, index = _read_ini(text)
    found: List[Tuple[Optional[int], str]] = []
    overrides: Dict[str, str] = {}
    lines: Dict[str, int] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            found.append((index.get((section, "")), f"unknown section [{section}]"))
            continue
        for key, value in parser.items(section):
            lineno = index.get((section, key))
            if key not in SECTIONS[section]:
                home = [s for s, keys in SECTIONS.items() if key in keys]
                hint = f" (belongs in [{home[0]}])" if home else ""
                found.append((lineno, f"unknown key {key!r} in [{section}]{hint}"))
                continue
            overrides[key] = value
            lines[key] = lineno
    try:
        cfg = apply_overrides(base or TrainConfig(), overrides, lines)
    except ConfigError as e:
        found.extend(e.problems)
    if found:
        raise ConfigError(found)

    cfg = resolve(cfg)
    semantic = problems(cfg)
    if semantic:
        located = []
        for reason in semantic:
            key = reason.split(" ", 1)[0]
            located.append((lines.get(key), reason))
        raise ConfigError(located)
    return cfg


def load_config(path: Union[str, Path]) -> TrainConfig:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    return config_from_text(p.read_text(encoding="utf-8"))


def dump_config(cfg: TrainConfig) -> str:
    values = asdict(cfg)
    chunks = []
    for section, keys in SECTIONS.items():
        chunks.append(f"[{section}]")
        for key in keys:
            value = values[key]
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            chunks.append(f"{key} = {value}")
        chunks.append("")
    return "\n".join(chunks)


def config_hash(cfg: TrainConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True, ensure_ascii=False)
    return sha1(blob.encode("utf-8")).hexdigest()[:12]


def load_grid(path: Union[str, Path]) -> Tuple[Dict[str, str], Dict[str, List[str]]]:
    """[base] key = value overrides and [grid] key = v1, v2, ... lists."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"grid file not found: {p}")
    parser, index = _read_ini(p.read_text(encoding="utf-8"))
    known = {f.name for f in fields(TrainConfig)}
    found: List[Tuple[Optional[int], str]] = []
    base: Dict[str, str] = {}
    grid: Dict[str, List[str]] = {}
    for section in parser.sections():
        if section not in ("base", "grid"):
            found.append((index.get((section, "")), f"unknown section [{section}] (expected [base] or [grid])"))
            continue
        for key, value in parser.items(section):
            if key not in known:
                found.append((index.get((section, key)), f"unknown key {key!r}"))
            elif section == "base":
                base[key] = value
            else:
                values = [v.strip() for v in value.split(",") if v.strip()]
                if not values:
                    found.append((index.get((section, key)), f"empty value list for {key!r}"))
                grid[key] = values
    if found:
        raise ConfigError(found)
    return base, grid


def main() -> None:
    for kind in MODEL_KINDS:
        cfg = default_config(kind)
        print(f"=== default {kind} config ({config_hash(cfg)}) ===")
        print(dump_config(cfg))


if __name__ == "__main__":
    main()
