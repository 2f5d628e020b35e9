"""Run configuration: a sectioned ``key = value`` text file.

Floats are written with ``repr`` (shortest round-tripping decimal), so
``parse(serialize(cfg)) == cfg`` holds field by field.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields, replace

from .radial import FAMILIES


class ConfigError(ValueError):
    pass


# section of each field, in file order
_SECTIONS = {
    "geometry": ("n", "family", "c", "eps", "s_c", "w", "bump_power"),
    "grid": ("N", "s_max", "s_buf", "sigma"),
    "run": ("T_end", "cadence", "snapshot_every", "early_stop", "seed", "out", "force"),
    "verdict": (
        "schwarz_slack",
        "fit_window",
        "min_decay_rate",
        "einstein_target",
        "curvature_factor",
        "hsc_budget",
        "sample_count",
    ),
}


@dataclass(frozen=True)
class RunConfig:
    n: int = 1
    family: str = "perturbed_model"
    c: float = 2.0
    eps: float = 0.05
    s_c: float = 0.3
    w: float = 0.1
    bump_power: int = 8
    N: int = 512
    s_max: float = 0.9
    s_buf: float = 0.6
    sigma: float = 0.5
    T_end: float = 10.0
    cadence: float = 0.25
    snapshot_every: int = 8
    early_stop: float = 0.0
    seed: int = 0
    out: str = "out"
    force: bool = False
    schwarz_slack: float = 1e-2
    fit_window: tuple[float, float] = (2.0, 8.0)
    min_decay_rate: float = 0.8
    einstein_target: float = 1e-4
    curvature_factor: float = 10.0
    hsc_budget: int = 64
    sample_count: int = 181

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "RunConfig":
        try:
            return replace(self, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def validate(cfg: RunConfig) -> None:
    def need(ok, msg):
        if not ok:
            raise ConfigError(msg)

    need(cfg.n in (1, 2, 3), f"n must be 1, 2 or 3, got {cfg.n!r}")
    need(cfg.family in FAMILIES, f"family must be one of {FAMILIES}, got {cfg.family!r}")
    need(0 < cfg.s_buf < cfg.s_max < 1, "need 0 < s_buf < s_max < 1")
    need(isinstance(cfg.N, int) and cfg.N >= 16, f"N must be an integer >= 16, got {cfg.N!r}")
    need(0 < cfg.sigma <= 1, "sigma must lie in (0, 1]")
    need(cfg.family == "flat" or cfg.c > 0, "c must be positive")
    need(cfg.w > 0, "w must be positive")
    need(cfg.bump_power >= 5, "bump_power must be >= 5 for a C4 bump")
    need(math.isfinite(cfg.T_end) and cfg.T_end >= 0, "T_end must be finite and nonnegative")
    need(cfg.cadence > 0, "cadence must be positive")
    need(cfg.snapshot_every >= 1, "snapshot_every must be >= 1")
    need(cfg.early_stop >= 0, "early_stop must be nonnegative")
    need(0 <= cfg.seed < 2**64, "seed must fit in 64 unsigned bits")
    lo, hi = cfg.fit_window
    need(0 <= lo < hi, "fit_window must be increasing")
    need(cfg.hsc_budget >= 1 and cfg.sample_count >= 1, "sampling budgets must be positive")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def serialize(cfg: RunConfig) -> str:
    lines = []
    for section, keys in _SECTIONS.items():
        lines.append(f"[{section}]")
        lines += [f"{k} = {_fmt(getattr(cfg, k))}" for k in keys]
        lines.append("")
    return "\n".join(lines)


def _convert(name: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind.startswith("tuple"):
            return tuple(float(p) for p in raw.split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


_KINDS = {f.name: (f.type if isinstance(f.type, str) else f.type.__name__) for f in fields(RunConfig)}


def parse(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _convert(key, raw, _KINDS[key])
    if "fit_window" in values and len(values["fit_window"]) != 2:
        raise ConfigError("fit_window needs two numbers")
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def fixed_point(n: int, **changes) -> RunConfig:
    """Einstein-normalised model ball; the flow should not move."""
    base = RunConfig(n=n, family="model_ball", c=n + 1.0, eps=0.0, N=256, T_end=5.0)
    return base.replace(**changes) if changes else base


def benchmark(n: int, **changes) -> RunConfig:
    """The perturbed model used by the acceptance runs."""
    base = RunConfig(n=n, family="perturbed_model", c=n + 1.0, eps=0.05, s_c=0.3, w=0.1, N=512, T_end=10.0)
    return base.replace(**changes) if changes else base


CONFIG_FIELDS = tuple(f.name for f in fields(RunConfig))
