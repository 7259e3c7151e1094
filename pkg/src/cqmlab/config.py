"""Run configuration: INI-style text with flat sections.

Keys placed before the first section header may be any known key, so a file
containing only ``scenario = free_gaussian`` is a complete configuration and
a fully flat file works too. Inside a section only that section's keys are allowed.
"""

import configparser
import dataclasses
import re
from dataclasses import dataclass
from typing import Tuple

from .grid import build_grid
from .trajectories import NOISE_MODELS

SCENARIOS = ("free_gaussian", "harmonic_coherent", "two_gaussian_superposition", "gaussian_barrier")
CHECKS = ("mean_consistency", "equivariance", "zeta_mean", "g_constraint", "chapman_kolmogorov",
          "tv_drift")


class ConfigError(ValueError):
    pass


def _positive(v):
    return v > 0


def _nonnegative(v):
    return v >= 0


def _at_least_one(v):
    return v >= 1


# field -> (section, type, default, (predicate, description) or None)
SCHEMA = {
    "scenario": ("run", str, None, (lambda v: v in SCENARIOS, f"one of {', '.join(SCENARIOS)}")),
    "t_final": ("run", float, 2.0, (_nonnegative, "nonnegative")),
    "dt": ("run", float, 1e-3, (_positive, "positive")),
    "snapshot_every": ("run", int, 10, (_at_least_one, "at least 1")),
    "hbar": ("constants", float, 1.0, (_positive, "positive")),
    "mass": ("constants", float, 1.0, (_positive, "positive")),
    "x_min": ("grid", float, -20.0, None),
    "x_max": ("grid", float, 20.0, None),
    "n_points": ("grid", int, 1024, None),
    "x_c": ("initial", float, 0.0, None),
    "k0": ("initial", float, 0.0, None),
    "sigma0": ("initial", float, 1.0, (_positive, "positive")),
    "separation": ("initial", float, 4.0, (_positive, "positive")),
    "omega": ("potential", float, 1.0, (_positive, "positive")),
    "barrier_height": ("potential", float, 1.0, (_nonnegative, "nonnegative")),
    "barrier_width": ("potential", float, 0.5, (_positive, "positive")),
    "barrier_center": ("potential", float, 0.0, None),
    "n": ("ensemble", int, 2000, (_nonnegative, "nonnegative")),
    "base_seed": ("ensemble", int, 0, (_nonnegative, "nonnegative")),
    "noise": ("ensemble", str, "zero", (lambda v: v in NOISE_MODELS, f"one of {', '.join(NOISE_MODELS)}")),
    "dt_sub": ("ensemble", float, 1e-3, (_positive, "positive")),
    "checks": ("checks", tuple, ("mean_consistency", "equivariance"), None),
    "ck_times": ("checks", tuple, (0.0, 1.0, 2.0), None),
    "equivariance_bins": ("checks", int, 64, (_at_least_one, "at least 1")),
    "ck_bins": ("checks", int, 10, (_at_least_one, "at least 1")),
    "dir": ("output", str, "run_output", None),
    "write_every": ("output", int, 10, (_at_least_one, "at least 1")),
}

_TOP = "__top__"  # pseudo-section for keys before the first header
SECTIONS = ("run", "constants", "grid", "initial", "potential", "ensemble", "checks", "output")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    t_final: float = 2.0
    dt: float = 1e-3
    snapshot_every: int = 10
    hbar: float = 1.0
    mass: float = 1.0
    x_min: float = -20.0
    x_max: float = 20.0
    n_points: int = 1024
    x_c: float = 0.0
    k0: float = 0.0
    sigma0: float = 1.0
    separation: float = 4.0
    omega: float = 1.0
    barrier_height: float = 1.0
    barrier_width: float = 0.5
    barrier_center: float = 0.0
    n: int = 2000
    base_seed: int = 0
    noise: str = "zero"
    dt_sub: float = 1e-3
    checks: Tuple[str, ...] = ("mean_consistency", "equivariance")
    ck_times: Tuple[float, ...] = (0.0, 1.0, 2.0)
    equivariance_bins: int = 64
    ck_bins: int = 10
    dir: str = "run_output"
    write_every: int = 10
    defaults_applied: Tuple[str, ...] = dataclasses.field(default=(), compare=False)

    @property
    def dt_snapshot(self) -> float:
        return self.dt * self.snapshot_every

    def replace(self, **changes) -> "ScenarioConfig":
        cfg = dataclasses.replace(self, **changes)
        validate(cfg)
        return cfg

    def as_dict(self):
        return {name: getattr(self, name) for name in SCHEMA}


def _convert(name, kind, raw, where):
    text = raw.strip()
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            items = [s.strip() for s in text.split(",") if s.strip()]
            if name == "ck_times":
                return tuple(float(s) for s in items)
            return tuple(items)
        if not text:
            raise ValueError("empty value")
        return text
    except ValueError:
        raise ConfigError(f"{where}: key '{name}' expects {kind.__name__}, got {raw!r}") from None


def _line_of(text, section, key):
    current = _TOP
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return lineno
    return None


def _where(text, section, key):
    line = _line_of(text, section, key)
    label = "(top level)" if section == _TOP else f"[{section}]"
    return f"{label} {key}" + (f" (line {line})" if line else "")


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate configuration text; unset keys take their defaults."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__",
                                       inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    first = next((ln.strip() for ln in text.splitlines()
                  if ln.strip() and not ln.strip().startswith(("#", ";"))), "")
    source = text if first.startswith("[") else f"[{_TOP}]\n" + text
    try:
        parser.read_string(source)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    values = {}
    for section in parser.sections():
        if section == _TOP:
            for key, raw in parser.items(section):
                spec = SCHEMA.get(key)
                where = _where(text, _TOP, key)
                if spec is None:
                    raise ConfigError(f"{where}: unknown key '{key}'")
                if key in values:
                    raise ConfigError(f"{where}: key '{key}' given twice")
                values[key] = _convert(key, spec[1], raw, where)
            continue
        if section not in SECTIONS:
            raise ConfigError(
                f"unknown section [{section}] (line {_section_line(text, section)}); "
                f"expected one of {', '.join(SECTIONS)}"
            )
        for key, raw in parser.items(section):
            spec = SCHEMA.get(key)
            if spec is None or spec[0] != section:
                raise ConfigError(f"{_where(text, section, key)}: unknown key '{key}'")
            if key in values:
                raise ConfigError(f"{_where(text, section, key)}: key '{key}' given twice")
            values[key] = _convert(key, spec[1], raw, _where(text, section, key))
    if "scenario" not in values:
        raise ConfigError("[run] scenario: required key 'scenario' is missing")
    defaults = tuple(k for k in SCHEMA if k not in values)
    cfg = ScenarioConfig(**values, defaults_applied=defaults)
    validate(cfg)
    return cfg


def _section_line(text, section):
    for lineno, line in enumerate(text.splitlines(), 1):
        if line.strip() == f"[{section}]":
            return lineno
    return "?"


def validate(cfg: ScenarioConfig) -> None:
    for name, (section, _, _, rule) in SCHEMA.items():
        if rule is None:
            continue
        pred, desc = rule
        value = getattr(cfg, name)
        if not pred(value):
            raise ConfigError(f"[{section}] {name}: must be {desc}, got {value!r}")
    try:
        build_grid(cfg.x_min, cfg.x_max, cfg.n_points)
    except ValueError as exc:
        raise ConfigError(f"[grid] n_points/x_min/x_max: {exc}") from None
    if cfg.n_points % cfg.equivariance_bins:
        raise ConfigError(
            f"[checks] equivariance_bins: must divide n_points={cfg.n_points}, got {cfg.equivariance_bins}"
        )
    for check in cfg.checks:
        if check not in CHECKS:
            raise ConfigError(f"[checks] checks: unknown check '{check}'; expected any of {', '.join(CHECKS)}")
    if cfg.dt_sub > cfg.dt_snapshot * (1 + 1e-12):
        raise ConfigError(
            f"[ensemble] dt_sub: must not exceed the snapshot spacing {cfg.dt_snapshot}, got {cfg.dt_sub}"
        )
    if len(cfg.ck_times) != 3 or not (cfg.ck_times[0] < cfg.ck_times[1] < cfg.ck_times[2]):
        raise ConfigError(f"[checks] ck_times: must be three increasing times, got {cfg.ck_times}")
    n_steps = int(round(cfg.t_final / cfg.dt))
    if abs(n_steps * cfg.dt - cfg.t_final) > 1e-9 * max(1.0, cfg.t_final):
        raise ConfigError(f"[run] t_final: must be a whole number of dt={cfg.dt} steps, got {cfg.t_final}")
    stride = cfg.snapshot_every * cfg.write_every
    if n_steps % stride:
        raise ConfigError(
            f"[output] write_every: {n_steps} steps must divide into records of "
            f"snapshot_every*write_every={stride} steps"
        )
    if "chapman_kolmogorov" in cfg.checks:
        record_dt = cfg.dt * stride
        for t in cfg.ck_times:
            j = round(t / record_dt)
            if abs(j * record_dt - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= t <= cfg.t_final:
                raise ConfigError(f"[checks] ck_times: {t} is not a recorded time (spacing {record_dt})")


def _format(value):
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ScenarioConfig, include_dir: bool = True) -> str:
    """Full configuration text with every key written out, in schema order.

    ``include_dir=False`` leaves out the output directory, which run artifacts
    do not record so that relocated runs stay byte-identical.
    """
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        for name, (sec, _, _, _) in SCHEMA.items():
            if name == "dir" and not include_dir:
                continue
            if sec == section:
                lines.append(f"{name} = {_format(getattr(cfg, name))}")
        lines.append("")
    return "\n".join(lines)
