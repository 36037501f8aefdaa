"""Run configuration: an INI file with one section per component.

Every key is optional; an empty file yields the reference setup.  Example::

    [mppi]
    K = 1024
    sigma = 2.5, 5e-5, 5e-5, 5e-5

    [scenario]
    kind = 3d
    obs = poc
    goals = 23, 38, 1.5; 40, 23, 4

Any key can also be set through the environment as
``MPPI_NAV__<SECTION>__<KEY>=value`` (case insensitive), which wins over the
file.
"""

import configparser
from dataclasses import dataclass, field, fields, replace
import os

from .cost import CostParams
from .dynamics import VehicleParams
from .mppi import MppiConfig
from .sim import ScenarioConfig, SensorNoise, WindParams

ENV_PREFIX = "MPPI_NAV__"


class ConfigError(ValueError):
    """Parse or validation failure; ``problems`` lists every issue found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


@dataclass(frozen=True)
class RunSettings:
    trials: int = 5
    workers: int = 0  # 0 = leave the backend default

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self):
        out = []
        if self.trials < 1:
            out.append(f"trials must be >= 1 (got {self.trials})")
        if self.workers < 0:
            out.append("workers must be >= 0")
        return out


@dataclass(frozen=True)
class Config:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    mppi: MppiConfig = field(default_factory=MppiConfig)
    cost: CostParams = field(default_factory=CostParams)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    run: RunSettings = field(default_factory=RunSettings)


# section name -> (class, path inside Config)
SECTIONS = {
    "scenario": (ScenarioConfig, ("scenario",)),
    "wind": (WindParams, ("scenario", "wind")),
    "sensor": (SensorNoise, ("scenario", "sensor")),
    "mppi": (MppiConfig, ("mppi",)),
    "cost": (CostParams, ("cost",)),
    "vehicle": (VehicleParams, ("vehicle",)),
    "run": (RunSettings, ("run",)),
}

_NESTED = {"wind", "sensor"}


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_value(name, default, annotation, text):
    text = text.strip()
    if text.lower() in ("none", "") and (default is None or name in ("q_diag", "omega_max")):
        return None
    if name == "goals":
        return tuple(tuple(float(c) for c in part.split(",")) for part in text.split(";") if part.strip())
    if annotation is bool or isinstance(default, bool):
        return _parse_bool(text)
    if annotation is int or (isinstance(default, int) and not isinstance(default, bool)):
        return int(text)
    if annotation is tuple or isinstance(default, tuple):
        return tuple(float(v) for v in text.split(",") if v.strip())
    if annotation is float or isinstance(default, float):
        return float(text)
    return text


def _format_value(name, value):
    if value is None:
        return "none"
    if name == "goals":
        return "; ".join(", ".join(repr(float(c)) for c in g) for g in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _key_lines(text):
    """(section, key) -> line number, for diagnostics."""
    lines = {}
    section = None
    for n, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip().lower()
        elif section and s and s[0] not in "#;" and ("=" in s or ":" in s):
            key = s.replace(":", "=", 1).split("=", 1)[0].strip().lower()
            lines[(section, key)] = n
    return lines


def _field_map(cls):
    return {f.name.lower(): f for f in fields(cls)}


def _env_overrides(environ):
    out = {}
    for k, v in environ.items():
        if not k.upper().startswith(ENV_PREFIX):
            continue
        rest = k[len(ENV_PREFIX):].split("__")
        if len(rest) == 2:
            out[(rest[0].lower(), rest[1].lower())] = v
    return out


def loads(text, environ=None, source="<string>"):
    """Parse and validate config text; raises ConfigError listing all problems."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str.lower
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"{source}: {exc}"]) from None
    lines = _key_lines(text)
    raw = {}
    for section in parser.sections():
        for key, val in parser.items(section):
            raw[(section.lower(), key)] = (val, f"{source}:{lines.get((section.lower(), key), '?')}")
    for key, val in _env_overrides(os.environ if environ is None else environ).items():
        raw[key] = (val, f"env {ENV_PREFIX}{key[0].upper()}__{key[1].upper()}")

    problems = []
    values = {name: {} for name in SECTIONS}
    for (section, key), (val, where) in sorted(raw.items()):
        if section not in SECTIONS:
            problems.append(f"{where}: unknown section [{section}]")
            continue
        cls = SECTIONS[section][0]
        fmap = _field_map(cls)
        if key not in fmap or key in _NESTED:
            problems.append(f"{where}: unknown key '{key}' in [{section}]")
            continue
        f = fmap[key]
        default = f.default if f.default is not f.default_factory else None
        try:
            values[section][f.name] = _parse_value(f.name, default, f.type, val)
        except ValueError as exc:
            problems.append(f"{where}: [{section}] {key}: {exc}")
    if problems:
        raise ConfigError(problems)
    return _build(values)


def _build(values):
    problems = []
    built = {}
    for name in ("wind", "sensor", "mppi", "cost", "vehicle", "run"):
        cls = SECTIONS[name][0]
        try:
            obj = cls(**values[name])
        except (TypeError, ValueError) as exc:
            problems.extend(f"[{name}] {p}" for p in str(exc).split("; "))
            continue
        built[name] = obj
    try:
        scen = ScenarioConfig(**values["scenario"],
                              **{k: built[k] for k in ("wind", "sensor") if k in built})
    except (TypeError, ValueError) as exc:
        problems.extend(f"[scenario] {p}" for p in str(exc).split("; "))
        scen = None
    if problems:
        raise ConfigError(problems)
    return Config(scen, built["mppi"], built["cost"], built["vehicle"], built["run"])


def load(path, environ=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror or exc}"]) from None
    return loads(text, environ, source=str(path))


def dumps(cfg):
    """Full text form of ``cfg``; parsing it returns an equal Config."""
    out = []
    for section, (cls, path) in SECTIONS.items():
        obj = cfg
        for p in path:
            obj = getattr(obj, p)
        out.append(f"[{section}]")
        for f in fields(cls):
            if f.name in _NESTED:
                continue
            out.append(f"{f.name} = {_format_value(f.name, getattr(obj, f.name))}")
        out.append("")
    return "\n".join(out)


def save(cfg, path):
    with open(path, "w") as fh:
        fh.write(dumps(cfg))


def override(cfg, scenario=None, obs=None, seed=None, trials=None):
    """Apply command-line overrides."""
    scen = cfg.scenario
    kw = {}
    if scenario is not None:
        kw["kind"] = scenario
    if obs is not None:
        kw["obs"] = obs
    if seed is not None:
        kw["seed"] = int(seed)
    try:
        if kw:
            scen = replace(scen, **kw)
        run = cfg.run if trials is None else replace(cfg.run, trials=int(trials))
    except ValueError as exc:
        raise ConfigError(str(exc).split("; ")) from None
    return replace(cfg, scenario=scen, run=run)
