"""Flat ``section.key = value`` experiment configuration.

One file holds the whole provenance of a run::

    # comments and blank lines are ignored
    model.kappa = 8.5
    model.mn_position = 0.3, 0.3, 0.13
    protocol.tau_ps = 23.5
    sweep.points = 26
    quapi.dt_ps = 0.75

Values are parsed as bool, int, float, a comma separated tuple of numbers
or a bare string. Unknown sections or keys raise ``ConfigError``.
"""

from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError, ParameterError
from .model import ModelParams

SECTIONS = {
    "model": None,  # filled from ModelParams fields below
    "protocol": {
        "tau_ps": 23.5,
        "initial_photons": 1,
        "shape": "rect",
        "t_on_ps": None,
        "alpha_per_ps": 10.0,
        "theta_pi": 33.77,
        "fwhm_ps": 7.14,
        "t0_ps": 15.01,
        "losses": True,
        "phonons": False,
        "n_max": None,
        "horizon_ps": None,
        "sample_dt_ps": 0.02,
    },
    "sweep": {
        "tau_min_ns": 0.0,
        "tau_max_ns": 100.0,
        "points": 26,
    },
    "quapi": {
        "dt_ps": 0.75,
        "n_mem": 5,
        "fold_tail": True,
        "compensate_polaron_shift": True,
        "max_adm_entries": 12_000_000,
    },
    "optimize": {
        "theta_pi": (30.0, 33.77, 37.5),
        "fwhm_ps": (5.0, 7.14, 9.0),
        "t0_ps": (12.0, 15.01, 18.0),
        "refine": True,
    },
    "fit": {
        "tau_min_ns": None,
        "column": "c1po",
    },
    "output": {
        "dir": "out",
        "plot": False,
    },
    "run": {
        "workers": 1,
    },
}

_MODEL_DEFAULTS = {f.name: f.default for f in fields(ModelParams)}
SECTIONS["model"] = _MODEL_DEFAULTS


def parse_value(text):
    s = text.strip()
    low = s.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null", ""):
        return None
    if "," in s:
        parts = [p for p in s.strip("()[] ").split(",") if p.strip()]
        try:
            return tuple(float(p) for p in parts)
        except ValueError:
            raise ConfigError(f"tuple values must be numbers: {text!r}") from None
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def _coerce(key, value, default):
    if value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} expects true/false, got {value!r}")
        return value
    if isinstance(default, tuple):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return (float(value),)
        if not isinstance(value, tuple):
            raise ConfigError(f"{key} expects a comma separated list, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        return value
    if isinstance(default, float) or default is None:
        if isinstance(value, bool):
            raise ConfigError(f"{key} expects a number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        if default is None and isinstance(value, str):
            raise ConfigError(f"{key} expects a number, got {value!r}")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            return str(value)
        return value
    return value


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    @classmethod
    def defaults(cls):
        return cls({f"{s}.{k}": v for s, keys in SECTIONS.items() for k, v in keys.items()})

    def get(self, key):
        return self.values[key]

    def section(self, name):
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def set(self, key, value):
        if "." not in key:
            raise ConfigError(f"config key {key!r} needs a section prefix (e.g. model.kappa)")
        section, name = key.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r} in {key!r}; known: {', '.join(SECTIONS)}")
        if name not in SECTIONS[section]:
            known = ", ".join(sorted(SECTIONS[section]))
            raise ConfigError(f"unknown config key {key!r}; keys in [{section}]: {known}")
        parsed = parse_value(value) if isinstance(value, str) else value
        self.values[key] = _coerce(key, parsed, SECTIONS[section][name])
        return self

    def update(self, pairs):
        for key, value in pairs:
            self.set(key, value)
        return self

    def model_params(self):
        kw = self.section("model")
        try:
            return ModelParams(**kw)
        except (TypeError, ParameterError) as exc:
            raise ConfigError(f"invalid model parameters: {exc}") from exc

    def with_(self, **changes):
        out = replace(self, values=dict(self.values))
        for k, v in changes.items():
            out.set(k.replace("__", "."), v)
        return out


def parse_lines(lines, source="<config>"):
    pairs = []
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{no}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def parse_assignment(text):
    if "=" not in text:
        raise ConfigError(f"--set expects KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def load_config(path=None, overrides=()):
    """Defaults, then the file at ``path``, then ``overrides`` (KEY=VALUE strings)."""
    cfg = ExperimentConfig.defaults()
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read().splitlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        cfg.update(parse_lines(text, str(path)))
    cfg.update(parse_assignment(o) for o in overrides)
    cfg.model_params()
    return cfg
