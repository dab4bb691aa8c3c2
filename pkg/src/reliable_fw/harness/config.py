"""Experiment specifications: a ``key=value`` file plus command-line overrides."""
import dataclasses
import os
from dataclasses import dataclass, field

from ..oracles import PROBLEMS
from ..solver import RunConfig


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 2)."""


@dataclass
class ExperimentSpec:
    problem: str = "cutting-machine"
    dim: int = 2
    problem_seed: int = 0
    m: int = None
    x0: tuple = None
    config: RunConfig = field(default_factory=RunConfig)
    trials: int = 1
    out: str = "runs"
    plots: bool = False
    workers: int = 1

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; have {list(PROBLEMS)}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            self.config.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def to_text(self):
        """Round-trippable ``key=value`` rendering."""
        lines = []
        for k in ("problem", "dim", "problem_seed", "m", "x0", "trials", "out", "plots", "workers"):
            lines.append(f"{k}={_render(getattr(self, k))}")
        for k, v in self.config.as_dict().items():
            lines.append(f"{k}={_render(v)}")
        return "\n".join(lines) + "\n"


def _render(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(repr(float(u)) for u in v)
    return str(v)


def _point(text):
    if isinstance(text, (tuple, list)):
        return tuple(float(u) for u in text)
    return tuple(float(u) for u in str(text).split(","))


_SPEC_TYPES = {"problem": str, "dim": int, "problem_seed": int, "m": int, "x0": _point, "trials": int,
               "out": str, "plots": bool, "workers": int}
_RUN_TYPES = {"variant": str, "eps": float, "delta": float, "tau": float, "r0": float, "sigma": float,
              "sigma0": float, "seed": int, "scale": float, "horizon": int, "box_half_width": float,
              "strict_vicinity": bool, "zeta_mode": str, "aggregate_above": int, "f_gap0": float,
              "record_measurements": bool, "lmo_shrink": float}
ALIASES = {"problem-seed": "problem_seed", "strict-vicinity": "strict_vicinity",
           "zeta-mode": "zeta_mode", "box-half-width": "box_half_width", "f-gap0": "f_gap0",
           "lmo-shrink": "lmo_shrink"}


def _coerce(key, raw, kind):
    if raw is None:
        return None
    if isinstance(raw, str):
        s = raw.strip()
        if s.lower() in ("none", "null", ""):
            return None
        if kind is bool:
            if s.lower() in ("1", "true", "yes", "on"):
                return True
            if s.lower() in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
        try:
            if kind is int:
                try:
                    return int(s)
                except ValueError:
                    f = float(s)  # accept 1e3
                    if not f.is_integer():
                        raise
                    return int(f)
            return kind(s)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot use {raw!r}") from None


def parse_config_text(text):
    """``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {no}: expected key=value")
        k, v = line.split("=", 1)
        out[ALIASES.get(k.strip(), k.strip())] = v.strip()
    return out


def load_config_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file {path} does not exist")
    with open(path) as fh:
        return parse_config_text(fh.read())


def build_spec(values=None, overrides=None):
    """Merge file values with overrides (``None`` overrides are ignored)."""
    merged = dict(values or {})
    merged.update({ALIASES.get(k, k): v for k, v in (overrides or {}).items() if v is not None})
    spec_kw, run_kw = {}, {}
    for k, v in merged.items():
        if k in _SPEC_TYPES:
            spec_kw[k] = _coerce(k, v, _SPEC_TYPES[k])
        elif k in _RUN_TYPES:
            run_kw[k] = _coerce(k, v, _RUN_TYPES[k])
        else:
            raise ConfigError(f"unknown configuration key {k!r}")
    spec_kw = {k: v for k, v in spec_kw.items() if v is not None or k in ("m", "x0")}
    try:
        run = RunConfig(**{k: v for k, v in run_kw.items()
                           if v is not None or k in ("tau", "horizon", "box_half_width", "f_gap0")})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    spec = ExperimentSpec(config=run, **spec_kw)
    return spec.validate()


def field_names():
    return sorted(set(_SPEC_TYPES) | {f.name for f in dataclasses.fields(RunConfig)})
