"""Run configuration: known keys, defaults, ``key = value`` files and
construction of validated library objects from raw string values."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .model import AssumptionViolation, ModelParams
from .truncation import PolicyViolation, TruncationPolicy, make_policy

MODEL_KEYS = ("alpha", "mu", "sigma", "gamma", "r", "theta", "tau", "xi0")
POLICY_KEYS = ("envelope", "psi_scale", "psi_exponent", "delta_star", "strict_42")
RUN_KEYS = (
    "initial_file", "delta", "T", "paths", "seed", "scheme", "pool", "deltas", "ref_delta", "mode",
    "refine_factor", "p", "k_levels", "K",
)
ALL_KEYS = MODEL_KEYS + POLICY_KEYS + RUN_KEYS

DEFAULTS = {
    "alpha": "4", "mu": "2", "sigma": "0.5", "gamma": "2", "r": "2/3", "theta": "3/5",
    "tau": "2", "xi0": "0.2",
    "envelope": "default", "strict_42": "true",
    "T": "4", "paths": "1000",
}

# the worked example: model, envelope 6.5 u^2 and psi(delta) = delta^(-2/3)
EXAMPLE_5_3 = {
    "alpha": "4", "mu": "2", "sigma": "0.5", "gamma": "2", "r": "2/3", "theta": "3/5",
    "tau": "2", "xi0": "0.2",
    "envelope": "paper_example", "psi_scale": "1", "psi_exponent": "2/3", "delta_star": "1",
    "strict_42": "false",
}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines.

    Lines may carry a leading ``#`` (so a previous run's output header can be
    fed back in); lines without ``=`` and unknown keys are ignored.
    """
    values = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip().lstrip("#").strip()
            if "=" not in line:
                continue
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key in ALL_KEYS:
                values[key] = val
    return values


def number(cfg: dict, key: str) -> Fraction:
    if cfg.get(key) is None:
        raise ConfigError(key, "missing value")
    try:
        return Fraction(cfg[key])
    except (ValueError, ZeroDivisionError):
        raise ConfigError(key, f"not a number: {cfg[key]!r}") from None


def real(cfg: dict, key: str) -> float:
    return float(number(cfg, key))


def integer(cfg: dict, key: str, minimum: int = 0) -> int:
    v = number(cfg, key)
    if v.denominator != 1 or v < minimum:
        raise ConfigError(key, f"expected an integer >= {minimum}, got {cfg[key]!r}")
    return int(v)


def boolean(cfg: dict, key: str) -> bool:
    v = str(cfg.get(key, "")).lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise ConfigError(key, f"expected true or false, got {cfg.get(key)!r}")


def number_list(cfg: dict, key: str) -> list:
    if not cfg.get(key):
        raise ConfigError(key, "missing value")
    try:
        return [Fraction(item.strip()) for item in cfg[key].split(",") if item.strip()]
    except (ValueError, ZeroDivisionError):
        raise ConfigError(key, f"not a list of numbers: {cfg[key]!r}") from None


def choice(cfg: dict, key: str, options) -> str:
    v = cfg.get(key)
    if v not in options:
        raise ConfigError(key, f"expected one of {', '.join(options)}, got {v!r}")
    return v


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration; ``raw`` keeps every value as given, for echoing."""

    raw: dict
    model: ModelParams
    xi0: float
    policy: TruncationPolicy

    @classmethod
    def from_raw(cls, raw: dict) -> "RunConfig":
        try:
            model = ModelParams(**{k: real(raw, k) for k in MODEL_KEYS if k != "xi0"})
        except AssumptionViolation as exc:
            raise ConfigError(exc.parameter or "model", str(exc)) from None
        xi0 = real(raw, "xi0")
        if not xi0 > 0:
            raise ConfigError("xi0", "initial value must be > 0")
        kw = {"envelope": choice(raw, "envelope", ("default", "paper_example"))}
        for key in ("psi_scale", "psi_exponent", "delta_star"):
            if raw.get(key) is not None:
                kw[key] = real(raw, key)
        try:
            policy = make_policy(model, strict_42=boolean(raw, "strict_42"), **kw)
        except PolicyViolation as exc:
            raise ConfigError("strict_42", str(exc)) from None
        return cls(dict(raw), model, xi0, policy)

    def echo(self) -> list:
        return [f"{k} = {self.raw[k]}" for k in ALL_KEYS if self.raw.get(k) is not None]
