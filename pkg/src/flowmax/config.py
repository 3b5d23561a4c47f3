"""Flat key=value experiment configuration: parsing, validation, defaults."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace

from .dynamics import FlowSpec
from .errors import ConfigError, FlowmaxError
from .lattice import LatticeFrame
from .observables import BasePoint, ObservableKind, ObservableTag

EXPERIMENTS = ("tail", "evd", "kth", "returns", "excursion", "check-conditions")
OBSERVABLE_NAMES = ("delta", "excursion", "neglog")

# Tail exponent of each observable's limit law; overridable via the v key.
DEFAULT_V = {"delta": 2.0, "excursion": math.sqrt(2.0), "neglog": 3.0}

_MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "evd"
    dim: int = 2
    flow: tuple = (0.5, -0.5)
    observable: str | None = None
    m0: float = 1.0
    q: float = 1.3
    n: int = 14
    k: int = 1
    v: float | None = None
    samples: int = 100_000
    seed: int = 0
    base_point: str | None = None
    out: str | None = None

    def resolved_observable(self) -> str:
        if self.observable is not None:
            return self.observable
        if self.experiment == "returns":
            return "neglog"
        if self.experiment == "excursion":
            return "excursion"
        return "delta"

    def resolved_v(self) -> float:
        if self.v is not None:
            return self.v
        return DEFAULT_V[self.resolved_observable()]

    def flow_spec(self) -> FlowSpec:
        try:
            return FlowSpec(exponents=tuple(self.flow))
        except FlowmaxError as exc:
            raise ConfigError(f"flow: {exc}") from exc

    def observable_kind(self) -> ObservableKind:
        obs = self.resolved_observable()
        if obs == "delta":
            return ObservableKind(tag=ObservableTag.SHORTEST_VECTOR)
        tag = (
            ObservableTag.EXCURSION_DISTANCE
            if obs == "excursion"
            else ObservableTag.NEG_LOG_RETURN
        )
        if self.base_point is None:
            return ObservableKind(tag=tag)
        try:
            with open(self.base_point, encoding="utf-8") as fh:
                payload = json.load(fh)
            frame = LatticeFrame.from_json_dict(payload)
        except (OSError, ValueError, KeyError, FlowmaxError) as exc:
            raise ConfigError(f"base_point: cannot load '{self.base_point}': {exc}")
        return ObservableKind(tag=tag, base=BasePoint(frame0=frame))

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"experiment: '{self.experiment}' not one of {EXPERIMENTS}"
            )
        if self.dim != 2:
            raise ConfigError("dim: only dim = 2 is supported")
        if len(self.flow) != self.dim:
            raise ConfigError(
                f"flow: needs {self.dim} exponents, got {len(self.flow)}"
            )
        self.flow_spec()
        obs = self.resolved_observable()
        if obs not in OBSERVABLE_NAMES:
            raise ConfigError(
                f"observable: '{obs}' not one of {OBSERVABLE_NAMES}"
            )
        if self.experiment == "returns" and obs != "neglog":
            raise ConfigError("observable: experiment 'returns' studies neglog")
        if self.experiment == "excursion" and obs != "excursion":
            raise ConfigError("observable: experiment 'excursion' studies excursion")
        if self.experiment in ("tail", "evd", "kth") and obs != "delta":
            raise ConfigError(
                f"observable: experiment '{self.experiment}' studies delta; "
                "use the returns/excursion experiments for distance observables"
            )
        if obs == "delta" and self.base_point is not None:
            raise ConfigError("base_point: the delta observable keeps no base point")
        if not (self.m0 > 0 and math.isfinite(self.m0)):
            raise ConfigError(f"m0: must be positive, got {self.m0}")
        if not (self.q > 1 and math.isfinite(self.q)):
            raise ConfigError(f"q: must exceed 1, got {self.q}")
        if self.n < 1:
            raise ConfigError(f"n: must be >= 1, got {self.n}")
        if self.k < 1:
            raise ConfigError(f"k: must be >= 1, got {self.k}")
        if self.k > self.n + 1:
            raise ConfigError(
                f"k: must be <= N = n+1 = {self.n + 1}, got {self.k}"
            )
        if self.experiment == "evd" and self.k != 1:
            raise ConfigError("k: experiment 'evd' studies the maximum (k = 1); "
                              "use experiment 'kth' for k >= 2")
        if self.experiment == "kth" and self.k < 2:
            raise ConfigError("k: experiment 'kth' needs k >= 2")
        if self.v is not None and not (self.v > 0 and math.isfinite(self.v)):
            raise ConfigError(f"v: must be positive, got {self.v}")
        if self.samples < 100:
            raise ConfigError(f"samples: must be >= 100, got {self.samples}")
        if not 0 <= self.seed <= _MAX_SEED:
            raise ConfigError("seed: must fit in an unsigned 64-bit integer")


def _parse_flow(text: str) -> tuple:
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"flow: cannot parse '{text}' as comma-separated reals")


def _parse_int(key):
    def parse(text):
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse '{text}' as an integer")

    return parse


def _parse_float(key):
    def parse(text):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse '{text}' as a real")

    return parse


_PARSERS = {
    "experiment": str,
    "dim": _parse_int("dim"),
    "flow": _parse_flow,
    "observable": str,
    "m0": _parse_float("m0"),
    "q": _parse_float("q"),
    "n": _parse_int("n"),
    "k": _parse_int("k"),
    "v": _parse_float("v"),
    "samples": _parse_int("samples"),
    "seed": _parse_int("seed"),
    "base_point": str,
    "out": str,
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key = value format ('#' starts a comment)."""
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        key = key.strip()
        val = val.strip()
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        seen[key] = _PARSERS[key](val)
    return ExperimentConfig(**seen)


def serialize_config(config: ExperimentConfig) -> str:
    """Inverse of parse_config; omits unset optional keys."""
    lines = []
    for field in fields(ExperimentConfig):
        value = getattr(config, field.name)
        if value is None:
            continue
        if field.name == "flow":
            rendered = ",".join(repr(float(x)) for x in value)
        else:
            rendered = str(value)
        lines.append(f"{field.name} = {rendered}")
    return "\n".join(lines) + "\n"


def load_config(path: str, overrides: dict | None = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            config = parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc}")
    if overrides:
        config = replace(config, **overrides)
    return config
