"""Run configuration: a flat key-value text format with a fixed schema.

Every knob has a default tuned for the desk-scale brick morph, so an
empty file is a valid configuration.  Unknown keys, duplicate keys, and
malformed values fail fast with the offending line number.  Round trips
are lossless: parse(render(cfg)) == cfg, with floats printed via repr.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace

from .errors import ConfigError

_AUTO = "auto"


def _parse_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError("expected a number, got %r" % text) from None
    if math.isnan(value):
        raise ConfigError("NaN is not a valid value")
    return value


def _parse_int(text: str) -> int:
    try:
        return int(text, 10)
    except ValueError:
        raise ConfigError("expected an integer, got %r" % text) from None


def _parse_triple(parse_one):
    def run(text: str):
        parts = text.split()
        if len(parts) != 3:
            raise ConfigError("expected three whitespace-separated values, got %r" % text)
        return tuple(parse_one(p) for p in parts)

    return run


def _parse_count_or_auto(text: str):
    if text == _AUTO:
        return _AUTO
    return _parse_int(text)


def _parse_choice(options):
    def run(text: str):
        if text not in options:
            raise ConfigError("expected one of %s, got %r" % ("|".join(options), text))
        return text

    return run


def _render_float(value: float) -> str:
    return repr(float(value))


def _render_triple(render_one):
    return lambda triple: " ".join(render_one(v) for v in triple)


# key -> (parser, renderer, default)
_SCHEMA = {
    "dims0": (_parse_triple(_parse_float), _render_triple(_render_float),
              (1.0, 1.1, 1.2)),
    "dims1": (_parse_triple(_parse_float), _render_triple(_render_float),
              (1.0, 1.1, 0.6)),
    "resolution": (_parse_triple(_parse_int), _render_triple(str), (6, 6, 6)),
    "K": (_parse_int, str, 5),
    "N_POD": (_parse_int, str, 20),
    "N_train": (_parse_int, str, 50),
    "N_init": (_parse_count_or_auto, str, _AUTO),
    "N_max": (_parse_int, str, 60),
    "tol": (_parse_float, _render_float, 1e-6),
    "shift_fraction": (_parse_float, _render_float, 0.9),
    "cut_fraction": (_parse_float, _render_float, 0.1),
    "gauge_mode": (_parse_choice(("classical", "mixed")), str, "mixed"),
    "threshold": (_parse_float, _render_float, 0.9),
    "initial_steps": (_parse_int, str, 16),
    "max_depth": (_parse_int, str, 10),
    "track_buffer": (_parse_int, str, 2),
    "matching": (_parse_choice(("greedy", "hungarian")), str, "greedy"),
    "eval_set_size": (_parse_int, str, 50),
    "seed": (_parse_int, str, 1234),
    "output": (str, str, "out"),
}

@dataclass(frozen=True)
class RunConfig:
    """All experiment knobs; see _SCHEMA for the file keys and defaults."""

    dims0: tuple = _SCHEMA["dims0"][2]
    dims1: tuple = _SCHEMA["dims1"][2]
    resolution: tuple = _SCHEMA["resolution"][2]
    K: int = _SCHEMA["K"][2]
    N_POD: int = _SCHEMA["N_POD"][2]
    N_train: int = _SCHEMA["N_train"][2]
    N_init: object = _SCHEMA["N_init"][2]
    N_max: int = _SCHEMA["N_max"][2]
    tol: float = _SCHEMA["tol"][2]
    shift_fraction: float = _SCHEMA["shift_fraction"][2]
    cut_fraction: float = _SCHEMA["cut_fraction"][2]
    gauge_mode: str = _SCHEMA["gauge_mode"][2]
    threshold: float = _SCHEMA["threshold"][2]
    initial_steps: int = _SCHEMA["initial_steps"][2]
    max_depth: int = _SCHEMA["max_depth"][2]
    track_buffer: int = _SCHEMA["track_buffer"][2]
    matching: str = _SCHEMA["matching"][2]
    eval_set_size: int = _SCHEMA["eval_set_size"][2]
    seed: int = _SCHEMA["seed"][2]
    output: str = _SCHEMA["output"][2]

    def validate(self) -> "RunConfig":
        for name in ("dims0", "dims1"):
            if any(d <= 0.0 for d in getattr(self, name)):
                raise ConfigError("%s must be positive lengths" % name)
        if any(r < 2 for r in self.resolution):
            raise ConfigError("resolution must be at least 2 cells per axis")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        for name in ("N_POD", "N_train", "N_max"):
            if getattr(self, name) < 1:
                raise ConfigError("%s must be >= 1" % name)
        if self.N_init != _AUTO:
            if self.N_init < 1:
                raise ConfigError("N_init must be >= 1 or auto")
            if self.N_init > self.N_POD * self.K:
                raise ConfigError(
                    "N_init=%d exceeds the snapshot count N_POD*K=%d"
                    % (self.N_init, self.N_POD * self.K)
                )
            if self.N_init > self.N_max:
                raise ConfigError(
                    "N_init=%d exceeds N_max=%d" % (self.N_init, self.N_max)
                )
        if not (0.0 < self.tol):
            raise ConfigError("tol must be positive (inf disables enrichment)")
        if not (0.0 < self.shift_fraction < 1.0):
            raise ConfigError("shift_fraction must lie in (0, 1)")
        if not (0.0 < self.cut_fraction < 1.0):
            raise ConfigError("cut_fraction must lie in (0, 1)")
        if not (0.0 <= self.threshold < 1.0):
            raise ConfigError("threshold must lie in [0, 1)")
        if self.initial_steps < 2:
            raise ConfigError("initial_steps must be >= 2")
        if self.max_depth < 0:
            raise ConfigError("max_depth must be >= 0")
        if self.track_buffer < 0:
            raise ConfigError("track_buffer must be >= 0")
        if self.eval_set_size < 1:
            raise ConfigError("eval_set_size must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if not self.output:
            raise ConfigError("output directory must be non-empty")
        return self


def default_config() -> RunConfig:
    return RunConfig().validate()


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    """Parse flat key = value lines; '#' starts a comment."""
    values = {}
    seen_lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                "%s:%d: expected 'key = value', got %r" % (source, lineno, raw.strip())
            )
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigError("%s:%d: unknown key %r" % (source, lineno, key))
        if key in values:
            raise ConfigError(
                "%s:%d: duplicate key %r (first set on line %d)"
                % (source, lineno, key, seen_lines[key])
            )
        parser = _SCHEMA[key][0]
        try:
            values[key] = parser(value)
        except ConfigError as exc:
            raise ConfigError("%s:%d: key %r: %s" % (source, lineno, key, exc)) from None
        seen_lines[key] = lineno
    try:
        return RunConfig(**values).validate()
    except ConfigError as exc:
        raise ConfigError("%s: %s" % (source, exc)) from None


def load_config(path) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError("config file not found: %s" % path)
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config_text(handle.read(), source=str(path))


def render_config(cfg: RunConfig) -> str:
    """Canonical text for cfg; parse_config_text inverts this losslessly."""
    lines = []
    for key, (_, render, _) in _SCHEMA.items():
        lines.append("%s = %s" % (key, render(getattr(cfg, key))))
    return "\n".join(lines) + "\n"


def config_to_dict(cfg: RunConfig) -> dict:
    """JSON-ready echo of the configuration (schema order, plain types)."""
    out = {}
    for key in _SCHEMA:
        value = getattr(cfg, key)
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


def with_overrides(cfg: RunConfig, **updates) -> RunConfig:
    """Replace fields (CLI flags over file values) and re-validate."""
    known = {f.name for f in fields(RunConfig)}
    for name in updates:
        if name not in known:
            raise ConfigError("unknown configuration field %r" % name)
    return replace(cfg, **updates).validate()
