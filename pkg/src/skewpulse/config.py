"""Run configuration: a JSON document with fixed sections and documented defaults."""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path

from .model import SkewGradientModel, build_fhn, build_polynomial, build_scalar_bistable


class ConfigError(ValueError):
    """Malformed or unknown configuration entry; the message carries path and line."""


DEFAULTS = {
    "model": {"kind": "scalar", "params": {}},
    "pulse": {"half_width": None, "tol": 1e-10, "spacing": 0.01, "seed": None},
    "index": {
        "lambda_max": None,
        "lambda_samples": 41,
        "t_cap": None,
        "tol": 1e-6,
        "max_step": None,
        "cross_check_tol": 0,
    },
    "spectrum": {"N": 2000, "X": None, "order": 4, "rel_tol": 1e-6},
    "evolve": {"dt": 0.01, "t_final": 10.0, "amplitude": 1e-4, "seed": 0, "snapshots": 200},
}

HELP = {
    "model.kind": "fhn | scalar | polynomial",
    "model.params": "fhn: d, tau, gamma, beta; polynomial: n, j, m, d, terms; scalar: none",
    "pulse.half_width": "truncation half-width X (default 25 / slowest decay rate)",
    "pulse.tol": "Newton residual tolerance",
    "pulse.spacing": "grid spacing",
    "pulse.seed": "CSV profile used as the initial guess (relative to the config file)",
    "index.lambda_max": "upper end of the lambda scan (default lambda_hat)",
    "index.lambda_samples": "uniform lambda samples (a geometric refinement near 0 is added)",
    "index.t_cap": "end of the tau scan (default min(0.9 X, pulse edge + 14 / spectral gap))",
    "index.tol": "intersection tolerance on principal-angle sines",
    "index.max_step": "frame integrator step (default from the spectral radius)",
    "index.cross_check_tol": "allowed |i_w0 - sf| before the cross-check fails",
    "spectrum.N": "finite-difference intervals on [-X, X]",
    "spectrum.X": "half-width for the operator grid (default: profile half-width)",
    "spectrum.order": "2 or 4",
    "spectrum.rel_tol": "relative tolerance for eigenvalue classification",
    "evolve.dt": "time step",
    "evolve.t_final": "final time",
    "evolve.amplitude": "sup norm of the smooth random perturbation",
    "evolve.seed": "rng seed for the perturbation",
    "evolve.snapshots": "number of stored snapshots",
}

_MODEL_PARAMS = {
    "fhn": {"d", "tau", "gamma", "beta"},
    "scalar": set(),
    "polynomial": {"n", "j", "m", "d", "terms"},
}


def _line_of(text: str, key: str, start: int = 0) -> int:
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text[start:])
    if m is None:
        return 0
    return text.count("\n", 0, start + m.start()) + 1


@dataclass
class RunConfig:
    data: dict
    source: str = "<dict>"
    text: str = ""

    def __getitem__(self, section):
        return self.data[section]

    @property
    def sha256(self) -> str:
        canon = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def base_dir(self) -> Path:
        return Path(self.source).parent if self.source != "<dict>" else Path.cwd()

    def build_model(self, strict: bool = True) -> SkewGradientModel:
        kind = self.data["model"]["kind"]
        params = self.data["model"]["params"]
        if kind == "fhn":
            return build_fhn(strict=strict, **params)
        if kind == "scalar":
            return build_scalar_bistable()
        return build_polynomial(**params)


def _merge(defaults: dict, given: dict, text: str, path: str, source: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"{source}:{_line_of(text, key)}: unknown key '{where}'")
        if isinstance(defaults[key], dict) and key != "params":
            if not isinstance(value, dict):
                raise ConfigError(f"{source}:{_line_of(text, key)}: '{where}' must be an object")
            out[key] = _merge(defaults[key], value, text, where, source)
        else:
            out[key] = value
    return out


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Parse and validate a configuration document."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}:1: top level must be an object")
    data = _merge(DEFAULTS, raw, text, "", source)
    kind = data["model"]["kind"]
    if kind not in _MODEL_PARAMS:
        raise ConfigError(f"{source}:{_line_of(text, 'kind')}: model.kind must be one of {sorted(_MODEL_PARAMS)}")
    params = data["model"]["params"]
    if not isinstance(params, dict):
        raise ConfigError(f"{source}:{_line_of(text, 'params')}: 'model.params' must be an object")
    for key in params:
        if key not in _MODEL_PARAMS[kind]:
            raise ConfigError(f"{source}:{_line_of(text, key)}: unknown key 'model.params.{key}' for kind {kind}")
    missing = _MODEL_PARAMS[kind] - set(params)
    if missing:
        raise ConfigError(f"{source}:{_line_of(text, 'params')}: model.params missing {sorted(missing)}")
    return RunConfig(data, source, text)


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), str(path))


def help_text() -> str:
    lines = ["configuration keys (JSON; defaults in brackets):"]
    for section, keys in DEFAULTS.items():
        for key, value in keys.items():
            name = f"{section}.{key}"
            lines.append(f"  {name:24s} {HELP.get(name, '')} [{json.dumps(value)}]")
    return "\n".join(lines)
