"""Experiment config parsing and result emission.

Config files are INI-style with sections ``[system]``, ``[run]``,
``[sweep]`` and ``[fl]``::

    [system]
    n = 100
    m = 90
    k = 79
    lambda = 1
    mu_up = 1
    mu_down = instant
    c = 1

    [run]
    scheme = earliest
    iterations = 100000
    seed = 7

Every emitted JSON file is an envelope ``{"metadata": ..., "payload": ...}``
whose metadata holds the fully resolved config, so it can be replayed.
"""

from __future__ import annotations

import configparser
import csv
import datetime as _dt
import json
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

from . import __version__
from .protocol_sim import RANDOM_K_WAITS, SchemeKind
from .rng import SEED_MAX

OUT_ENV = "TIMELYFL_OUT"


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def parse_int_range(text: str) -> tuple[int, ...]:
    """``"5"``, ``"1..40"`` (inclusive) or ``"20,40,60"``."""
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError
            return tuple(range(lo, hi + 1))
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ValueError(f"bad integer range {text!r}; use N, A..B or A,B,C") from None


def _int(lo: int | None = None) -> Callable[[str], int]:
    def conv(s: str) -> int:
        try:
            v = int(s)
        except ValueError:
            raise ValueError(f"expected an integer, got {s!r}") from None
        if lo is not None and v < lo:
            raise ValueError(f"must be >= {lo}, got {v}")
        return v
    return conv


def _float(positive: bool = False) -> Callable[[str], float]:
    def conv(s: str) -> float:
        try:
            v = float(s)
        except ValueError:
            raise ValueError(f"expected a number, got {s!r}") from None
        if not math.isfinite(v) or v < 0 or (positive and v == 0):
            raise ValueError(f"must be {'> 0' if positive else '>= 0'} and finite, got {s}")
        return v
    return conv


def _rate_or_instant(s: str) -> float | None:
    if s.strip().lower() in ("instant", "instantaneous", "inf"):
        return None
    return _float(positive=True)(s)


def _seed(s: str) -> int:
    v = _int(0)(s)
    if v > SEED_MAX:
        raise ValueError(f"seed must fit in 64 bits, got {v}")
    return v


def _choice(*options: str) -> Callable[[str], str]:
    def conv(s: str) -> str:
        s = s.strip().lower()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return conv


def _scheme(s: str) -> str:
    s = s.strip().lower()
    return "all" if s == "all" else SchemeKind.parse(s).value


def _schemes(s: str) -> tuple[str, ...]:
    return tuple(_scheme(p) for p in s.split(",") if p.strip())


def _k_range(s: str) -> tuple[int, ...] | None:
    return None if s.strip().lower() == "all" else parse_int_range(s)


# section -> file key -> (resolved name, converter)
SCHEMA: dict[str, dict[str, tuple[str, Callable[[str], Any]]]] = {
    "system": {
        "n": ("n", _int(1)),
        "m": ("m", _int(1)),
        "k": ("k", _int(1)),
        "lambda": ("lam", _float(positive=True)),
        "mu_up": ("mu_up", _float(positive=True)),
        "mu_down": ("mu_down", _rate_or_instant),
        "c": ("c", _float()),
    },
    "run": {
        "scheme": ("scheme", _scheme),
        "iterations": ("iterations", _int(1)),
        "warmup": ("warmup", _int(0)),
        "seed": ("seed", _seed),
        "repeats": ("repeats", _int(1)),
        "random_k_wait": ("random_k_wait", _choice(*RANDOM_K_WAITS)),
    },
    "sweep": {
        "figure": ("figure", _choice("fig3", "fig4", "fig5", "fig6")),
        "m": ("sweep_m", parse_int_range),
        "k": ("sweep_k", _k_range),
        "objective": ("objective", _choice("analytic", "simulated")),
        "sim_iterations": ("sim_iterations", _int(2)),
    },
    "fl": {
        "d": ("d", _int(1)),
        "n_clients": ("n_clients", _int(1)),
        "samples_per_client": ("samples_per_client", _int(1)),
        "batch_size": ("batch_size", _int(1)),
        "tau": ("tau", _int(1)),
        "eta": ("eta", _float(positive=True)),
        "iterations": ("fl_iterations", _int(1)),
        "repeats": ("repeats", _int(1)),
        "noise_std": ("noise_std", _float()),
        "test_samples": ("test_samples", _int(1)),
        "k": ("fl_k", parse_int_range),
        "m": ("fl_m", _int(1)),
        "schemes": ("schemes", _schemes),
    },
}


@dataclass
class ExperimentConfig:
    """Parsed config: one dict of resolved names per section."""

    sections: dict[str, dict[str, Any]] = field(default_factory=dict)

    def flat(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for sec in SCHEMA:
            out.update(self.sections.get(sec, {}))
        return out


def _line_of(lines: list[str], section: str | None, key: str | None) -> int | None:
    current = None
    for no, raw in enumerate(lines, 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
            if key is None and current == section:
                return no
            continue
        if current == section and key is not None:
            m = re.match(r"([^=:]+?)\s*[=:]", s)
            if m and m.group(1).strip().lower() == key:
                return no
    return None


def parse_config_text(text: str) -> ExperimentConfig:
    lines = text.splitlines()
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("key outside of any section", e.lineno) from None
    except configparser.Error as e:
        lineno = getattr(e, "lineno", None)
        raise ConfigError(str(e).splitlines()[0], lineno) from None
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", _line_of(lines, section, None))
        resolved = {}
        for key, value in parser.items(section):
            line = _line_of(lines, section, key)
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line)
            name, conv = SCHEMA[section][key]
            try:
                resolved[name] = conv(value)
            except ValueError as e:
                raise ConfigError(f"{section}.{key}: {e}", line) from None
        cfg.sections[section] = resolved
    return cfg


def parse_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config_text(text)


def format_number(x: Any) -> str:
    """Shortest round-trip text for floats; plain text for everything else."""
    if isinstance(x, float):
        return repr(x)
    if hasattr(x, "item"):
        return format_number(x.item())
    return str(x)


def write_csv(path: Path, header: Iterable[str], rows: Iterable[Iterable[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([format_number(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, SchemeKind):
        return obj.value
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1, allow_nan=True)


def make_envelope(command: str, config: dict, payload: Any, runtime: float) -> dict:
    return {
        "metadata": {
            "tool": "timelyfl",
            "version": __version__,
            "command": command,
            "config": _jsonable(config),
            "seed": config.get("seed"),
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "runtime_seconds": runtime,
        },
        "payload": _jsonable(payload),
    }


def write_json(path: Path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n")
    return path


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "."))
