"""Experiment configuration: a strict INI schema with line-level diagnostics.

Every key has a type and a default; unknown sections or keys are errors.
Grid and source indices in files are 1-based. ``dump_config`` writes every
key explicitly, and loading its output gives back an equal configuration.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from dircarto.array import ArrayConfig
from dircarto.errors import ConfigError
from dircarto.rxsim import NoiseModel
from dircarto.sparse import SolverConfig
from dircarto.tracker import ConnectivityGraph, TrackerConfig


# parsers take the raw string and return a value or raise ValueError
def _int(text):
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _float(text):
    v = float(text)
    if math.isnan(v):
        raise ValueError("NaN is not allowed")
    return v


def _opt_float(text):
    return None if text == "" else _float(text)


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _opt_int(text):
    return None if text == "" else _int(text)


def _int_list(text):
    return tuple(_int(p) for p in re.split(r"[,\s]+", text.strip()) if p)


def _positions(text):
    """``x y; x y; ...`` in meters."""
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(f"expected 'x y', got {chunk!r}")
        out.append((_float(parts[0]), _float(parts[1])))
    return tuple(out)


def _seeds(text):
    text = text.strip()
    m = re.fullmatch(r"(\d+)\s*:\s*(\d+)", text)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if hi <= lo:
            raise ValueError(f"empty seed range {text!r}")
        return tuple(range(lo, hi))
    seeds = _int_list(text)
    if not seeds:
        raise ValueError("need at least one seed")
    if any(s < 0 for s in seeds):
        raise ValueError("seeds must be non-negative")
    return seeds


def _str_list(text):
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return "; ".join(f"{_fmt(a)} {_fmt(b)}" for a, b in v)
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _fmt_seeds(v):
    if len(v) > 2 and v == tuple(range(v[0], v[-1] + 1)):
        return f"{v[0]}:{v[-1] + 1}"
    return ", ".join(str(s) for s in v)


@dataclass(frozen=True)
class Field:
    parse: callable
    default: object
    check: callable = None  # value -> error message or None
    fmt: callable = _fmt
    doc: str = ""


def _positive(v):
    return None if v > 0 else "must be positive"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _at_least(n):
    return lambda v: None if v >= n else f"must be >= {n}"


def _one_of(*choices):
    return lambda v: None if v in choices else f"must be one of {', '.join(choices)}"


def _check_snr(v):
    if v is None or not math.isnan(v):
        return None
    return "must be a number or inf"


SCHEMA = {
    "scenario": {
        "width": Field(_float, 100.0, _positive, doc="area width (m)"),
        "height": Field(_float, 100.0, _positive, doc="area height (m)"),
        "rows": Field(_int, 10, _at_least(1), doc="grid rows"),
        "cols": Field(_int, 10, _at_least(1), doc="grid columns"),
        "sensors": Field(_int, 10, _at_least(1), doc="random sensors (ignored when positions are given)"),
        "positions": Field(_positions, (), doc="explicit sensor positions, 'x y; x y; ...'"),
        "broadside_deg": Field(_float, 90.0, doc="array broadside for every sensor (degrees from +x)"),
        "min_separation": Field(_float, 0.0, _nonneg, doc="minimum sensor to grid point distance (m)"),
        "sources": Field(_int, 8, _nonneg, doc="random emitters (ignored when source_indices are given)"),
        "source_indices": Field(_int_list, (), doc="explicit 1-based emitter grid indices"),
        "source_power": Field(_float, 1.0, _nonneg, doc="power of every emitter"),
        "slots": Field(_int, 50, _at_least(1), doc="time slots T"),
        "move_every": Field(_int, 0, _nonneg, doc="one emitter relocates every this many slots (0: static)"),
        "layout_seed": Field(_opt_int, None, lambda v: None if v is None or v >= 0 else "must be >= 0",
                             doc="fixes the geometry across trials (empty: follow the trial seed)"),
    },
    "array": {
        "elements": Field(_int, 8, _at_least(1), doc="ULA elements M"),
        "spacing": Field(_float, 0.5, _positive, doc="element spacing d (m)"),
        "wavelength": Field(_float, 1.0, _positive, doc="carrier wavelength (m)"),
        "path_loss": Field(_float, 2.0, _positive, doc="amplitude path-loss exponent"),
        "gain": Field(_float, 1.0, _positive, doc="beam energy ||w||^2"),
    },
    "noise": {
        "deterministic": Field(_bool, False, doc="use the expected RSS instead of sampling it"),
        "snapshots": Field(_int, 100, _at_least(1), doc="samples averaged per RSS"),
        "symbols": Field(str, "gaussian", _one_of("gaussian", "constant"), doc="source symbol law"),
        "sigma2": Field(_float, 0.0, _nonneg, doc="per-element noise variance"),
        "snr_db": Field(_opt_float, None, _check_snr, doc="sets sigma2 from the initial-beam SNR (empty: use sigma2)"),
    },
    "solver": {
        "lam": Field(_opt_float, None, lambda v: None if v is None or v >= 0 else "must be >= 0",
                     doc="fixed l1 weight (empty: lam_rule)"),
        "lam_rule": Field(str, "noise", _one_of("noise", "ratio")),
        "lam_ratio": Field(_float, 0.01, _nonneg),
        "noise_scale": Field(_float, 1.0, _nonneg),
        "alpha": Field(_float, 1.0, _nonneg, doc="consensus weight (distributed mode)"),
        "kappa": Field(str, "median", _one_of("median", "spectral")),
        "max_iters": Field(_int, 20000, _at_least(1)),
        "tol": Field(_float, 1e-9, _positive),
        "nonneg": Field(_bool, True),
        "accelerate": Field(_bool, True),
        "polish_every": Field(_int, 25, _nonneg),
        "weighting": Field(str, "column", _one_of("column", "uniform")),
        "rows": Field(str, "auto", _one_of("auto", "inverse", "uniform")),
    },
    "tracker": {
        "block": Field(_int, 6, _at_least(2), doc="block length B"),
        "mode": Field(str, "centralized", _one_of("centralized", "distributed")),
        "beams": Field(str, "adaptive", _one_of("adaptive", "fixed", "random")),
        "graph": Field(str, "complete", doc="complete, ring:K, or an edge-list file (relative to the config)"),
    },
    "sweep": {
        "axis": Field(str, "", doc="'section.key' to vary (empty: seeds only)"),
        "values": Field(_str_list, (), doc="comma-separated values of the axis"),
        "seeds": Field(_seeds, (0,), fmt=_fmt_seeds, doc="'0:50' (range) or '1, 4, 7'"),
    },
    "map": {
        "rows": Field(_int, 100, _at_least(1)),
        "cols": Field(_int, 100, _at_least(1)),
    },
}


def _line_index(text):
    """(section, key) -> line number for every key in the file."""
    lines, section = {}, None
    for n, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), n)
            continue
        if section is not None and raw[:1] not in " \t":
            key = re.split(r"[=:]", s, 1)[0].strip().lower()
            lines.setdefault((section, key), n)
    return lines


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict  # (section, key) -> parsed value, every schema key present
    base_dir: Path = field(default=Path("."), compare=False)
    lines: dict = field(default_factory=dict, compare=False)

    def get(self, section, key):
        return self.values[(section, key)]

    def __getitem__(self, dotted):
        section, key = dotted.split(".", 1)
        return self.values[(section, key)]

    def with_values(self, updates: dict) -> "ExperimentConfig":
        """Copy with ``{'section.key': raw string or value}`` applied and validated."""
        vals = dict(self.values)
        for dotted, v in updates.items():
            section, key = _split_axis(dotted)
            f = SCHEMA[section][key]
            if isinstance(v, str):
                try:
                    v = f.parse(v.strip())
                except ValueError as exc:
                    raise ConfigError(f"{section}.{key}: {exc}", key=dotted) from None
            msg = f.check(v) if f.check else None
            if msg:
                raise ConfigError(f"{section}.{key} {msg}, got {v!r}", key=dotted)
            vals[(section, key)] = v
        out = ExperimentConfig(vals, self.base_dir, self.lines)
        out.validate()
        return out

    def _err(self, msg, section, key):
        return ConfigError(msg, key=f"{section}.{key}", line=self.lines.get((section, key)))

    def validate(self):
        """Cross-field checks; builds every domain object once."""
        P = self.get("scenario", "rows") * self.get("scenario", "cols")
        for i in self.get("scenario", "source_indices"):
            if not 1 <= i <= P:
                raise self._err(f"source index {i} outside 1..{P}", "scenario", "source_indices")
        axis = self.get("sweep", "axis")
        values = self.get("sweep", "values")
        if axis:
            section, key = _split_axis(axis, self, ("sweep", "axis"))
            if section == "sweep":
                raise self._err("cannot sweep the sweep section itself", "sweep", "axis")
            if not values:
                raise self._err("a sweep axis needs at least one value", "sweep", "values")
            f = SCHEMA[section][key]
            for v in values:
                try:
                    parsed = f.parse(v)
                except ValueError as exc:
                    raise self._err(f"sweep value {v!r} for {axis}: {exc}", "sweep", "values") from None
                msg = f.check(parsed) if f.check else None
                if msg:
                    raise self._err(f"sweep value {v!r} for {axis} {msg}", "sweep", "values")
        elif values:
            raise self._err("sweep values given without an axis", "sweep", "values")
        for section, key, build in (
            ("array", "elements", self.array),
            ("noise", "sigma2", self.noise),
            ("solver", "lam", self.solver),
            ("tracker", "block", lambda: self.tracker(0)),
        ):
            try:
                build()
            except ValueError as exc:
                raise self._err(str(exc), section, getattr(exc, "key", None) or key) from None
        g = self.get("tracker", "graph")
        if not (g == "complete" or re.fullmatch(r"ring:\d+", g)):
            path = self.graph_path()
            if not path.is_file():
                raise self._err(f"graph file {str(path)!r} does not exist", "tracker", "graph")
        return self

    # domain objects
    def array(self) -> ArrayConfig:
        return ArrayConfig(**{k: self.get("array", k) for k in SCHEMA["array"]})

    def noise(self) -> NoiseModel:
        n = lambda k: self.get("noise", k)  # noqa: E731
        return NoiseModel(n("sigma2"), n("snapshots"), n("deterministic"), n("symbols"))

    def solver(self) -> SolverConfig:
        return SolverConfig(**{k: self.get("solver", k) for k in SCHEMA["solver"]})

    def tracker(self, seed: int) -> TrackerConfig:
        t = {k: self.get("tracker", k) for k in ("block", "mode", "beams")}
        return TrackerConfig(solver=self.solver(), seed=seed, **t)

    def graph_path(self) -> Path:
        p = Path(self.get("tracker", "graph"))
        return p if p.is_absolute() else self.base_dir / p

    def graph(self, n: int) -> ConnectivityGraph:
        g = self.get("tracker", "graph")
        if g == "complete":
            return ConnectivityGraph.complete(n)
        m = re.fullmatch(r"ring:(\d+)", g)
        if m:
            return ConnectivityGraph.ring(n, int(m.group(1)))
        return ConnectivityGraph.parse(n, self.graph_path().read_text())

    @property
    def seeds(self):
        return self.get("sweep", "seeds")


def _split_axis(dotted, cfg=None, where=None):
    section, _, key = dotted.partition(".")
    if section not in SCHEMA or key not in SCHEMA.get(section, {}):
        msg = f"unknown setting {dotted!r}; use 'section.key'"
        if cfg is not None:
            raise cfg._err(msg, *where)
        raise ConfigError(msg, key=dotted)
    return section, key


def default_config() -> ExperimentConfig:
    return ExperimentConfig({(s, k): f.default for s, fs in SCHEMA.items() for k, f in fs.items()})


def parse_config(text: str, base_dir=".", name="<config>") -> ExperimentConfig:
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, strict=True, empty_lines_in_values=False)
    try:
        cp.read_string(text, source=name)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", key=exc.option, line=exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", line=exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("settings must follow a [section] header", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"cannot parse {name}", line=lineno) from None

    vals = dict(default_config().values)
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", line=lines.get((section, None)))
        for key, raw in cp.items(section):
            line = lines.get((section, key))
            f = SCHEMA[section].get(key)
            if f is None:
                raise ConfigError(f"unknown key in [{section}]", key=f"{section}.{key}", line=line)
            try:
                v = f.parse(raw.strip())
            except ValueError as exc:
                raise ConfigError(f"bad value {raw!r}: {exc}", key=f"{section}.{key}", line=line) from None
            msg = f.check(v) if f.check else None
            if msg:
                raise ConfigError(f"{section}.{key} {msg}, got {raw!r}", key=f"{section}.{key}", line=line)
            vals[(section, key)] = v
    return ExperimentConfig(vals, Path(base_dir), lines).validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from None
    return parse_config(text, base_dir=path.parent, name=str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    out = []
    for section, fields in SCHEMA.items():
        out.append(f"[{section}]")
        for key, f in fields.items():
            text = f.fmt(cfg.get(section, key))
            out.append(f"{key} = {text}".rstrip())
        out.append("")
    return "\n".join(out)
