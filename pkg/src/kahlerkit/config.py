"""Experiment configuration files.

A config is an INI file::

    [experiment]
    name = torus-demo
    seed = 42
    workers = 1
    t = 0, 0.05, 0.2

    [manifold]
    kind = torus        ; torus | cp1 | cp2-analytic
    m = 1
    N = 32

    [metric]
    kind = random       ; flat | fs | potential | random
    amplitude = 0.005
    count = 3

Command-specific sections (``[flow]``, ``[kernel]``, ``[mabuchi]``,
``[kempf-ness]``, ``[tolerances]``) are optional.  Validation errors name the
file, line, section and key.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from ._random import check_seed

MANIFOLDS = ("torus", "cp1", "cp2-analytic")
METRICS = ("flat", "fs", "potential", "random")

DEFAULT_TOLERANCES = {
    "chern": 1e-9,
    "chern_cp1": 1e-6,
    "route": 1e-10,
    "mean": 1e-7,
    "sigma": 1e-9,
    "reference_cp1": 1e-5,
    "reference_cp2": 1e-10,
    "futaki": 1e-5,
    "mabuchi_path": 1e-7,
    "mabuchi_cocycle": 3e-7,
    "flow": 1e-6,
    "kernel_gap": 1e-6,
    "self_adjoint": 1e-8,
    "transport": 1e-8,
    "convexity": 1e-10,
    "equivariance": 1e-8,
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    manifold: str = "torus"
    m: int = 1
    N: int = 32
    n_theta: int = 32
    n_lam: int = 64
    n_alpha: int = 24
    metric: str = "flat"
    amplitude: float = 0.005
    max_freq: int = 2
    count: int = 1
    potential_file: str | None = None
    t: list = field(default_factory=lambda: [0.0])
    seed: int = 0
    workers: int = 1
    out: str | None = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    sections: dict = field(default_factory=dict)  # remaining raw sections
    source: str | None = None

    def section(self, name) -> dict:
        return dict(self.sections.get(name, {}))

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "manifold": self.manifold,
            "m": self.m,
            "N": self.N,
            "n_theta": self.n_theta,
            "n_lam": self.n_lam,
            "metric": self.metric,
            "amplitude": self.amplitude,
            "max_freq": self.max_freq,
            "count": self.count,
            "t": list(self.t),
            "seed": self.seed,
        }


def parse_t_list(text: str) -> list:
    """``"0, 0.1"`` or a range ``"0:0.3:0.05"`` (inclusive end)."""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError("step must be positive")
            n = int(round((hi - lo) / step))
            return [round(lo + k * step, 12) for k in range(n + 1)]
        return [float(v) for v in re.split(r"[,\s]+", text) if v]
    except ValueError as exc:
        raise ConfigError(f"bad t list {text!r}: {exc}") from None


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` to 1-based line numbers for diagnostics."""
    idx, sec = {}, None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            sec = m.group(1).strip()
            idx[(sec, None)] = n
        elif sec is not None and "=" in s and not s.startswith(("#", ";")):
            idx[(sec, s.split("=", 1)[0].strip().lower())] = n
    return idx


def load_config(path=None, text: str | None = None) -> ExperimentConfig:
    if text is None:
        if path is None:
            return ExperimentConfig()
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} does not exist")
        text = p.read_text(encoding="utf-8")
    src = str(path) if path is not None else "<config>"
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=src)
    except configparser.Error as exc:
        raise ConfigError(f"{src}: {exc}") from None
    lines = _line_index(text)

    def fail(sec, key, msg):
        n = lines.get((sec, key), lines.get((sec, None)))
        where = f"{src}:{n}" if n else src
        raise ConfigError(f"{where}: [{sec}] {key}: {msg}")

    def get(sec, key, conv, default):
        if not cp.has_option(sec, key):
            return default
        raw = cp.get(sec, key)
        try:
            return conv(raw)
        except (ValueError, ConfigError) as exc:
            fail(sec, key, f"cannot parse {raw!r} ({exc})")

    cfg = ExperimentConfig(source=src)
    if cp.has_section("experiment"):
        cfg.name = get("experiment", "name", str, cfg.name)
        cfg.seed = get("experiment", "seed", lambda v: check_seed(int(v)), cfg.seed)
        cfg.workers = get("experiment", "workers", int, cfg.workers)
        cfg.t = get("experiment", "t", parse_t_list, cfg.t)
        cfg.out = get("experiment", "output", str, cfg.out)
        if cfg.workers < 1:
            fail("experiment", "workers", "must be at least 1")
    if cp.has_section("manifold"):
        cfg.manifold = get("manifold", "kind", str.strip, cfg.manifold)
        if cfg.manifold not in MANIFOLDS:
            fail("manifold", "kind", f"must be one of {MANIFOLDS}")
        cfg.m = get("manifold", "m", int, 2 if cfg.manifold == "cp2-analytic" else 1)
        cfg.N = get("manifold", "n", int, cfg.N)
        cfg.n_theta = get("manifold", "n_theta", int, cfg.n_theta)
        cfg.n_lam = get("manifold", "n_lam", int, cfg.n_lam)
        cfg.n_alpha = get("manifold", "n_alpha", int, cfg.n_alpha)
        if cfg.manifold == "torus" and cfg.m not in (1, 2):
            fail("manifold", "m", "torus dimension must be 1 or 2")
        if cfg.manifold == "cp1" and cfg.m != 1:
            fail("manifold", "m", "cp1 has m = 1")
        if cfg.manifold == "cp2-analytic" and cfg.m != 2:
            fail("manifold", "m", "cp2-analytic has m = 2")
    cfg.metric = "fs" if cfg.manifold != "torus" else "flat"
    if cp.has_section("metric"):
        cfg.metric = get("metric", "kind", str.strip, cfg.metric)
        if cfg.metric not in METRICS:
            fail("metric", "kind", f"must be one of {METRICS}")
        cfg.amplitude = get("metric", "amplitude", float, cfg.amplitude)
        cfg.max_freq = get("metric", "max_freq", int, cfg.max_freq)
        cfg.count = get("metric", "count", int, cfg.count)
        cfg.potential_file = get("metric", "file", str, None)
        if cfg.metric == "potential" and not cfg.potential_file:
            fail("metric", "file", "potential metrics need a field container file")
        if cfg.metric == "potential" and path is not None:
            pf = Path(cfg.potential_file)
            if not pf.is_absolute():
                pf = Path(path).parent / pf
            cfg.potential_file = str(pf)
        if cfg.count < 1:
            fail("metric", "count", "must be at least 1")
    if cfg.metric == "flat" and cfg.manifold != "torus":
        fail("metric", "kind", "flat metrics exist only on tori")
    if cfg.metric == "fs" and cfg.manifold == "torus":
        fail("metric", "kind", "Fubini-Study metrics exist only on cp1 / cp2-analytic")
    if cfg.manifold == "cp2-analytic" and cfg.metric != "fs":
        fail("metric", "kind", "cp2-analytic carries the Fubini-Study metric only")
    if cp.has_section("tolerances"):
        for key in cp.options("tolerances"):
            if key not in DEFAULT_TOLERANCES:
                fail("tolerances", key, f"unknown tolerance (known: {sorted(DEFAULT_TOLERANCES)})")
            cfg.tolerances[key] = get("tolerances", key, float, None)
    known = {"experiment", "manifold", "metric", "tolerances"}
    cfg.sections = {s: dict(cp.items(s)) for s in cp.sections() if s not in known}
    return cfg
