"""Run configuration: one JSON document, overridable field by field from the CLI.

Example::

    {
      "network": "network.json",
      "measurements": "measurements.csv",
      "out": "runs/year",
      "limits": {"v_min_pu": 0.95, "v_max_pu": 1.05, "loading_max_percent": 90.0},
      "weights": {"w_p": 10.0, "w_q": 1.0},
      "power_factors": {"load": 0.95, "generation": 0.99},
      "solver": {"tol_pu": 1e-8, "max_iter": 30},
      "gap_policy": "hold-last",
      "scenarios": [{"name": "base", "load_scale": 1.0, "cae": true},
                    {"name": "minus20", "load_scale": 0.8},
                    {"name": "plus20", "load_scale": 1.2}],
      "cae": {"stride": 4, "preventive": true},
      "jobs": 1
    }

Relative paths resolve against the directory of the config file. The power
flow tolerance and iteration cap are engineering defaults, not published
values; tighten or relax them here.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .ingestion import GAP_POLICIES, PF_GEN, PF_LOAD
from .powerflow import SolverOptions
from .rsae import SecurityLimits
from .smfae import RedispatchConfig


class ConfigError(ValueError):
    pass


_NAME = re.compile(r"^[A-Za-z0-9_.-]+$")


@dataclass(frozen=True)
class Scenario:
    name: str
    load_scale: float = 1.0
    rsae: bool = True
    smfae: bool = True
    cae: bool = False

    def __post_init__(self):
        if not _NAME.match(self.name):
            raise ConfigError(f"scenario name {self.name!r}: use letters, digits, '_', '-', '.'")
        if not self.load_scale > 0:
            raise ConfigError(f"scenario {self.name}: load_scale must be positive")

    def to_dict(self):
        return {"name": self.name, "load_scale": self.load_scale, "rsae": self.rsae,
                "smfae": self.smfae, "cae": self.cae}


DEFAULT_SCENARIOS = (
    Scenario("base", 1.0, cae=True),
    Scenario("minus20", 0.8),
    Scenario("plus20", 1.2),
)


@dataclass(frozen=True)
class RunConfig:
    network: Path | None = None
    measurements: Path | None = None
    out: Path = Path("run")
    limits: SecurityLimits = field(default_factory=SecurityLimits)
    w_p: float = 10.0
    w_q: float = 1.0
    pf_load: float = PF_LOAD
    pf_gen: float = PF_GEN
    solver: SolverOptions = field(default_factory=SolverOptions)
    p_bound_fraction: float = 0.85
    pf_min: float = 0.95
    redispatch_max_iter: int = 150
    gap_policy: str = "hold-last"
    scenarios: tuple[Scenario, ...] = DEFAULT_SCENARIOS
    cae_stride: int = 4
    preventive: bool = True
    jobs: int = 1

    def __post_init__(self):
        if not (self.w_p > 0 and self.w_q > 0):
            raise ConfigError("weights w_p and w_q must be positive")
        for name in ("pf_load", "pf_gen", "pf_min"):
            if not 0 < getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if not 0 < self.p_bound_fraction <= 1:
            raise ConfigError("p_bound_fraction must lie in (0, 1]")
        if self.gap_policy not in GAP_POLICIES:
            raise ConfigError(f"gap_policy must be one of {GAP_POLICIES}")
        if self.cae_stride < 1 or self.jobs < 1 or self.redispatch_max_iter < 1:
            raise ConfigError("cae.stride, jobs and redispatch max_iter must be >= 1")
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ConfigError("scenario names must be unique")

    @property
    def redispatch(self) -> RedispatchConfig:
        return RedispatchConfig(w_p=self.w_p, w_q=self.w_q, p_bound_fraction=self.p_bound_fraction,
                                pf_min=self.pf_min, limits=self.limits,
                                max_iter=self.redispatch_max_iter)

    def require_paths(self, *names):
        for name in names:
            p = getattr(self, name)
            if p is None:
                raise ConfigError(f"no {name} path given (config field or --{name} flag)")
            if not Path(p).exists():
                raise ConfigError(f"{name} path {p} does not exist")

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        for k in ("network", "measurements", "out"):
            if k in kw:
                kw[k] = Path(kw[k])
        try:
            return replace(self, **kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        """Deterministic echo of the settings (paths excluded) for metrics.json."""
        return {
            "limits": {"v_min_pu": self.limits.v_min_pu, "v_max_pu": self.limits.v_max_pu,
                       "loading_max_percent": self.limits.loading_max_percent},
            "weights": {"w_p": self.w_p, "w_q": self.w_q},
            "power_factors": {"load": self.pf_load, "generation": self.pf_gen},
            "solver": {"tol_pu": self.solver.tol_pu, "max_iter": self.solver.max_iter},
            "redispatch": {"p_bound_fraction": self.p_bound_fraction, "pf_min": self.pf_min,
                           "max_iter": self.redispatch_max_iter},
            "gap_policy": self.gap_policy,
            "scenarios": [s.to_dict() for s in self.scenarios],
            "cae": {"stride": self.cae_stride, "preventive": self.preventive},
        }


_TOP_KEYS = {"network", "measurements", "out", "limits", "weights", "power_factors", "solver",
             "redispatch", "gap_policy", "scenarios", "cae", "jobs"}


def _section(doc, key, allowed):
    sec = doc.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config field {key!r} must be an object")
    bad = set(sec) - set(allowed)
    if bad:
        raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
    return sec


def config_from_dict(doc: dict, base_dir: Path | None = None) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base_dir = Path(base_dir) if base_dir else Path(".")

    def path(key):
        v = doc.get(key)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else base_dir / p

    kw = {}
    for key in ("network", "measurements", "out"):
        if doc.get(key) is not None:
            kw[key] = path(key)
    try:
        lim = _section(doc, "limits", ("v_min_pu", "v_max_pu", "loading_max_percent"))
        kw["limits"] = SecurityLimits(**{k: float(v) for k, v in lim.items()})
        w = _section(doc, "weights", ("w_p", "w_q"))
        kw.update({k: float(v) for k, v in w.items()})
        pf = _section(doc, "power_factors", ("load", "generation"))
        if "load" in pf:
            kw["pf_load"] = float(pf["load"])
        if "generation" in pf:
            kw["pf_gen"] = float(pf["generation"])
        sv = _section(doc, "solver", ("tol_pu", "max_iter"))
        kw["solver"] = SolverOptions(**sv)
        rd = _section(doc, "redispatch", ("p_bound_fraction", "pf_min", "max_iter"))
        if "p_bound_fraction" in rd:
            kw["p_bound_fraction"] = float(rd["p_bound_fraction"])
        if "pf_min" in rd:
            kw["pf_min"] = float(rd["pf_min"])
        if "max_iter" in rd:
            kw["redispatch_max_iter"] = int(rd["max_iter"])
        if "gap_policy" in doc:
            kw["gap_policy"] = doc["gap_policy"]
        if "scenarios" in doc:
            sc = doc["scenarios"]
            if not isinstance(sc, list) or not sc:
                raise ConfigError("scenarios must be a non-empty list")
            kw["scenarios"] = tuple(Scenario(**s) for s in sc)
        ca = _section(doc, "cae", ("stride", "preventive"))
        if "stride" in ca:
            kw["cae_stride"] = int(ca["stride"])
        if "preventive" in ca:
            kw["preventive"] = bool(ca["preventive"])
        if "jobs" in doc:
            kw["jobs"] = int(doc["jobs"])
        return RunConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {p} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p}: {exc}") from None
    return config_from_dict(doc, p.parent)
