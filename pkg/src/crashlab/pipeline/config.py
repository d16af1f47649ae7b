"""Flat ``key = value`` run configuration.

Every key lives in ``DEFAULTS``; its default fixes the value type.  Tuple
defaults take comma-separated lists.  Lines starting with ``#`` are
comments.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import fields
from pathlib import Path

from ..crashsim import DEFAULT_DT_OUT, DEFAULT_DURATION, MaterialCard, SolverConstants
from ..doe import ParameterSpace
from ..errors import ConfigError, CrashLabError
from ..forming import FormingParams, ToolGeometry
from ..mlcore import DEFAULT_GRIDS, KINDS, TARGETS
from ..symreg import SymregConfig

DATA_SOURCES = ("surrogate", "oracle", "oracle_noisy")

# Keys that change how a run executes but never what it produces.
NON_SEMANTIC = ("run.workers", "run.out")


def _defaults() -> dict:
    d = {
        "run.seed": 42,
        "run.workers": 1,
        "run.out": "run",
        "run.data_source": "surrogate",
        "run.noise_rel": 0.01,
        "doe.n_samples": 400,
        "crash.v0_kmh": 35.0,
        "crash.duration_ms": DEFAULT_DURATION * 1e3,
        "crash.dt_out_ms": DEFAULT_DT_OUT * 1e3,
        "ml.targets": TARGETS,
        "ml.learners": KINDS,
        "ml.final_learner": "gbt_regularized",
        "ml.test_fraction": 0.2,
        "ml.cv_folds": 5,
        "ml.random_forest.feature_subsample": (0.6,),
        "symreg.targets": TARGETS,
        "symreg.orientation": "B",
        "report.trace_sample": -1,
    }
    space = ParameterSpace()
    for name in ("n_layers", "thickness", "punch_velocity", "layer_temp", "tool_temp", "air_temp"):
        lo, hi = getattr(space, f"{name}_range")
        d[f"doe.{name}_min"], d[f"doe.{name}_max"] = lo, hi
    for obj, prefix in ((FormingParams(), "forming"), (ToolGeometry(), "forming"),
                        (MaterialCard(), "material"), (SolverConstants(), "crash"),
                        (SymregConfig(), "symreg")):
        for f in fields(obj):
            d[f"{prefix}.{f.name}"] = getattr(obj, f.name)
    for learner, grid in DEFAULT_GRIDS.items():
        for param, values in grid.items():
            d[f"ml.{learner}.{param}"] = tuple(values)
    d["symreg.seed"] = -1  # -1: follow run.seed
    return d


DEFAULTS = _defaults()


def _coerce(key: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if not items:
                raise ValueError("empty list")
            kind = type(default[0]) if default else str
            return tuple(_scalar(s, kind) for s in items)
        return _scalar(raw, type(default))
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {raw!r} ({exc})") from None


def _scalar(text: str, kind):
    if kind is bool:
        if text.lower() in ("1", "true", "yes"):
            return True
        if text.lower() in ("0", "false", "no"):
            return False
        raise ValueError("expected a boolean")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


class RunConfig(dict):
    """Resolved configuration: defaults, then file values, then overrides."""

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict | None = None) -> "RunConfig":
        values = dict(DEFAULTS)
        if path is not None:
            try:
                text = Path(path).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
            for lineno, line in enumerate(text.splitlines(), start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, raw = line.partition("=")
                key = key.strip()
                if not sep:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                if key not in DEFAULTS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                values[key] = _coerce(key, raw, DEFAULTS[key])
        for key, value in (overrides or {}).items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown key {key!r}")
            if value is not None:
                values[key] = _coerce(key, str(value), DEFAULTS[key]) if isinstance(value, str) else value
        cfg = cls(values)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self["doe.n_samples"] < 1:
            raise ConfigError("doe.n_samples must be at least 1")
        if self["run.workers"] < 1:
            raise ConfigError("run.workers must be at least 1")
        if not 0 <= self["run.seed"] < 2**64:
            raise ConfigError("run.seed must lie in [0, 2^64)")
        if self["run.data_source"] not in DATA_SOURCES:
            raise ConfigError(f"run.data_source must be one of {DATA_SOURCES}")
        if self["run.noise_rel"] < 0:
            raise ConfigError("run.noise_rel must be nonnegative")
        for key in ("ml.targets", "symreg.targets"):
            bad = set(self[key]) - set(TARGETS)
            if bad:
                raise ConfigError(f"{key}: unknown targets {sorted(bad)}")
        bad = set(self["ml.learners"]) - set(KINDS)
        if bad:
            raise ConfigError(f"ml.learners: unknown learners {sorted(bad)}")
        if self["ml.final_learner"] not in self["ml.learners"]:
            raise ConfigError("ml.final_learner must be one of ml.learners")
        if not 0 < self["ml.test_fraction"] < 1:
            raise ConfigError("ml.test_fraction must lie in (0, 1)")
        if self["ml.cv_folds"] < 2:
            raise ConfigError("ml.cv_folds must be at least 2")
        if self["symreg.orientation"] not in [lbl for lbl, _ in ParameterSpace().orientation_sets]:
            raise ConfigError("symreg.orientation must name an orientation set")
        try:  # let the domain objects check their own ranges
            self.space(), self.forming(), self.geometry(), self.material(), self.solver()
            self.symreg()
        except CrashLabError as exc:
            raise ConfigError(str(exc)) from None

    # -- domain objects -------------------------------------------------------------

    def _section(self, cls, prefix):
        return cls(**{f.name: self[f"{prefix}.{f.name}"] for f in fields(cls)})

    def space(self) -> ParameterSpace:
        kw = {}
        for name in ("n_layers", "thickness", "punch_velocity", "layer_temp", "tool_temp", "air_temp"):
            kw[f"{name}_range"] = (self[f"doe.{name}_min"], self[f"doe.{name}_max"])
        return ParameterSpace(**kw)

    def forming(self) -> FormingParams:
        return self._section(FormingParams, "forming")

    def geometry(self) -> ToolGeometry:
        return self._section(ToolGeometry, "forming")

    def material(self) -> MaterialCard:
        return self._section(MaterialCard, "material")

    def solver(self) -> SolverConstants:
        return self._section(SolverConstants, "crash")

    def symreg(self) -> SymregConfig:
        kw = {f.name: self[f"symreg.{f.name}"] for f in fields(SymregConfig)}
        if kw["seed"] < 0:
            kw["seed"] = self["run.seed"]
        return SymregConfig(**kw)

    def grid(self, learner: str) -> dict:
        prefix = f"ml.{learner}."
        return {k[len(prefix):]: list(v) for k, v in self.items() if k.startswith(prefix)}

    # -- hashing --------------------------------------------------------------------

    def digest(self, prefixes=None) -> str:
        """sha256 over the semantic keys, optionally only those under ``prefixes``."""
        keep = {k: v for k, v in sorted(self.items())
                if k not in NON_SEMANTIC and (prefixes is None or k.startswith(tuple(prefixes)))}
        blob = json.dumps(keep, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def dumps(self) -> str:
        lines = []
        for key in sorted(self):
            v = self[key]
            text = ", ".join(str(x) for x in v) if isinstance(v, tuple) else str(v)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"
