"""Run configuration: tuned defaults, key=value config files, flag overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from plantfault.errors import ConfigurationError
from plantfault.features import LABEL_RADIUS, MAX_WINDOW, FeatureSpec


@dataclass
class RunConfig:
    # start-time stage
    k: int = 6
    p: float = 0.75
    dedup_radius: int = 4
    min_lag_start: int = -8
    max_lag_start: int = 4
    rf_trees: int = 300
    rf_mtry: int = 0  # 0 means ceil(sqrt(n_features))
    rf_max_depth: int = 0  # 0 means unlimited
    rf_min_leaf: int = 1
    plr_lambda: float = 1e-2
    plr_tolerance: float = 1e-6
    plr_max_iter: int = 50
    use_plr: bool = True
    known_start_guard: int = -1  # intervals; -1 means label radius + widest lag
    # end-time stage
    p2: float = 0.2
    exclusion_radius: int = 4
    min_lag_end: int = -8
    max_lag_end: int = 8
    trees: int = 200
    depth: int = 5
    learning_rate: float = 0.1
    tmax_floor: int = 8
    # orchestration
    fault_types: tuple[int, ...] = (1, 2, 3, 4, 5)
    seed: int = 0
    jobs: int = 1
    boundary: str = ""  # empty means grid midpoint

    def __post_init__(self):
        self.validate()

    def validate(self):
        problems = []
        if self.k < 1:
            problems.append("k must be >= 1")
        for name in ("p", "p2"):
            v = getattr(self, name)
            if not 0 < v < 1:
                problems.append(f"{name} must be in (0, 1)")
        for lo, hi in (("min_lag_start", "max_lag_start"), ("min_lag_end", "max_lag_end")):
            a, b = getattr(self, lo), getattr(self, hi)
            if not -MAX_WINDOW <= a <= 0 <= b <= MAX_WINDOW:
                problems.append(f"{lo}/{hi} must satisfy -12 <= {lo} <= 0 <= {hi} <= 12")
        if self.rf_trees < 1:
            problems.append("rf_trees must be >= 1")
        if self.trees < 0 or self.depth < 1:
            problems.append("trees must be >= 0 and depth >= 1")
        if not 0 < self.learning_rate <= 1:
            problems.append("learning_rate must be in (0, 1]")
        if self.plr_lambda < 0:
            problems.append("plr_lambda must be >= 0")
        if any(f not in (1, 2, 3, 4, 5) for f in self.fault_types):
            problems.append("fault_types must be drawn from 1..5")
        if self.known_start_guard < -1:
            problems.append("known_start_guard must be >= -1")
        if self.jobs < 1:
            problems.append("jobs must be >= 1")
        if problems:
            raise ConfigurationError("; ".join(problems))

    @property
    def start_spec(self) -> FeatureSpec:
        return FeatureSpec(self.min_lag_start, self.max_lag_start)

    @property
    def end_spec(self) -> FeatureSpec:
        return FeatureSpec(self.min_lag_end, self.max_lag_end, include_elapsed=True)

    @property
    def guard_intervals(self) -> int:
        if self.known_start_guard >= 0:
            return self.known_start_guard
        return LABEL_RADIUS + max(-self.min_lag_start, self.max_lag_start)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["fault_types"] = list(self.fault_types)
        return d

    def write(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _coerce(name: str, raw, target):
    try:
        if name == "fault_types":
            if isinstance(raw, str):
                return tuple(int(x) for x in raw.replace(",", " ").split())
            return tuple(int(x) for x in raw)
        if target is bool:
            if isinstance(raw, str):
                if raw.lower() in ("1", "true", "yes", "on"):
                    return True
                if raw.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError(raw)
            return bool(raw)
        return target(raw)
    except (TypeError, ValueError):
        raise ConfigurationError(f"bad value for {name}: {raw!r}") from None


_TYPES = {f.name: (type(f.default) if f.default is not dataclasses.MISSING else str) for f in fields(RunConfig)}


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigurationError(f"config line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_config(path: Path | str | None = None, **overrides) -> RunConfig:
    """Defaults, then the config file, then non-None overrides."""
    values = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text()))
    values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(values) - set(_TYPES)
    if unknown:
        raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
    typed = {k: _coerce(k, v, _TYPES[k]) for k, v in values.items()}
    return RunConfig(**typed)
