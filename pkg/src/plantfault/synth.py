"""Deterministic synthetic plants with planted fault signatures and known ground truth.

Structure of a generated plant:

* each zone has a latent AR(1) signal; R2, R3 and R4 of every member
  component are that latent plus measurement noise;
* S2 is the negated S4 signal plus noise; S3 and R1 are quantized to a few
  levels;
* fault signatures shift the underlying signal of a family, so a shift of
  S4 also moves S2 and a shift of any of R2..R4 moves all three;
* E2 is an instantaneous power reading and E1 its running integral;
* every fault event adds its type's signature to one channel family of all
  components (or all zones), beginning ``lead`` intervals before the
  start and holding a plateau until the end;
* maintenance (type 6) events blank every covariate;
* a fraction of timestamps is jittered by up to three minutes, a fraction
  of cells is blanked and a fraction of rows is dropped.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from plantfault.errors import ConfigurationError
from plantfault.ingest import (
    INTERVAL,
    MAINTENANCE_FAULT,
    TIMESTAMP_COLUMN,
    TIMESTAMP_FORMAT,
    FaultEvent,
    RawPlantFiles,
    plant_paths,
    write_events,
)

logger = logging.getLogger(__name__)

SHAPES = ("level", "ramp", "spike")
FAMILIES = ("S1", "S2", "S3", "S4", "R1", "R2", "R3", "R4", "E2")
PER_DAY = 96
AR_PHI = 0.95
# channel units: (mean, sd) of the clean signal
UNITS = {"S1": (20.0, 2.0), "S2": (-5.0, 1.5), "S3": (60.0, 5.0), "S4": (5.0, 1.5),
         "R1": (100.0, 10.0), "R2": (40.0, 4.0), "R3": (40.0, 4.0), "R4": (40.0, 4.0),
         "E2": (50.0, 8.0)}


@dataclass(frozen=True)
class Signature:
    family: str
    lead: int
    shape: str = "level"
    magnitude: float = 5.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown channel family {self.family!r}")
        if not 0 <= self.lead <= 12:
            raise ConfigurationError("signature lead must be within 0..12 intervals")
        if self.shape not in SHAPES:
            raise ConfigurationError(f"unknown signature shape {self.shape!r}")
        if self.magnitude < 0:
            raise ConfigurationError("signature magnitude must be nonnegative")


# family -> (underlying signal, sign of the shift applied to it)
_SIGNAL_OF = {"S1": ("S1", 1.0), "S2": ("S4", -1.0), "S3": ("S3", 1.0), "S4": ("S4", 1.0),
              "R1": ("R1", 1.0), "R2": ("zone", 1.0), "R3": ("zone", 1.0), "R4": ("zone", 1.0),
              "E2": ("E2", 1.0)}


def _default_signatures():
    return {1: Signature("S1", 2, "level", 5.0), 2: Signature("S3", 4, "ramp", 5.0),
            3: Signature("S4", 3, "spike", 5.0), 4: Signature("E2", 2, "level", 5.0),
            5: Signature("R4", 3, "ramp", 5.0)}


def _default_rates():
    return {1: 1.2, 2: 1.2, 3: 1.2, 4: 1.2, 5: 1.2, 6: 0.15}


def _default_durations():
    # (median intervals, log-sd) of a discretized log-normal
    return {1: (6.0, 0.5), 2: (10.0, 0.4), 3: (5.0, 0.6), 4: (8.0, 0.5), 5: (12.0, 0.4), 6: (8.0, 0.3)}


@dataclass
class SynthConfig:
    seed: int = 7
    n_plants: int = 5
    days: float = 120.0
    nm_range: tuple[int, int] = (2, 4)
    nn_range: tuple[int, int] = (1, 2)
    rates: dict = field(default_factory=_default_rates)  # events per week, by fault type
    signatures: dict = field(default_factory=_default_signatures)
    durations: dict = field(default_factory=_default_durations)
    noise_sd: float = 0.2  # measurement noise, in channel sd units
    quantize: dict = field(default_factory=lambda: {"S3": 12, "R1": 30})
    jitter_fraction: float = 0.05
    blank_fraction: float = 0.005
    drop_fraction: float = 0.002
    spacing: int = 24  # minimum free intervals between consecutive events
    max_duration: int = 40
    start: str = "2010-01-01 00:00:00"
    component_zones: tuple[int, ...] | None = None  # zone index per component, overrides nm/nn

    def __post_init__(self):
        if not self.days > 0:
            raise ConfigurationError("days must be positive")
        if self.n_plants < 1:
            raise ConfigurationError("n_plants must be >= 1")
        for name in ("nm_range", "nn_range"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ConfigurationError(f"{name} must satisfy 1 <= low <= high")
        if any(r < 0 for r in self.rates.values()):
            raise ConfigurationError("rates must be nonnegative")
        if set(self.rates) - {1, 2, 3, 4, 5, 6}:
            raise ConfigurationError("rates keys must be fault types 1..6")
        for k in self.rates:
            if k != MAINTENANCE_FAULT and self.rates[k] > 0 and k not in self.signatures:
                raise ConfigurationError(f"fault type {k} has a rate but no signature")
        if self.noise_sd < 0:
            raise ConfigurationError("noise_sd must be nonnegative")
        for name in ("jitter_fraction", "blank_fraction", "drop_fraction"):
            if not 0 <= getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be in [0, 1)")
        if self.component_zones is not None and not self.component_zones:
            raise ConfigurationError("component_zones must be nonempty")

    @property
    def n_intervals(self) -> int:
        return int(round(self.days * PER_DAY))


def _ar1(rng, n, phi=AR_PHI, size=1) -> np.ndarray:
    """Stationary unit-variance AR(1) paths, shape ``(n, size)``."""
    eps = rng.standard_normal((n, size))
    eps[1:] *= np.sqrt(1 - phi**2)
    return lfilter([1.0], [1.0, -phi], eps, axis=0)


def _draw_events(rng, config: SynthConfig, n: int) -> list[tuple[int, int, int]]:
    """Non-overlapping (type, start index, end index) triples, sorted by start."""
    weeks = n / (7 * PER_DAY)
    types = sorted(k for k, r in config.rates.items() if r > 0)
    if not types:
        return []
    rates = np.array([config.rates[k] for k in types], dtype=float)
    count = rng.poisson(rates.sum() * weeks)
    margin = 12 + 1
    starts = np.sort(rng.integers(margin, max(margin + 1, n - margin - config.max_duration), size=count))
    kinds = rng.choice(len(types), size=count, p=rates / rates.sum())
    out = []
    free_from = 0
    for s, ki in zip(starts, kinds):
        k = types[ki]
        median, sigma = config.durations.get(k, (8.0, 0.5))
        dur = int(np.clip(round(np.exp(np.log(median) + sigma * rng.standard_normal())), 1, config.max_duration))
        if s < free_from or s + dur >= n - margin:
            continue
        out.append((k, int(s), int(s + dur)))
        free_from = s + dur + config.spacing
    return out


def _signature_offset(n: int, sig: Signature, s: int, e: int) -> np.ndarray:
    off = np.zeros(n)
    m, lead = sig.magnitude, sig.lead
    if sig.shape == "level":
        off[max(0, s - lead):e] += m
    elif sig.shape == "ramp":
        if lead:
            off[s - lead:s] += m * np.arange(lead) / lead
        off[s:e] += m
    else:  # spike
        off[s - lead] += 2 * m
        off[s:e] += m
    return off


def _layout(rng, config: SynthConfig) -> np.ndarray:
    if config.component_zones is not None:
        return np.asarray(config.component_zones, dtype=int)
    nm = int(rng.integers(config.nm_range[0], config.nm_range[1] + 1))
    nn = int(rng.integers(config.nn_range[0], config.nn_range[1] + 1))
    return np.arange(nm) % nn


def _quantize(x: np.ndarray, levels: int, mean: float, sd: float) -> np.ndarray:
    # evenly spaced levels across +-3 sd
    step = 6 * sd / max(levels - 1, 1)
    return mean + np.round((x - mean) / step) * step


def generate_plant(config: SynthConfig, plant_id: int) -> tuple[RawPlantFiles, list[FaultEvent]]:
    """Generate the three files of one plant plus its ground-truth events."""
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), int(plant_id)]))
    n = config.n_intervals
    if n < 2:
        raise ConfigurationError("synthetic plant needs at least two intervals")
    zones = _layout(rng, config)
    nm, nn = len(zones), int(zones.max()) + 1
    grid = pd.date_range(pd.Timestamp(config.start), periods=n, freq=INTERVAL)
    hour = (np.arange(n) % PER_DAY) / PER_DAY
    daily = np.sin(2 * np.pi * hour)

    latent = _ar1(rng, n, size=nn)
    own = [_ar1(rng, n, size=4) for _ in range(nm)]
    zone_power = _ar1(rng, n, size=nn)
    events = _draw_events(rng, config, n)

    # signatures act on the underlying signal so S2/S4 and R2..R4 stay correlated
    shift = {key: np.zeros(n) for key in ("S1", "S3", "S4", "R1", "zone", "E2")}
    for k, s, e in events:
        if k == MAINTENANCE_FAULT:
            continue
        sig = config.signatures[k]
        key, sign = _SIGNAL_OF[sig.family]
        shift[key] += sign * _signature_offset(n, sig, s, e)

    clean: dict[str, np.ndarray] = {}  # unit-sd signals before units are applied
    for i in range(1, nm + 1):
        o = own[i - 1]
        z = latent[:, zones[i - 1]] + shift["zone"]
        clean[f"m{i}_S1"] = o[:, 0] + 0.3 * daily + shift["S1"]
        clean[f"m{i}_S4"] = o[:, 1] + shift["S4"]
        clean[f"m{i}_S2"] = -clean[f"m{i}_S4"]
        clean[f"m{i}_S3"] = o[:, 2] + shift["S3"]
        clean[f"m{i}_R1"] = o[:, 3] + shift["R1"]
        for j in (2, 3, 4):
            clean[f"m{i}_R{j}"] = z
    for z in range(1, nn + 1):
        clean[f"n{z}_E2"] = zone_power[:, z - 1] + 0.5 * daily + shift["E2"]

    a_cols = [f"m{i}_{f}{j}" for i in range(1, nm + 1) for f in "SR" for j in range(1, 5)]
    b_cols = [f"n{z}_E{j}" for z in range(1, nn + 1) for j in (1, 2)]
    values = {}
    for name in a_cols + [f"n{z}_E2" for z in range(1, nn + 1)]:
        fam = name.split("_")[1]
        mean, sd = UNITS[fam]
        x = mean + sd * (clean[name] + config.noise_sd * rng.standard_normal(n))
        if fam in config.quantize:
            x = _quantize(x, config.quantize[fam], mean, sd)
        values[name] = x
    for z in range(1, nn + 1):
        # energy counter integrates instantaneous power over each 15-minute step
        values[f"n{z}_E1"] = 1000.0 + np.cumsum(values[f"n{z}_E2"] * 0.25)

    a = np.column_stack([values[c] for c in a_cols])
    b = np.column_stack([values[c] for c in b_cols])
    for block in (a, b):
        block[rng.random(block.shape) < config.blank_fraction] = np.nan
    for k, s, e in events:
        if k == MAINTENANCE_FAULT:
            a[s:e + 1] = np.nan
            b[s:e + 1] = np.nan

    def frame(block, cols):
        keep = rng.random(n) >= config.drop_fraction
        jitter = np.where(rng.random(n) < config.jitter_fraction,
                          rng.integers(-180, 181, size=n), 0)
        stamps = grid + pd.to_timedelta(jitter, unit="s")
        f = pd.DataFrame(block, columns=cols)
        f.insert(0, TIMESTAMP_COLUMN, stamps)
        return f.loc[keep].reset_index(drop=True)

    file_a = frame(a, a_cols)
    file_b = frame(b, b_cols)
    truth = [FaultEvent(grid[s], grid[min(e, n - 1)], k) for k, s, e in events]
    file_c = pd.DataFrame({"start": [t.start for t in truth], "end": [t.end for t in truth],
                           "fault": [t.fault_type for t in truth]},
                          columns=["start", "end", "fault"])
    return RawPlantFiles(plant_id, file_a, file_b, file_c), truth


def _write_series(frame: pd.DataFrame, path: Path) -> None:
    out = frame.copy()
    out[TIMESTAMP_COLUMN] = out[TIMESTAMP_COLUMN].dt.strftime(TIMESTAMP_FORMAT)
    out.to_csv(path, index=False, float_format="%.4f", na_rep="")


def write_plant(raw: RawPlantFiles, truth: list[FaultEvent], directory: Path | str) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    path_a, path_b, path_c = plant_paths(d, raw.plant_id)
    _write_series(raw.file_a, path_a)
    _write_series(raw.file_b, path_b)
    write_events(truth, path_c)
    write_events(truth, d / f"truth-{raw.plant_id}.csv")


def generate_dataset(config: SynthConfig, directory: Path | str) -> dict[int, list[FaultEvent]]:
    """Write plants ``1..n_plants`` into ``directory``; returns the truth per plant."""
    truths = {}
    for pid in range(1, config.n_plants + 1):
        raw, truth = generate_plant(config, pid)
        write_plant(raw, truth, directory)
        truths[pid] = truth
        logger.info("plant %d: %d components, %d zones, %d events", pid, raw.n_components,
                    raw.n_zones, len(truth))
    return truths
