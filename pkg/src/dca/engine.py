"""The deterministic DC population.

The engine keeps every cell's lifespan and signal profile in flat numpy
arrays so one signal tick is a handful of vector operations regardless of
population size. Antigen profiles stay as Python lists because they are
variable length and emitted in storage order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, TextIO

import numpy as np

from .core import (
    AntigenId,
    ConfigError,
    DendriticCell,
    InputError,
    OutputPair,
    OutputSignals,
    SignalVector,
    StreamEvent,
    WeightMatrix,
)

LIFESPAN_MODES = ("evenly-spaced", "uniform-random", "gaussian")


@dataclass(frozen=True)
class EngineConfig:
    population_size: int = 100
    lifespan_distribution: str = "evenly-spaced"
    lifespan_min: float = 500.0
    lifespan_max: float = 2000.0
    # gaussian mode only
    lifespan_mean: float = 1250.0
    lifespan_std: float = 400.0
    gaussian_floor: float = 0.01  # draws clamped to >= lifespan_min * gaussian_floor
    rng_seed: int = 0
    weights: WeightMatrix = field(default_factory=WeightMatrix)
    flush_at_end: bool = False

    def __post_init__(self):
        if int(self.population_size) != self.population_size or self.population_size < 1:
            raise ConfigError(f"population_size must be a natural number >= 1, got {self.population_size}")
        if self.lifespan_distribution not in LIFESPAN_MODES:
            raise ConfigError(
                f"unknown lifespan distribution {self.lifespan_distribution!r}; expected one of {LIFESPAN_MODES}"
            )
        if not self.lifespan_min > 0:
            raise ConfigError(f"lifespan_min must be > 0, got {self.lifespan_min}")
        if self.lifespan_min > self.lifespan_max:
            raise ConfigError("lifespan_min must not exceed lifespan_max")
        if self.lifespan_std < 0:
            raise ConfigError("lifespan_std must be >= 0")
        if not 0 < self.gaussian_floor <= 1:
            raise ConfigError("gaussian_floor must lie in (0, 1]")


@dataclass
class EngineState:
    """Snapshot of the population, the antigen counter and the output list."""

    population: List[DendriticCell]
    antigen_counter: int
    output: List[OutputPair]
    tick: int


def initial_lifespans(config: EngineConfig) -> np.ndarray:
    """Draw I(i) for every cell according to ``config``."""
    n = config.population_size
    mode = config.lifespan_distribution
    if mode == "evenly-spaced":
        if n == 1:
            return np.array([config.lifespan_min], dtype=float)
        step = (config.lifespan_max - config.lifespan_min) / (n - 1)
        return np.array([config.lifespan_min + i * step for i in range(n)], dtype=float)
    rng = np.random.default_rng(config.rng_seed)
    if mode == "uniform-random":
        return rng.uniform(config.lifespan_min, config.lifespan_max, size=n)
    draws = rng.normal(config.lifespan_mean, config.lifespan_std, size=n)
    return np.maximum(draws, config.lifespan_min * config.gaussian_floor)


def transform_signal(s, w: WeightMatrix) -> OutputSignals:
    """Map a signal vector to (CSM, K) using the two rows of ``w``."""
    if isinstance(s, SignalVector):
        p, d, sf = s.pamp, s.danger, s.safe
    else:
        p, d, sf = (float(v) for v in s)
        if not (math.isfinite(p) and math.isfinite(d) and math.isfinite(sf)):
            raise InputError(f"non-finite signal {s!r}")
    (a, b, c), (x, y, z) = w.rows
    return OutputSignals(a * p + b * d + c * sf, x * p + y * d + z * sf)


def update_lifespan(cell: DendriticCell, csm: float) -> float:
    """New remaining lifespan after one signal tick (does not mutate ``cell``)."""
    if cell.remaining_lifespan <= 0:
        return cell.initial_lifespan - csm
    return cell.remaining_lifespan - csm


def update_signal_profile(cell: DendriticCell, k: float) -> float:
    """New signal profile after one signal tick (does not mutate ``cell``).

    Reads the cell's *previous* lifespan, so call it before storing the
    result of :func:`update_lifespan`.
    """
    if cell.remaining_lifespan <= 0:
        return 0.0 + k
    return cell.signal_profile + k


def emit_record(cell: DendriticCell, output: List[OutputPair]) -> List[OutputPair]:
    """Append one (antigen, G) pair per stored antigen and clear the profile."""
    if cell.remaining_lifespan > 0:
        return output
    g = cell.signal_profile
    for a in cell.antigen_profile:
        output.append(OutputPair(a, g))
    cell.antigen_profile = []
    return output


class DCAEngine:
    """Runs the population over a stream of :class:`StreamEvent`.

    Args:
        config: population and weight settings.
        sink: optional callable invoked with every emitted pair, in
            emission order, as soon as it is produced.
    """

    def __init__(self, config: Optional[EngineConfig] = None, sink: Optional[Callable[[OutputPair], None]] = None):
        self.config = config or EngineConfig()
        self.sink = sink
        n = self.config.population_size
        self.lifespans = initial_lifespans(self.config)
        self.remaining = self.lifespans.copy()
        self.profiles = np.zeros(n, dtype=float)
        self.antigens: List[List[AntigenId]] = [[] for _ in range(n)]
        self.intake = np.zeros(n, dtype=np.int64)
        self.theta = 0
        self.tick = 0
        self.signal_ticks = 0
        self.output: List[OutputPair] = []
        # signal-tick index at which each output pair was emitted
        self.emission_ticks: List[int] = []
        self._last_time: Optional[int] = None

    @property
    def population_size(self) -> int:
        return self.config.population_size

    def sample_antigen(self, a: AntigenId) -> int:
        """Store ``a`` in the next cell in round-robin order; returns its 1-based index."""
        self.theta += 1
        i = (self.theta - 1) % self.config.population_size
        self.antigens[i].append(a)
        self.intake[i] += 1
        return i + 1

    def process_signal(self, s) -> int:
        """Apply one signal to every cell. Returns the number of pairs emitted."""
        csm, k = transform_signal(s, self.config.weights)
        self.signal_ticks += 1
        F, G = self.remaining, self.profiles
        reset = F <= 0
        if reset.any():
            F[reset] = self.lifespans[reset]
            G[reset] = 0.0
        F -= csm
        G += k
        matured = np.flatnonzero(F <= 0)
        emitted = 0
        for i in matured:
            held = self.antigens[i]
            if held:
                emitted += self._emit(held, float(G[i]))
                self.antigens[i] = []
        return emitted

    def _emit(self, held: Sequence[AntigenId], g: float) -> int:
        tick = self.signal_ticks
        for a in held:
            pair = OutputPair(a, g)
            self.output.append(pair)
            self.emission_ticks.append(tick)
            if self.sink is not None:
                self.sink(pair)
        return len(held)

    def process_event(self, e: StreamEvent) -> int:
        if self._last_time is not None and e.time < self._last_time:
            raise InputError(f"event time {e.time} precedes previous event time {self._last_time}")
        self._last_time = e.time
        self.tick += 1
        if e.is_antigen:
            self.sample_antigen(e.payload)
            return 0
        return self.process_signal(e.payload)

    def run(self, events: Iterable[StreamEvent]) -> List[OutputPair]:
        """Consume every event, then flush if configured. Returns the output list."""
        for e in events:
            self.process_event(e)
        if self.config.flush_at_end:
            self.flush()
        return self.output

    def feed_rows(self, antigens: Sequence[AntigenId], signals: np.ndarray, antigens_per_signal: int = 1) -> int:
        """Same as processing the stream ``[a_0]*r, s_0, [a_1]*r, s_1, ...`` event by event."""
        signals = np.asarray(signals, dtype=float)
        if len(antigens) != len(signals):
            raise InputError("need exactly one antigen id per signal row")
        if not np.isfinite(signals).all():
            raise InputError("non-finite signal values")
        emitted = 0
        for a, s in zip(antigens, signals.tolist()):
            for _ in range(antigens_per_signal):
                self.sample_antigen(int(a))
            emitted += self.process_signal(s)
        self.tick += len(signals) * (antigens_per_signal + 1)
        return emitted

    def flush(self) -> int:
        """Emit (antigen, current G) for every antigen still held by a cell."""
        emitted = 0
        for i, held in enumerate(self.antigens):
            if held:
                emitted += self._emit(held, float(self.profiles[i]))
                self.antigens[i] = []
        return emitted

    @property
    def held_antigens(self) -> int:
        return sum(len(h) for h in self.antigens)

    def cells(self) -> List[DendriticCell]:
        return [
            DendriticCell(i + 1, float(self.lifespans[i]), float(self.remaining[i]), float(self.profiles[i]), list(h))
            for i, h in enumerate(self.antigens)
        ]

    def state(self) -> EngineState:
        return EngineState(self.cells(), self.theta, list(self.output), self.tick)


def init_population(config: EngineConfig) -> EngineState:
    return DCAEngine(config).state()


def run_stream(events: Iterable[StreamEvent], config: Optional[EngineConfig] = None) -> List[OutputPair]:
    return DCAEngine(config).run(events)


class PairFileWriter:
    """Mirrors output pairs to ``antigen<TAB>k`` lines; usable as an engine sink."""

    def __init__(self, fh: TextIO):
        self.fh = fh

    def __call__(self, pair: OutputPair) -> None:
        self.fh.write(f"{pair.antigen}\t{pair.k_value!r}\n")


def read_pairs(lines: Iterable[str]) -> List[OutputPair]:
    out = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        a, k = line.split("\t")
        out.append(OutputPair(int(a), float(k)))
    return out
