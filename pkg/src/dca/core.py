"""Domain types shared by the engine, the analysis stage and preprocessing.

Signals are 3-component vectors (PAMP, Danger, Safe); antigens are plain
integers compared only for equality. The engine fuses the two streams and
appends ``(antigen, k)`` pairs to an output list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Union

DEFAULT_S_MAX = 100.0


class DCAError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(DCAError, ValueError):
    """Invalid configuration value."""


class InputError(DCAError, ValueError):
    """Malformed input event or signal."""


class DataError(DCAError, ValueError):
    """Dataset content is unusable (empty, wrong arity, missing labels...)."""


class SchemaError(DataError):
    """Dataset columns or label values do not match the declared schema."""


AntigenId = int


@dataclass(frozen=True)
class SignalVector:
    pamp: float
    danger: float
    safe: float

    def __post_init__(self):
        for name in ("pamp", "danger", "safe"):
            if not math.isfinite(getattr(self, name)):
                raise InputError(f"signal component {name} is not finite: {getattr(self, name)!r}")

    def as_tuple(self):
        return (self.pamp, self.danger, self.safe)

    def within(self, s_max: float = DEFAULT_S_MAX) -> bool:
        return all(0.0 <= v <= s_max for v in self.as_tuple())


@dataclass(frozen=True)
class StreamEvent:
    """One tick of the input stream: either a signal or an antigen."""

    time: int
    payload: Union[SignalVector, AntigenId]

    def __post_init__(self):
        if self.payload is None:
            raise InputError("event payload is empty")
        if isinstance(self.payload, bool) or not isinstance(self.payload, (SignalVector, int)):
            raise InputError(f"unsupported payload type {type(self.payload).__name__}")
        if isinstance(self.payload, int) and self.payload < 0:
            raise InputError(f"antigen id must be a natural number, got {self.payload}")

    @property
    def is_antigen(self) -> bool:
        return not isinstance(self.payload, SignalVector)

    @property
    def is_signal(self) -> bool:
        return isinstance(self.payload, SignalVector)


@dataclass(frozen=True)
class WeightMatrix:
    """2x3 transformation matrix; row one yields CSM, row two yields K."""

    w_csm_pamp: float = 2.0
    w_csm_danger: float = 1.0
    w_csm_safe: float = 2.0
    w_k_pamp: float = 2.0
    w_k_danger: float = 1.0
    w_k_safe: float = -3.0

    def __post_init__(self):
        entries = self.rows[0] + self.rows[1]
        if not all(math.isfinite(w) for w in entries):
            raise ConfigError("weight matrix entries must be finite")
        csm = self.rows[0]
        if any(w < 0 for w in csm) or not any(w > 0 for w in csm):
            # lifespans must deplete monotonically between resets
            raise ConfigError("CSM row must be nonnegative with at least one positive entry")

    @property
    def rows(self):
        return (
            (self.w_csm_pamp, self.w_csm_danger, self.w_csm_safe),
            (self.w_k_pamp, self.w_k_danger, self.w_k_safe),
        )

    @classmethod
    def from_rows(cls, csm_row, k_row) -> "WeightMatrix":
        return cls(*[float(w) for w in csm_row], *[float(w) for w in k_row])


class OutputSignals(NamedTuple):
    csm: float
    k: float


class OutputPair(NamedTuple):
    antigen: AntigenId
    k_value: float


@dataclass
class DendriticCell:
    """A single detector.

    ``remaining_lifespan`` starts at ``initial_lifespan`` and is depleted by
    CSM; once it drops to zero or below the cell has matured and resets on
    its next signal tick.
    """

    index: int
    initial_lifespan: float
    remaining_lifespan: float = field(default=math.nan)
    signal_profile: float = 0.0
    antigen_profile: List[AntigenId] = field(default_factory=list)

    def __post_init__(self):
        if not self.initial_lifespan > 0:
            raise ConfigError(f"cell {self.index}: initial lifespan must be > 0")
        if math.isnan(self.remaining_lifespan):
            self.remaining_lifespan = self.initial_lifespan

    @property
    def matured(self) -> bool:
        return self.remaining_lifespan <= 0


def append(pair: OutputPair, lst: list) -> list:
    """Append ``pair`` to ``lst`` in place and return it. Duplicates are kept."""
    lst.append(pair)
    return lst
