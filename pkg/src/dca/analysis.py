"""Turning the output list into per-antigen anomaly scores.

Offline analysis scans the whole list once; online analysis cuts the list
into fixed-size segments as pairs arrive and scores each segment on its
own, so verdicts are available while detection is still running.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

from .core import AntigenId, ConfigError, DCAError, OutputPair

NORMAL = "normal"
ANOMALOUS = "anomalous"


class AbsentAntigenError(DCAError, KeyError):
    """Requested antigen type never occurs in the output list."""


@dataclass(frozen=True)
class AntigenScore:
    antigen: AntigenId
    count: int
    k_sum: float
    score: float
    verdict: Optional[str] = None


@dataclass(frozen=True)
class SegmentReport:
    segment_index: int
    span: Tuple[int, int]  # inclusive indices into the output list
    scores: Tuple[AntigenScore, ...]
    partial: bool = False

    def by_antigen(self) -> Dict[AntigenId, AntigenScore]:
        return {s.antigen: s for s in self.scores}


def count_antigen(lst: Sequence[OutputPair], alpha: AntigenId) -> int:
    return sum(1 for a, _ in lst if a == alpha)


def sum_k(lst: Sequence[OutputPair], alpha: AntigenId) -> float:
    total = 0.0
    for a, k in lst:
        if a == alpha:
            total += k
    return total


def anomaly_score(lst: Sequence[OutputPair], alpha: AntigenId) -> AntigenScore:
    beta = count_antigen(lst, alpha)
    if beta == 0:
        raise AbsentAntigenError(alpha)
    gamma = sum_k(lst, alpha)
    return AntigenScore(alpha, beta, gamma, gamma / beta)


def classify(score: AntigenScore, threshold: float = 0.0) -> AntigenScore:
    return replace(score, verdict=ANOMALOUS if score.score > threshold else NORMAL)


class _Accumulator:
    """Per-antigen (count, sum) in first-appearance order."""

    def __init__(self):
        self.counts: Dict[AntigenId, int] = {}
        self.sums: Dict[AntigenId, float] = {}

    def add(self, a: AntigenId, k: float) -> None:
        if a in self.counts:
            self.counts[a] += 1
            self.sums[a] += k
        else:
            self.counts[a] = 1
            self.sums[a] = 0.0 + k

    def scores(self, threshold: Optional[float]) -> Tuple[AntigenScore, ...]:
        out = []
        for a, beta in self.counts.items():
            gamma = self.sums[a]
            s = AntigenScore(a, beta, gamma, gamma / beta)
            out.append(classify(s, threshold) if threshold is not None else s)
        return tuple(out)


def analyze(lst: Iterable[OutputPair], threshold: Optional[float] = None) -> Dict[AntigenId, AntigenScore]:
    """Score every antigen type present in ``lst`` in a single pass.

    With ``threshold`` set the scores carry verdicts as well.
    """
    acc = _Accumulator()
    for a, k in lst:
        acc.add(a, k)
    return {s.antigen: s for s in acc.scores(threshold)}


class OnlineAnalyzer:
    """Consumes output pairs one at a time and publishes a report every ``z`` pairs.

    Args:
        segment_size: pairs per segment (``unit="items"``) or signal ticks per
            segment (``unit="time"``).
        threshold: verdict threshold applied to every segment score.
        on_report: called with each :class:`SegmentReport` as soon as it closes.
        unit: ``"items"`` or ``"time"``.
    """

    def __init__(
        self,
        segment_size: int,
        threshold: float = 0.0,
        on_report: Optional[Callable[[SegmentReport], None]] = None,
        unit: str = "items",
    ):
        if int(segment_size) != segment_size or segment_size < 1:
            raise ConfigError(f"segment size must be >= 1, got {segment_size}")
        if unit not in ("items", "time"):
            raise ConfigError(f"segment unit must be 'items' or 'time', got {unit!r}")
        self.z = int(segment_size)
        self.threshold = threshold
        self.on_report = on_report
        self.unit = unit
        self.reports: List[SegmentReport] = []
        self._acc = _Accumulator()
        self._n = 0  # pairs consumed overall
        self._start = 0
        self._window = 0  # index of the current time window

    def feed(self, pair: OutputPair, tick: Optional[int] = None) -> Optional[SegmentReport]:
        """Add one pair. ``tick`` (signal-tick index) is required for time segments."""
        closed = None
        if self.unit == "time":
            if tick is None:
                raise ConfigError("time segmentation needs the emission tick of every pair")
            window = (tick - 1) // self.z
            if window != self._window:
                if self._acc.counts:
                    closed = self._close(partial=False)
                self._window = window
        self._acc.add(pair[0], pair[1])
        self._n += 1
        if self.unit == "items" and self._n - self._start == self.z:
            closed = self._close(partial=False)
        return closed

    def _close(self, partial: bool) -> SegmentReport:
        report = SegmentReport(
            len(self.reports), (self._start, self._n - 1), self._acc.scores(self.threshold), partial
        )
        self.reports.append(report)
        self._acc = _Accumulator()
        self._start = self._n
        if self.on_report is not None:
            self.on_report(report)
        return report

    def close(self) -> Optional[SegmentReport]:
        """Report the trailing segment, if any pairs are pending."""
        if not self._acc.counts:
            return None
        return self._close(partial=True)


def segment_and_analyze(
    pairs: Iterable[OutputPair],
    z: int,
    threshold: float = 0.0,
    ticks: Optional[Sequence[int]] = None,
    unit: str = "items",
) -> List[SegmentReport]:
    analyzer = OnlineAnalyzer(z, threshold, unit=unit)
    if unit == "time":
        if ticks is None:
            raise ConfigError("time segmentation needs emission ticks")
        for p, t in zip(pairs, ticks):
            analyzer.feed(p, t)
    else:
        for p in pairs:
            analyzer.feed(p)
    analyzer.close()
    return analyzer.reports


def final_verdicts(reports: Iterable[SegmentReport], rule: str = "majority") -> Dict[AntigenId, str]:
    """Combine per-segment verdicts into one verdict per antigen type.

    ``majority``: anomalous iff strictly more than half of the segments that
    saw the antigen called it anomalous. ``any``: anomalous iff any did.
    """
    if rule not in ("majority", "any"):
        raise ConfigError(f"unknown verdict rule {rule!r}")
    tallies: Dict[AntigenId, List[int]] = {}
    for r in reports:
        for s in r.scores:
            t = tallies.setdefault(s.antigen, [0, 0])
            t[0] += s.verdict == ANOMALOUS
            t[1] += 1
    if rule == "any":
        return {a: ANOMALOUS if anom > 0 else NORMAL for a, (anom, _) in tallies.items()}
    return {a: ANOMALOUS if 2 * anom > total else NORMAL for a, (anom, total) in tallies.items()}


REPORT_COLUMNS = ("segment_index", "antigen", "count", "k_sum", "score", "verdict", "partial")


def write_report_rows(report: SegmentReport, fh: TextIO) -> None:
    for s in report.scores:
        fh.write(
            f"{report.segment_index},{s.antigen},{s.count},{s.k_sum!r},{s.score!r},{s.verdict},"
            f"{'true' if report.partial else 'false'}\n"
        )


def write_aggregate(reports: Sequence[SegmentReport], fh: TextIO) -> None:
    """One line per antigen: ``antigen,verdict;verdict;...`` in segment order."""
    seen: Dict[AntigenId, List[str]] = {}
    for r in reports:
        for s in r.scores:
            seen.setdefault(s.antigen, []).append(s.verdict)
    fh.write("antigen,verdicts\n")
    for a in sorted(seen):
        fh.write(f"{a},{';'.join(seen[a])}\n")
