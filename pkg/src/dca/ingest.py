"""Dataset loading, stream synthesis, fold splitting and TPR/FPR evaluation."""

from __future__ import annotations

import csv
import gzip
import io
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .analysis import ANOMALOUS, OnlineAnalyzer, SegmentReport, analyze, final_verdicts
from .core import AntigenId, ConfigError, DataError, SchemaError, SignalVector, StreamEvent
from .engine import DCAEngine, EngineConfig
from .preprocess import FeatureTable, PreprocessModel, fit_model

DATA_DIR = Path(__file__).parent / "data"
BREAST_CANCER_CSV = DATA_DIR / "breast-cancer-wisconsin.csv"

KDD_COLUMNS = [
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land",
    "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in", "num_compromised",
    "root_shell", "su_attempted", "num_root", "num_file_creations", "num_shells",
    "num_access_files", "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
    "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate", "srv_rerror_rate",
    "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
    "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
    "dst_host_srv_serror_rate", "dst_host_rerror_rate", "dst_host_srv_rerror_rate", "label",
]
KDD_SYMBOLIC = ("protocol_type", "service", "flag")

WILDCARD = "*"


@dataclass
class DatasetSpec:
    """Where a dataset lives and how its columns map onto the pipeline.

    ``antigen_rule`` is ``"row-index"`` (0-based data row in the file) or
    ``"column:<name>"`` (integer column value). ``label_map`` maps raw label
    strings to 0/1; the key ``"*"`` catches every other value.
    """

    path: str
    label_column: Optional[str]
    feature_columns: Optional[List[str]] = None
    exclude_columns: List[str] = field(default_factory=list)
    label_map: Mapping[str, int] = field(default_factory=dict)
    antigen_rule: str = "row-index"
    antigens_per_signal: int = 1
    column_names: Optional[List[str]] = None  # for header-less files
    order: str = "file"  # or "class": normal rows first, then anomalous

    def __post_init__(self):
        if self.order not in ("file", "class"):
            raise ConfigError(f"unknown stream order {self.order!r}")
        if self.antigens_per_signal < 1:
            raise ConfigError("antigens_per_signal must be >= 1")
        if self.antigen_rule != "row-index" and not self.antigen_rule.startswith("column:"):
            raise ConfigError(f"unknown antigen rule {self.antigen_rule!r}")
        bad = {v for v in self.label_map.values() if v not in (0, 1)}
        if bad:
            raise ConfigError(f"label map values must be 0 or 1, got {sorted(bad)}")


def breast_cancer_spec(path: Optional[str] = None) -> DatasetSpec:
    """UCI Wisconsin Breast Cancer: class 2 benign -> 0, 4 malignant -> 1.

    Streams are class-ordered (all benign records, then all malignant), the
    usual way this dataset is presented to the DCA: the population
    correlates signals over time, so an interleaved file order would smear
    every cell's window across both classes.
    """
    return DatasetSpec(
        path=str(path or BREAST_CANCER_CSV),
        label_column="class",
        exclude_columns=["sample_code_number"],
        label_map={"2": 0, "4": 1},
        order="class",
    )


def kdd_spec(path: str) -> DatasetSpec:
    """KDD Cup 99 (raw, header-less): ``normal.`` -> 0, every attack -> 1."""
    return DatasetSpec(
        path=str(path),
        label_column="label",
        exclude_columns=list(KDD_SYMBOLIC),
        label_map={"normal.": 0, "normal": 0, WILDCARD: 1},
        column_names=list(KDD_COLUMNS),
    )


def _open_text(path: Path):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def load_csv(spec: DatasetSpec) -> FeatureTable:
    """Parse ``spec.path`` into a :class:`FeatureTable`.

    Rows whose feature cells do not parse as numbers (``?`` and the like)
    are dropped and counted in ``table.dropped``.
    """
    path = Path(spec.path)
    if not path.exists():
        raise DataError(f"dataset not found: {path}")
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        if spec.column_names is not None:
            header = list(spec.column_names)
        else:
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path} is empty")
            header = [h.strip() for h in header]
        antigen_col = spec.antigen_rule.split(":", 1)[1] if spec.antigen_rule.startswith("column:") else None
        needed = ([spec.label_column] if spec.label_column else []) + ([antigen_col] if antigen_col else [])
        if spec.feature_columns is not None:
            features = list(spec.feature_columns)
        else:
            skip = set(spec.exclude_columns) | set(needed)
            features = [h for h in header if h not in skip]
        missing = [c for c in needed + features if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        fidx = [header.index(c) for c in features]
        lidx = header.index(spec.label_column) if spec.label_column else None
        aidx = header.index(antigen_col) if antigen_col else None

        rows: List[List[float]] = []
        labels: List[int] = []
        ids: List[int] = []
        unmapped = set()
        dropped = 0
        n = -1
        for n, rec in enumerate(reader):
            if not rec:
                continue
            if len(rec) != len(header):
                dropped += 1
                continue
            try:
                vals = [float(rec[j]) for j in fidx]
            except ValueError:
                dropped += 1
                continue
            if not all(math.isfinite(v) for v in vals):
                dropped += 1
                continue
            raw_label = rec[lidx].strip() if lidx is not None else None
            if raw_label is None:
                labels.append(0)
            elif raw_label in spec.label_map:
                labels.append(spec.label_map[raw_label])
            elif WILDCARD in spec.label_map:
                labels.append(spec.label_map[WILDCARD])
            else:
                unmapped.add(raw_label)
                continue
            if aidx is None:
                ids.append(n)
            else:
                try:
                    ids.append(int(rec[aidx]))
                except ValueError:
                    dropped += 1
                    labels.pop()
                    continue
            rows.append(vals)
    if unmapped:
        raise SchemaError(f"{path}: unmapped label value(s) {sorted(unmapped)}")
    if n < 0 or (not rows and dropped == 0):
        raise DataError(f"{path} has no data rows")
    return FeatureTable(
        np.array(rows, dtype=float).reshape(len(rows), len(features)),
        features,
        np.array(labels, dtype=int) if lidx is not None else None,
        np.array(ids, dtype=np.int64),
        dropped,
    )


def order_rows(table: FeatureTable, order: str = "file") -> FeatureTable:
    """Reorder rows for streaming; ``class`` is a stable sort by label."""
    if order == "file":
        return table
    if order != "class":
        raise ConfigError(f"unknown stream order {order!r}")
    return table.subset(np.argsort(table.require_labels(), kind="stable"))


def synthesize_stream(table: FeatureTable, model: PreprocessModel, antigens_per_signal: int = 1) -> List[StreamEvent]:
    """Per row: ``antigens_per_signal`` antigen events, then the row's signal."""
    signals = model.transform(table.rows) if len(table) else np.zeros((0, 3))
    events = []
    t = 0
    for a, (p, d, s) in zip(table.row_ids.tolist(), signals.tolist()):
        for _ in range(antigens_per_signal):
            events.append(StreamEvent(t, int(a)))
            t += 1
        events.append(StreamEvent(t, SignalVector(p, d, s)))
        t += 1
    return events


def kfold(labels, k: int, seed: int = 0) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold: ``[(train_idx, test_idx), ...]`` with sorted indices.

    Rows of each class are shuffled with ``seed`` and dealt round-robin,
    continuing across classes, so fold sizes differ by at most one overall
    and per class.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if k < 2:
        raise ConfigError("k must be >= 2")
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of rows ({n})")
    rng = np.random.default_rng(seed)
    order = []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        order.extend(rng.permutation(members).tolist())
    fold_of = np.empty(n, dtype=int)
    fold_of[np.array(order, dtype=int)] = np.arange(n) % k
    return [(np.flatnonzero(fold_of != f), np.flatnonzero(fold_of == f)) for f in range(k)]


def stratified_split(labels, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """50/50 stratified (train, test) split."""
    return kfold(labels, 2, seed)[0]


def sample_rows(labels, n: int, seed: int = 0) -> np.ndarray:
    """Seeded sample of ``n`` row positions, returned in original order."""
    total = len(labels)
    if n >= total:
        return np.arange(total)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(total, size=n, replace=False))


# -- evaluation ------------------------------------------------------------

@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def tpr(self) -> Optional[float]:
        pos = self.tp + self.fn
        return self.tp / pos if pos else None

    @property
    def fpr(self) -> Optional[float]:
        neg = self.fp + self.tn
        return self.fp / neg if neg else None

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


def evaluate(verdicts: Mapping[AntigenId, str], truth: Mapping[AntigenId, int]) -> Confusion:
    tp = fp = tn = fn = 0
    for a, v in verdicts.items():
        if a not in truth:
            raise DataError(f"antigen {a} has no truth label")
        positive = v == ANOMALOUS
        if truth[a]:
            tp += positive
            fn += not positive
        else:
            fp += positive
            tn += not positive
    return Confusion(tp, fp, tn, fn)


def fmt_rate(r: Optional[float]) -> str:
    return "N/A" if r is None else f"{r:.6f}"


@dataclass
class PipelineConfig:
    method: str = "pca"
    d: int = 3
    bins: int = 10
    standardize: bool = True
    manual: Optional[Dict[str, List[str]]] = None
    engine: EngineConfig = field(default_factory=lambda: EngineConfig(flush_at_end=True))
    segment_size: int = 1000
    segment_unit: str = "items"
    threshold: float = 0.0
    threshold_mode: str = "fixed"  # or "midpoint"
    verdict_rule: str = "majority"
    antigens_per_signal: int = 1
    search_max_rows: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.threshold_mode not in ("fixed", "midpoint"):
            raise ConfigError(f"unknown threshold mode {self.threshold_mode!r}")
        if self.verdict_rule not in ("majority", "any"):
            raise ConfigError(f"unknown verdict rule {self.verdict_rule!r}")


class DCAScorer:
    """Score function for the categorisation search.

    Runs a fresh population over the training rows (antigen = row position)
    and returns the offline anomaly score of every row.
    """

    def __init__(self, engine: EngineConfig, antigens_per_signal: int = 1):
        self.engine = replace(engine, flush_at_end=True)
        self.antigens_per_signal = antigens_per_signal

    def __call__(self, signals: np.ndarray) -> np.ndarray:
        n = len(signals)
        eng = DCAEngine(self.engine)
        eng.feed_rows(range(n), signals, self.antigens_per_signal)
        eng.flush()
        scores = np.zeros(n)
        for a, s in analyze(eng.output).items():
            scores[a] = s.score
        return scores


def antigen_truth(table: FeatureTable) -> Dict[AntigenId, int]:
    """Truth per antigen type: anomalous if any of its rows is."""
    truth: Dict[AntigenId, int] = {}
    for a, y in zip(table.row_ids.tolist(), table.labels.tolist()):
        truth[a] = max(truth.get(a, 0), int(y))
    return truth


@dataclass
class DetectionRun:
    pairs: list
    emission_ticks: list
    reports: List[SegmentReport]
    verdicts: Dict[AntigenId, str]
    unscored: List[AntigenId]
    events: int
    seconds: float


def detect(
    table: FeatureTable,
    model: PreprocessModel,
    cfg: PipelineConfig,
    threshold: float,
    pair_sink=None,
    report_sink=None,
) -> DetectionRun:
    """Run the population over ``table`` with online segmented analysis."""
    analyzer = OnlineAnalyzer(cfg.segment_size, threshold, on_report=report_sink, unit=cfg.segment_unit)

    def on_pair(pair):
        if pair_sink is not None:
            pair_sink(pair)
        analyzer.feed(pair, engine.signal_ticks)

    engine = DCAEngine(cfg.engine, sink=on_pair)
    signals = model.transform(table.rows) if len(table) else np.zeros((0, 3))
    start = time.perf_counter()
    engine.feed_rows(table.row_ids.tolist(), signals, cfg.antigens_per_signal)
    if cfg.engine.flush_at_end:
        engine.flush()
    analyzer.close()
    seconds = time.perf_counter() - start
    verdicts = final_verdicts(analyzer.reports, cfg.verdict_rule)
    # antigens never emitted (flush disabled) raise no alert
    unscored = sorted(set(table.row_ids.tolist()) - set(verdicts))
    for a in unscored:
        verdicts[a] = "normal"
    return DetectionRun(
        engine.output, engine.emission_ticks, analyzer.reports, verdicts, unscored, engine.tick, seconds
    )


def fit_for_training(train: FeatureTable, cfg: PipelineConfig) -> PreprocessModel:
    scorer = DCAScorer(cfg.engine, cfg.antigens_per_signal)
    search = None
    if cfg.method != "manual" and len(train) > cfg.search_max_rows:
        search = sample_rows(train.labels, cfg.search_max_rows, cfg.seed)
    return fit_model(
        train,
        cfg.method,
        score_fn=scorer,
        d=cfg.d,
        bins=cfg.bins,
        standardize=cfg.standardize,
        manual=cfg.manual,
        search_rows=search,
        seed=cfg.seed,
    )


def midpoint_threshold(train: FeatureTable, model: PreprocessModel, cfg: PipelineConfig) -> float:
    """Midpoint of the class-conditional mean training scores."""
    scores = DCAScorer(cfg.engine, cfg.antigens_per_signal)(model.transform(train.rows))
    y = train.labels
    if y.min() == y.max():
        raise DataError("midpoint threshold needs both classes in the training split")
    return float((scores[y == 0].mean() + scores[y == 1].mean()) / 2)


@dataclass
class FoldResult:
    fold: int
    confusion: Confusion
    threshold: float
    n_train: int
    n_test: int
    events: int
    seconds: float
    scores: List[Tuple[AntigenId, float, int]]  # offline (antigen, K, truth) for plotting
    model: PreprocessModel


def run_fold(table: FeatureTable, train_idx, test_idx, cfg: PipelineConfig, fold: int = 0) -> FoldResult:
    train, test = table.subset(train_idx), table.subset(test_idx)
    model = fit_for_training(train, cfg)
    threshold = cfg.threshold if cfg.threshold_mode == "fixed" else midpoint_threshold(train, model, cfg)
    run = detect(test, model, cfg, threshold)
    truth = antigen_truth(test)
    conf = evaluate(run.verdicts, truth)
    offline = analyze(run.pairs)
    scores = [(a, offline[a].score, truth[a]) for a in sorted(offline)]
    return FoldResult(fold, conf, threshold, len(train), len(test), run.events, run.seconds, scores, model)


@dataclass
class EvalReport:
    folds: List[FoldResult]
    config: PipelineConfig
    header: List[str] = field(default_factory=list)

    @property
    def total(self) -> Confusion:
        out = Confusion(0, 0, 0, 0)
        for f in self.folds:
            out = out + f.confusion
        return out

    def write_csv(self, fh) -> None:
        """Machine-readable report: one row per fold plus the pooled aggregate."""
        for line in self.header:
            fh.write(f"# {line}\n")
        fh.write("fold,tp,fp,tn,fn,tpr,fpr,threshold,n_train,n_test\n")
        for f in self.folds:
            c = f.confusion
            fh.write(
                f"{f.fold},{c.tp},{c.fp},{c.tn},{c.fn},{fmt_rate(c.tpr)},{fmt_rate(c.fpr)},"
                f"{f.threshold!r},{f.n_train},{f.n_test}\n"
            )
        c = self.total
        fh.write(f"aggregate,{c.tp},{c.fp},{c.tn},{c.fn},{fmt_rate(c.tpr)},{fmt_rate(c.fpr)},,,\n")

    def write_text(self, fh) -> None:
        """Human-readable summary, including timings."""
        for line in self.header:
            fh.write(f"{line}\n")
        fh.write("\n")
        fh.write(f"{'fold':>9} {'TPR':>9} {'FPR':>9} {'TP':>6} {'FP':>6} {'TN':>6} {'FN':>6} {'events/s':>12}\n")
        for f in self.folds:
            c = f.confusion
            rate = f.events / f.seconds if f.seconds > 0 else float("inf")
            fh.write(
                f"{f.fold:>9} {fmt_rate(c.tpr):>9} {fmt_rate(c.fpr):>9} {c.tp:>6} {c.fp:>6} {c.tn:>6} {c.fn:>6} {rate:>12.0f}\n"
            )
        c = self.total
        fh.write(f"{'aggregate':>9} {fmt_rate(c.tpr):>9} {fmt_rate(c.fpr):>9} {c.tp:>6} {c.fp:>6} {c.tn:>6} {c.fn:>6}\n")
        fh.write(f"wall-clock seconds (detection): {sum(f.seconds for f in self.folds):.3f}\n")

    def write_scores(self, fh) -> None:
        """Per-fold score distributions for external plotting."""
        for line in self.header:
            fh.write(f"# {line}\n")
        fh.write("fold,antigen,score,truth\n")
        for f in self.folds:
            for a, s, y in f.scores:
                fh.write(f"{f.fold},{a},{s!r},{y}\n")


def cross_validate(table: FeatureTable, cfg: PipelineConfig, k: int = 0) -> EvalReport:
    """``k >= 2``: stratified k-fold; ``k == 0``: a single 50/50 stratified split."""
    if table.labels is None:
        raise DataError("evaluation needs labeled data")
    if k == 0:
        splits = [stratified_split(table.labels, cfg.seed)]
    else:
        splits = kfold(table.labels, k, cfg.seed)
    folds = [run_fold(table, tr, te, cfg, i) for i, (tr, te) in enumerate(splits)]
    return EvalReport(folds, cfg)

