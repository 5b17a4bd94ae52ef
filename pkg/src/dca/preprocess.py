"""Signal selection and categorisation.

Raw feature rows are reduced to a handful of candidate signals (selected
features or principal-component projections), min-max normalised, and then
assigned to the PAMP, Danger and Safe categories by a greedy search that
runs the DC population on the training split and minimises the squared
error between normalised anomaly scores and class labels.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, TextIO, Tuple

import numpy as np

from .core import DEFAULT_S_MAX, ConfigError, DataError, SignalVector

PAMP, DANGER, SAFE = 0, 1, 2
CATEGORIES = ("pamp", "danger", "safe")
METHODS = ("manual", "correlation", "infogain", "pca")
MODEL_FORMAT_VERSION = 1

# +1: the category should rise with anomalies; -1: with normal behaviour
_DIRECTION = {PAMP: 1, DANGER: 1, SAFE: -1}


@dataclass
class FeatureTable:
    rows: np.ndarray
    feature_names: List[str]
    labels: Optional[np.ndarray] = None
    row_ids: Optional[np.ndarray] = None
    dropped: int = 0  # rows discarded while loading

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.ndim == 1:
            self.rows = self.rows.reshape(-1, len(self.feature_names)) if self.feature_names else self.rows.reshape(-1, 0)
        if self.rows.shape[1] != len(self.feature_names):
            raise DataError(f"rows have {self.rows.shape[1]} features but {len(self.feature_names)} names were given")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape != (len(self.rows),):
                raise DataError("labels must cover every row")
        if self.row_ids is None:
            self.row_ids = np.arange(len(self.rows))
        else:
            self.row_ids = np.asarray(self.row_ids, dtype=np.int64)

    def __len__(self):
        return len(self.rows)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def subset(self, idx) -> "FeatureTable":
        idx = np.asarray(idx, dtype=int)
        return FeatureTable(
            self.rows[idx],
            list(self.feature_names),
            None if self.labels is None else self.labels[idx],
            self.row_ids[idx],
        )

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise DataError("this method needs labeled data")
        return self.labels


# -- normalisation ---------------------------------------------------------

def fit_min_max(column) -> Tuple[float, float]:
    column = np.asarray(column, dtype=float)
    return float(column.min()), float(column.max())


def min_max_normalize(column, lo: float, hi: float, s_max: float = DEFAULT_S_MAX) -> np.ndarray:
    """Scale ``column`` from the fitted [lo, hi] into [0, s_max], clamping drift."""
    column = np.asarray(column, dtype=float)
    if hi < lo:
        raise ConfigError(f"fitted min {lo} exceeds max {hi}")
    if hi == lo:
        return np.zeros_like(column)
    return np.clip(s_max * (column - lo) / (hi - lo), 0.0, s_max)


# -- ranking ---------------------------------------------------------------

@dataclass(frozen=True)
class Candidate:
    """A candidate signal source.

    ``source`` is the feature index for selection methods or the component
    index for PCA. ``orientation`` is +1/-1 when the association with the
    anomaly label is known, 0 when the search must decide.
    """

    name: str
    source: int
    statistic: float
    orientation: int = 1


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        return 0.0
    return float(xc @ yc) / denom


def _check_d(d: int, m: int) -> None:
    if d < 1 or d >= m:
        raise ConfigError(f"need 1 <= d < m, got d={d}, m={m}")


def _rank(names: Sequence[str], keys: Sequence[float]) -> List[int]:
    # name as tie-break keeps the ranking permutation-equivariant
    return sorted(range(len(names)), key=lambda j: (-keys[j], names[j]))


def correlation_select(table: FeatureTable, d: int) -> List[Candidate]:
    """Top-``d`` features by absolute Pearson correlation with the label."""
    y = table.require_labels()
    _check_d(d, table.n_features)
    rho = [pearson(table.rows[:, j], y) for j in range(table.n_features)]
    order = _rank(table.feature_names, [abs(r) for r in rho])
    return [Candidate(table.feature_names[j], j, rho[j], 1 if rho[j] >= 0 else -1) for j in order[:d]]


def entropy_bits(labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    _, counts = np.unique(labels, return_counts=True)
    p = counts / labels.size
    return float(-(p * np.log2(p)).sum())


def equal_width_bins(x, bins: int, lo: Optional[float] = None, hi: Optional[float] = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    lo = float(x.min()) if lo is None else lo
    hi = float(x.max()) if hi is None else hi
    if hi == lo:
        return np.zeros(len(x), dtype=int)
    idx = np.floor((x - lo) / (hi - lo) * bins).astype(int)
    return np.clip(idx, 0, bins - 1)


def information_gain(x, y, bins: int = 10) -> float:
    """H(y) - H(y | binned x), in bits."""
    if bins < 2:
        raise ConfigError("information gain needs at least 2 bins")
    y = np.asarray(y)
    b = equal_width_bins(x, bins)
    cond = 0.0
    for v in np.unique(b):
        mask = b == v
        cond += mask.mean() * entropy_bits(y[mask])
    return max(float(entropy_bits(y) - cond), 0.0)


def information_gain_select(table: FeatureTable, d: int, bins: int = 10) -> List[Candidate]:
    y = table.require_labels()
    _check_d(d, table.n_features)
    gains = [information_gain(table.rows[:, j], y, bins) for j in range(table.n_features)]
    order = _rank(table.feature_names, gains)
    out = []
    for j in order[:d]:
        rho = pearson(table.rows[:, j], y)
        out.append(Candidate(table.feature_names[j], j, gains[j], 1 if rho >= 0 else -1))
    return out


@dataclass
class PCAResult:
    mean: np.ndarray
    scale: np.ndarray
    components: np.ndarray  # (d, m), rows are unit principal axes
    explained_variance: np.ndarray
    explained_ratio: np.ndarray
    attribute_ranking: List[Tuple[str, float]]

    def project(self, rows) -> np.ndarray:
        z = (np.asarray(rows, dtype=float) - self.mean) / self.scale
        return z @ self.components.T

    def reconstruct(self, projections) -> np.ndarray:
        """Back to the centred (unstandardised) feature space."""
        return (np.asarray(projections) @ self.components) * self.scale


def pca_extract(table: FeatureTable, d: int, standardize: bool = True) -> PCAResult:
    """Principal components of ``table`` by eigendecomposition of its covariance.

    Axes are sorted by explained variance and sign-fixed so the largest
    absolute loading of each is positive. The attribute ranking scores
    each original feature by the variance it contributes to the retained
    components.
    """
    x = table.rows
    n, m = x.shape
    if n < 2:
        raise DataError("PCA needs at least 2 rows")
    if not 1 <= d <= min(m, n - 1):
        raise ConfigError(f"need 1 <= d <= min(m, rows-1), got d={d}")
    mean = x.mean(axis=0)
    scale = np.ones(m)
    if standardize:
        sd = x.std(axis=0, ddof=1)
        scale = np.where(sd > 0, sd, 1.0)
    z = (x - mean) / scale
    cov = z.T @ z / (n - 1)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(-vals, kind="stable")
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order].T
    for row in vecs:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    total = vals.sum()
    ratio = vals / total if total > 0 else np.zeros_like(vals)
    contrib = (vecs[:d] ** 2 * vals[:d, None]).sum(axis=0)
    ranking = [(table.feature_names[j], float(contrib[j])) for j in _rank(table.feature_names, list(contrib))]
    return PCAResult(mean, scale, vecs[:d].copy(), vals[:d].copy(), ratio[:d].copy(), ranking)


# -- categorisation --------------------------------------------------------

Option = Tuple[int, bool]  # (category, inverted)
Assignment = Tuple[Optional[Option], ...]


def category_signals(values: np.ndarray, assignment: Assignment, s_max: float = DEFAULT_S_MAX) -> np.ndarray:
    """Mean of each category's (possibly inverted) normalised candidates; (n, 3)."""
    values = np.asarray(values, dtype=float)
    out = np.zeros((values.shape[0], 3))
    counts = [0, 0, 0]
    for j, opt in enumerate(assignment):
        if opt is None:
            continue
        c, inv = opt
        out[:, c] += s_max - values[:, j] if inv else values[:, j]
        counts[c] += 1
    for c in range(3):
        if counts[c]:
            out[:, c] /= counts[c]
    return out


def mse_to_labels(scores, labels) -> float:
    """Mean squared error between min-max scaled scores and 0/1 labels."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    lo, hi = scores.min(), scores.max()
    norm = (scores - lo) / (hi - lo) if hi > lo else np.zeros_like(scores)
    return float(np.mean((norm - labels) ** 2))


def _eligible(orientation: int, fallback: bool) -> List[Option]:
    opts = []
    for c in (PAMP, DANGER, SAFE):
        if orientation == 0:
            opts += [(c, False), (c, True)]
            continue
        inverted = orientation != _DIRECTION[c]
        if not inverted or fallback:
            opts.append((c, inverted))
    return opts


def _complete(assignment: Assignment) -> bool:
    return {o[0] for o in assignment if o is not None} == {PAMP, DANGER, SAFE}


def categorize_greedy(
    candidates: Sequence[Candidate],
    values: np.ndarray,
    labels,
    score_fn: Callable[[np.ndarray], np.ndarray],
    s_max: float = DEFAULT_S_MAX,
) -> Tuple[Assignment, float]:
    """Greedy search for the candidate-to-category assignment with lowest MSE.

    Args:
        candidates: ranked candidates; list position is the rank.
        values: normalised candidate values on the training rows, (n, d).
        labels: 0/1 label per training row.
        score_fn: maps (n, 3) signals to one anomaly score per training row.

    Returns:
        ``(assignment, mse)``; unused candidates map to ``None``.

    Every category is first seeded with one candidate, choosing the seed
    triple with lowest MSE among orientation-respecting options. Options
    that invert a candidate against its known orientation are only opened
    when no orientation-respecting seed exists. The search then applies the
    best single add, move or swap until none lowers the error.
    """
    d = len(candidates)
    if d < 3:
        raise ConfigError(f"categorisation needs at least 3 candidates, got {d}")
    labels = np.asarray(labels)
    if len(np.unique(labels)) < 2:
        raise DataError("training labels are all one class")
    values = np.asarray(values, dtype=float)
    cache: Dict[Assignment, float] = {}

    def cost(a: Assignment) -> float:
        if a not in cache:
            cache[a] = mse_to_labels(score_fn(category_signals(values, a, s_max)), labels)
        return cache[a]

    fallback = False
    seeds = _seeds(candidates, fallback)
    if not seeds:
        fallback = True
        seeds = _seeds(candidates, fallback)
    best = min(seeds, key=lambda a: cost(a))  # min keeps the first of equal costs
    best_cost = cost(best)

    options = [_eligible(c.orientation, fallback) for c in candidates]
    while True:
        move, move_cost = None, best_cost
        for a in _neighbours(best, options, candidates, fallback):
            ca = cost(a)
            if ca < move_cost - 1e-12:
                move, move_cost = a, ca
        if move is None:
            return best, best_cost
        best, best_cost = move, move_cost


def _seeds(candidates: Sequence[Candidate], fallback: bool) -> List[Assignment]:
    d = len(candidates)
    out = []
    for trio in itertools.permutations(range(d), 3):
        per_cat = []
        for c, j in zip((PAMP, DANGER, SAFE), trio):
            per_cat.append([o for o in _eligible(candidates[j].orientation, fallback) if o[0] == c])
        for combo in itertools.product(*per_cat):
            a: List[Optional[Option]] = [None] * d
            for j, o in zip(trio, combo):
                a[j] = o
            out.append(tuple(a))
    return out


def _swap_option(cand: Candidate, target: Option, own: Option, fallback: bool) -> Optional[Option]:
    c = target[0]
    if cand.orientation == 0:
        return (c, own[1])
    inverted = cand.orientation != _DIRECTION[c]
    if inverted and not fallback:
        return None
    return (c, inverted)


def _neighbours(a: Assignment, options, candidates, fallback: bool):
    d = len(a)
    for j in range(d):
        for o in options[j]:
            if o == a[j]:
                continue
            b = list(a)
            b[j] = o
            b = tuple(b)
            if _complete(b):
                yield b
    for i, j in itertools.combinations(range(d), 2):
        if a[i] is None or a[j] is None or a[i][0] == a[j][0]:
            continue
        oi = _swap_option(candidates[i], a[j], a[i], fallback)
        oj = _swap_option(candidates[j], a[i], a[j], fallback)
        if oi is None or oj is None:
            continue
        b = list(a)
        b[i], b[j] = oi, oj
        yield tuple(b)


def exhaustive_best(
    candidates: Sequence[Candidate],
    values: np.ndarray,
    labels,
    score_fn: Callable[[np.ndarray], np.ndarray],
    s_max: float = DEFAULT_S_MAX,
    fallback: bool = False,
    use_all: bool = False,
) -> Tuple[Assignment, float]:
    """Brute-force minimum over every valid assignment (small ``d`` only)."""
    per = []
    for c in candidates:
        opts: List[Optional[Option]] = list(_eligible(c.orientation, fallback))
        if not use_all:
            opts.append(None)
        per.append(opts)
    best, best_cost = None, math.inf
    for a in itertools.product(*per):
        if not _complete(a):
            continue
        ca = mse_to_labels(score_fn(category_signals(values, a, s_max)), labels)
        if ca < best_cost:
            best, best_cost = a, ca
    return best, best_cost


# -- fitted model ----------------------------------------------------------

@dataclass
class PreprocessModel:
    method: str
    feature_names: List[str]
    candidates: List[Candidate]
    lo: List[float]
    hi: List[float]
    assignment: List[Option]
    s_max: float = DEFAULT_S_MAX
    pca: Optional[PCAResult] = None
    seed: int = 0
    unused: List[Candidate] = field(default_factory=list)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if not (len(self.candidates) == len(self.lo) == len(self.hi) == len(self.assignment)):
            raise ConfigError("candidates, ranges and assignment must have equal length")
        if not _complete(tuple(self.assignment)):
            raise ConfigError("every signal category needs at least one candidate")

    def raw_candidates(self, rows) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape[1] != len(self.feature_names):
            raise DataError(f"row has {rows.shape[1]} features, model expects {len(self.feature_names)}")
        if self.pca is not None:
            proj = self.pca.project(rows)
            return proj[:, [c.source for c in self.candidates]]
        return rows[:, [c.source for c in self.candidates]]

    def candidate_values(self, rows) -> np.ndarray:
        raw = self.raw_candidates(rows)
        cols = [min_max_normalize(raw[:, j], self.lo[j], self.hi[j], self.s_max) for j in range(raw.shape[1])]
        return np.column_stack(cols) if cols else np.zeros((len(raw), 0))

    def transform(self, rows) -> np.ndarray:
        """Signals for many rows at once, shape (n, 3)."""
        return category_signals(self.candidate_values(rows), tuple(self.assignment), self.s_max)

    def apply(self, row) -> SignalVector:
        p, d, s = self.transform(np.asarray(row, dtype=float).reshape(1, -1))[0]
        return SignalVector(float(p), float(d), float(s))

    # serialisation: one record per line, floats in repr() form so a
    # reloaded model reproduces every signal bit for bit
    def dump(self, fh: TextIO, header: Sequence[str] = ()) -> None:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(f"dca-preprocess-model {MODEL_FORMAT_VERSION}\n")
        fh.write(f"method {self.method}\n")
        fh.write(f"seed {self.seed}\n")
        fh.write(f"s_max {self.s_max!r}\n")
        fh.write("features " + "\t".join(self.feature_names) + "\n")
        for j, c in enumerate(self.candidates):
            cat, inv = self.assignment[j]
            fh.write(
                f"candidate {c.source} {float(c.statistic)!r} {c.orientation} {self.lo[j]!r} {self.hi[j]!r} "
                f"{CATEGORIES[cat]} {int(inv)} {c.name}\n"
            )
        for c in self.unused:
            fh.write(f"unused {c.source} {float(c.statistic)!r} {c.orientation} {c.name}\n")
        if self.pca is not None:
            p = self.pca
            fh.write("pca_mean " + " ".join(repr(float(v)) for v in p.mean) + "\n")
            fh.write("pca_scale " + " ".join(repr(float(v)) for v in p.scale) + "\n")
            for k, row in enumerate(p.components):
                fh.write(
                    f"pca_component {k} {float(p.explained_variance[k])!r} {float(p.explained_ratio[k])!r} "
                    + " ".join(repr(float(v)) for v in row)
                    + "\n"
                )
            for name, v in p.attribute_ranking:
                fh.write(f"pca_attribute {v!r} {name}\n")
        fh.write("end\n")

    @classmethod
    def load(cls, fh: TextIO) -> "PreprocessModel":
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
        if not lines or not lines[0].startswith("dca-preprocess-model "):
            raise DataError("not a preprocess model file")
        version = int(lines[0].split()[1])
        if version != MODEL_FORMAT_VERSION:
            raise DataError(f"unsupported model format version {version}")
        kw: dict = {"candidates": [], "lo": [], "hi": [], "assignment": [], "unused": []}
        pca: dict = {"components": [], "var": [], "ratio": [], "ranking": []}
        for line in lines[1:]:
            key, _, rest = line.partition(" ")
            if key == "method":
                kw["method"] = rest
            elif key == "seed":
                kw["seed"] = int(rest)
            elif key == "s_max":
                kw["s_max"] = float(rest)
            elif key == "features":
                kw["feature_names"] = rest.split("\t")
            elif key == "candidate":
                src, stat, ori, lo, hi, cat, inv, name = rest.split(" ", 7)
                kw["candidates"].append(Candidate(name, int(src), float(stat), int(ori)))
                kw["lo"].append(float(lo))
                kw["hi"].append(float(hi))
                kw["assignment"].append((CATEGORIES.index(cat), bool(int(inv))))
            elif key == "unused":
                src, stat, ori, name = rest.split(" ", 3)
                kw["unused"].append(Candidate(name, int(src), float(stat), int(ori)))
            elif key == "pca_mean":
                pca["mean"] = np.array([float(v) for v in rest.split()])
            elif key == "pca_scale":
                pca["scale"] = np.array([float(v) for v in rest.split()])
            elif key == "pca_component":
                parts = rest.split()
                pca["var"].append(float(parts[1]))
                pca["ratio"].append(float(parts[2]))
                pca["components"].append([float(v) for v in parts[3:]])
            elif key == "pca_attribute":
                v, name = rest.split(" ", 1)
                pca["ranking"].append((name, float(v)))
            elif key == "end":
                break
            else:
                raise DataError(f"unknown model record {key!r}")
        if "mean" in pca:
            kw["pca"] = PCAResult(
                pca["mean"],
                pca["scale"],
                np.array(pca["components"]),
                np.array(pca["var"]),
                np.array(pca["ratio"]),
                pca["ranking"],
            )
        return cls(**kw)


def parse_manual_assignment(spec: Mapping[str, Sequence[str]], feature_names: Sequence[str]):
    """``{"pamp": ["f1"], "danger": [...], "safe": ["!f3"]}`` -> candidates + options.

    A leading ``!`` inverts the feature (``s_max - v``).
    """
    cands, opts = [], []
    for c, cat in enumerate(CATEGORIES):
        for raw in spec.get(cat, ()):
            name = raw.strip()
            inv = name.startswith("!")
            name = name.lstrip("!")
            if name not in feature_names:
                raise ConfigError(f"manual assignment names unknown feature {name!r}")
            cands.append(Candidate(name, list(feature_names).index(name), math.nan, 0))
            opts.append((c, inv))
    return cands, opts


def fit_model(
    table: FeatureTable,
    method: str,
    score_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    d: int = 3,
    bins: int = 10,
    s_max: float = DEFAULT_S_MAX,
    standardize: bool = True,
    manual: Optional[Mapping[str, Sequence[str]]] = None,
    search_rows: Optional[np.ndarray] = None,
    seed: int = 0,
) -> PreprocessModel:
    """Fit normalisation ranges, pick candidates and categorise them.

    Args:
        score_fn: turns (n, 3) training signals into per-row anomaly scores
            for the MSE search; required for every method except manual.
        search_rows: optional subset of row positions used for the search
            (ranges and rankings are always fitted on the full table).
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    if method == "manual":
        if not manual:
            raise ConfigError("manual method needs an explicit category assignment")
        cands, opts = parse_manual_assignment(manual, table.feature_names)
        raw = table.rows[:, [c.source for c in cands]]
        ranges = [fit_min_max(raw[:, j]) for j in range(len(cands))]
        return PreprocessModel(
            method, list(table.feature_names), cands, [r[0] for r in ranges], [r[1] for r in ranges], opts, s_max, None, seed
        )

    labels = table.require_labels()
    pca = None
    if method == "correlation":
        cands = correlation_select(table, d)
        raw = table.rows[:, [c.source for c in cands]]
    elif method == "infogain":
        cands = information_gain_select(table, d, bins)
        raw = table.rows[:, [c.source for c in cands]]
    else:
        _check_d(d, table.n_features)
        pca = pca_extract(table, d, standardize)
        cands = [Candidate(f"pc{k + 1}", k, float(pca.explained_ratio[k]), 0) for k in range(d)]
        raw = pca.project(table.rows)
    ranges = [fit_min_max(raw[:, j]) for j in range(len(cands))]
    values = np.column_stack([min_max_normalize(raw[:, j], *ranges[j], s_max) for j in range(len(cands))])
    if score_fn is None:
        raise ConfigError("automated categorisation needs a score function")
    if search_rows is not None:
        values, labels = values[search_rows], labels[search_rows]
    assignment, _ = categorize_greedy(cands, values, labels, score_fn, s_max)
    used = [j for j, o in enumerate(assignment) if o is not None]
    return PreprocessModel(
        method,
        list(table.feature_names),
        [cands[j] for j in used],
        [ranges[j][0] for j in used],
        [ranges[j][1] for j in used],
        [assignment[j] for j in used],
        s_max,
        pca,
        seed,
        [cands[j] for j in range(len(cands)) if assignment[j] is None],
    )
