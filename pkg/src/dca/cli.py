"""Command-line front end: ``dca preprocess|run|evaluate|sweep``.

Settings come from built-in defaults, then an optional INI-style config
file (``--config``), then command-line flags. Every file written starts
with ``#`` lines echoing the effective configuration and seed.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional

from . import __version__
from .analysis import REPORT_COLUMNS, write_aggregate, write_report_rows
from .core import ConfigError, DCAError, DataError, WeightMatrix
from .engine import EngineConfig, PairFileWriter
from .ingest import (
    DatasetSpec,
    EvalReport,
    PipelineConfig,
    breast_cancer_spec,
    cross_validate,
    detect,
    fit_for_training,
    fmt_rate,
    kdd_spec,
    load_csv,
    midpoint_threshold,
    order_rows,
    sample_rows,
    stratified_split,
)
from .preprocess import CATEGORIES, PreprocessModel

OUT_ENV = "DCA_OUT"

DEFAULTS: Dict[str, Dict[str, str]] = {
    "dataset": {
        "preset": "breast-cancer",
        "path": "",
        "label_column": "",
        "features": "",
        "exclude": "",
        "label_map": "",
        "antigen": "row-index",
        "antigens_per_signal": "1",
        "order": "",
        "header": "true",
        "sample_rows": "0",
    },
    "preprocess": {
        "method": "pca",
        "d": "3",
        "bins": "10",
        "standardize": "true",
        "search_max_rows": "5000",
        "pamp": "",
        "danger": "",
        "safe": "",
    },
    "engine": {
        "population": "100",
        "lifespan_distribution": "evenly-spaced",
        "lifespan_min": "500",
        "lifespan_max": "2000",
        "lifespan_mean": "1250",
        "lifespan_std": "400",
        "gaussian_floor": "0.01",
        "weights_csm": "2,1,2",
        "weights_k": "2,1,-3",
        "flush": "true",
    },
    "analysis": {
        "segment_size": "1000",
        "segment_unit": "items",
        "threshold": "0",
        "threshold_mode": "fixed",
        "verdict_rule": "majority",
    },
    "run": {
        "seed": "0",
        "out": "",
        "folds": "0",
        "model": "",
        "rows": "test",
    },
}

# flag name -> (section, key)
FLAG_KEYS = {
    "seed": ("run", "seed"),
    "out": ("run", "out"),
    "segment_size": ("analysis", "segment_size"),
    "threshold": ("analysis", "threshold"),
    "threshold_mode": ("analysis", "threshold_mode"),
    "verdict_rule": ("analysis", "verdict_rule"),
    "population": ("engine", "population"),
    "method": ("preprocess", "method"),
    "dataset": ("dataset", "preset"),
    "data": ("dataset", "path"),
    "folds": ("run", "folds"),
    "model": ("run", "model"),
    "sample_rows": ("dataset", "sample_rows"),
    "rows": ("run", "rows"),
}


def _bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _list(v: str) -> List[str]:
    return [x.strip() for x in v.split(",") if x.strip()]


@dataclass
class RunConfig:
    settings: Dict[str, Dict[str, str]]

    @classmethod
    def build(cls, config_path: Optional[str] = None, overrides: Optional[Dict[str, str]] = None) -> "RunConfig":
        settings = {s: dict(kv) for s, kv in DEFAULTS.items()}
        if config_path:
            if not Path(config_path).exists():
                raise ConfigError(f"config file not found: {config_path}")
            parser = configparser.ConfigParser(inline_comment_prefixes=(";",))
            parser.read(config_path, encoding="utf-8")
            for section in parser.sections():
                if section not in settings:
                    raise ConfigError(f"unknown config section [{section}]")
                for key, value in parser.items(section):
                    if key not in settings[section]:
                        raise ConfigError(f"unknown key {key!r} in [{section}]")
                    settings[section][key] = value
        for flag, value in (overrides or {}).items():
            if value is None:
                continue
            section, key = FLAG_KEYS[flag]
            settings[section][key] = str(value)
        if not settings["run"]["out"]:
            settings["run"]["out"] = os.environ.get(OUT_ENV, "dca-out")
        return cls(settings)

    def get(self, section: str, key: str) -> str:
        return self.settings[section][key]

    @property
    def seed(self) -> int:
        return int(self.get("run", "seed"))

    @property
    def out_dir(self) -> Path:
        return Path(self.get("run", "out"))

    def header(self, command: str) -> List[str]:
        lines = [f"dca {__version__} command={command} seed={self.seed}"]
        for section in sorted(self.settings):
            for key in sorted(self.settings[section]):
                if (section, key) == ("run", "out"):
                    continue
                lines.append(f"{section}.{key}={self.settings[section][key]}")
        return lines

    def dataset_spec(self) -> DatasetSpec:
        d = self.settings["dataset"]
        preset, path = d["preset"], d["path"]
        if preset == "breast-cancer":
            spec = breast_cancer_spec(path or None)
        elif preset == "kdd":
            if not path:
                raise ConfigError("the kdd preset needs a dataset path (--data)")
            spec = kdd_spec(path)
        elif preset in ("", "none", "csv"):
            if not path:
                raise ConfigError("dataset path is required without a preset")
            spec = DatasetSpec(path=path, label_column=d["label_column"] or None)
        else:
            raise ConfigError(f"unknown dataset preset {preset!r}")
        changes = {}
        if d["label_column"]:
            changes["label_column"] = d["label_column"]
        if d["features"]:
            changes["feature_columns"] = _list(d["features"])
        if d["exclude"]:
            changes["exclude_columns"] = _list(d["exclude"])
        if d["label_map"]:
            lm = {}
            for item in _list(d["label_map"]):
                raw, _, val = item.rpartition(":")
                lm[raw] = int(val)
            changes["label_map"] = lm
        if d["antigen"] != "row-index":
            changes["antigen_rule"] = d["antigen"]
        if d["order"]:
            changes["order"] = d["order"]
        if not _bool(d["header"]) and spec.column_names is None:
            raise ConfigError("header-less files need a preset that names the columns")
        changes["antigens_per_signal"] = int(d["antigens_per_signal"])
        return replace(spec, **changes)

    def engine_config(self) -> EngineConfig:
        e = self.settings["engine"]
        return EngineConfig(
            population_size=int(e["population"]),
            lifespan_distribution=e["lifespan_distribution"],
            lifespan_min=float(e["lifespan_min"]),
            lifespan_max=float(e["lifespan_max"]),
            lifespan_mean=float(e["lifespan_mean"]),
            lifespan_std=float(e["lifespan_std"]),
            gaussian_floor=float(e["gaussian_floor"]),
            rng_seed=self.seed,
            weights=WeightMatrix.from_rows(_list(e["weights_csm"]), _list(e["weights_k"])),
            flush_at_end=_bool(e["flush"]),
        )

    def pipeline(self) -> PipelineConfig:
        p, a = self.settings["preprocess"], self.settings["analysis"]
        manual = None
        if p["method"] == "manual":
            manual = {c: _list(p[c]) for c in CATEGORIES}
        return PipelineConfig(
            method=p["method"],
            d=int(p["d"]),
            bins=int(p["bins"]),
            standardize=_bool(p["standardize"]),
            manual=manual,
            engine=self.engine_config(),
            segment_size=int(a["segment_size"]),
            segment_unit=a["segment_unit"],
            threshold=float(a["threshold"]),
            threshold_mode=a["threshold_mode"],
            verdict_rule=a["verdict_rule"],
            antigens_per_signal=int(self.settings["dataset"]["antigens_per_signal"]),
            search_max_rows=int(p["search_max_rows"]),
            seed=self.seed,
        )

    def load_table(self):
        spec = self.dataset_spec()
        table = load_csv(spec)
        n = int(self.settings["dataset"]["sample_rows"])
        if n > 0:
            table = table.subset(sample_rows(table.row_ids, n, self.seed))
        return order_rows(table, spec.order) if table.labels is not None else table


def _write_lines(fh, lines):
    for line in lines:
        fh.write(f"# {line}\n")


def cmd_preprocess(cfg: RunConfig) -> int:
    table = cfg.load_table()
    if cfg.get("preprocess", "method") != "manual" and table.labels is None:
        raise DataError("this preprocessing method needs labeled data (set a label column)")
    pipe = cfg.pipeline()
    if table.labels is not None:
        train_idx, _ = stratified_split(table.labels, cfg.seed)
        train = table.subset(train_idx)
    else:
        train = table
    model = fit_for_training(train, pipe)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    header = cfg.header("preprocess")
    with open(out / "model.txt", "w", encoding="utf-8") as fh:
        model.dump(fh, header)
    with open(out / "ranking.csv", "w", encoding="utf-8") as fh:
        _write_lines(fh, header)
        fh.write("feature,statistic,orientation,category,inverted\n")
        for c, (cat, inv) in zip(model.candidates, model.assignment):
            fh.write(f"{c.name},{c.statistic!r},{c.orientation},{CATEGORIES[cat]},{int(inv)}\n")
        for c in model.unused:
            fh.write(f"{c.name},{c.statistic!r},{c.orientation},unused,0\n")
        if model.pca is not None:
            for name, v in model.pca.attribute_ranking:
                fh.write(f"{name},{v!r},0,attribute,0\n")
    print(f"wrote {out / 'model.txt'} and {out / 'ranking.csv'}")
    return 0


def _load_model(path: str) -> PreprocessModel:
    if not path:
        raise ConfigError("no model file given (use --model)")
    p = Path(path)
    if not p.exists():
        raise DataError(f"model file not found: {p}")
    with open(p, encoding="utf-8") as fh:
        return PreprocessModel.load(fh)


def cmd_run(cfg: RunConfig) -> int:
    model = _load_model(cfg.get("run", "model"))
    table = cfg.load_table()
    pipe = cfg.pipeline()
    rows = cfg.get("run", "rows")
    train = None
    if table.labels is not None and rows == "test":
        train_idx, test_idx = stratified_split(table.labels, cfg.seed)
        train, table = table.subset(train_idx), table.subset(test_idx)
    elif rows != "all" and rows != "test":
        raise ConfigError(f"rows must be 'test' or 'all', got {rows!r}")
    threshold = pipe.threshold
    if pipe.threshold_mode == "midpoint":
        if train is None:
            raise ConfigError("midpoint threshold needs a labeled training split")
        threshold = midpoint_threshold(train, model, pipe)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    header = cfg.header("run") + [f"effective_threshold={threshold!r}"]
    with open(out / "pairs.tsv", "w", encoding="utf-8") as pf, open(out / "segments.csv", "w", encoding="utf-8") as sf:
        _write_lines(pf, header)
        _write_lines(sf, header)
        sf.write(",".join(REPORT_COLUMNS) + "\n")

        def on_report(report):
            write_report_rows(report, sf)
            sf.flush()

        run = detect(table, model, pipe, threshold, pair_sink=PairFileWriter(pf), report_sink=on_report)
    with open(out / "aggregate.csv", "w", encoding="utf-8") as fh:
        _write_lines(fh, header)
        write_aggregate(run.reports, fh)
    print(f"{len(run.pairs)} pairs, {len(run.reports)} segment(s); wrote {out}")
    return 0


def _evaluate(cfg: RunConfig, table, pipe: PipelineConfig) -> EvalReport:
    report = cross_validate(table, pipe, int(cfg.get("run", "folds")))
    report.header = cfg.header("evaluate") + [
        f"verdict_rule={pipe.verdict_rule} (majority: anomalous iff >1/2 of segment verdicts; any: iff at least one)"
    ]
    return report


def cmd_evaluate(cfg: RunConfig) -> int:
    table = cfg.load_table()
    report = _evaluate(cfg, table, cfg.pipeline())
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "eval.csv", "w", encoding="utf-8") as fh:
        report.write_csv(fh)
    with open(out / "scores.csv", "w", encoding="utf-8") as fh:
        report.write_scores(fh)
    with open(out / "eval.txt", "w", encoding="utf-8") as fh:
        report.write_text(fh)
    c = report.total
    print(f"TPR={fmt_rate(c.tpr)} FPR={fmt_rate(c.fpr)} ({len(report.folds)} fold(s)); wrote {out}")
    return 0


SWEEP_PARAMS = {"z": ("analysis", "segment_size"), "threshold": ("analysis", "threshold"), "N": ("engine", "population")}


def cmd_sweep(cfg: RunConfig, param: str, values: List[str]) -> int:
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {sorted(SWEEP_PARAMS)}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    table = cfg.load_table()
    section, key = SWEEP_PARAMS[param]
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"sweep_{param}.csv", "w", encoding="utf-8") as fh:
        _write_lines(fh, cfg.header("sweep") + [f"sweep_param={param}", f"sweep_values={','.join(values)}"])
        fh.write("param,value,tp,fp,tn,fn,tpr,fpr\n")
        for v in values:
            settings = {s: dict(kv) for s, kv in cfg.settings.items()}
            settings[section][key] = v
            c = _evaluate(RunConfig(settings), table, RunConfig(settings).pipeline()).total
            fh.write(f"{param},{v},{c.tp},{c.fp},{c.tn},{c.fn},{fmt_rate(c.tpr)},{fmt_rate(c.fpr)}\n")
    print(f"wrote {out / f'sweep_{param}.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dca", description="Dendritic cell algorithm anomaly detection")
    parser.add_argument("--version", action="version", version=f"dca {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI-style config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./dca-out)")
    common.add_argument("--segment-size", type=int)
    common.add_argument("--threshold", type=float)
    common.add_argument("--threshold-mode", choices=["fixed", "midpoint"])
    common.add_argument("--verdict-rule", choices=["majority", "any"])
    common.add_argument("--population", type=int)
    common.add_argument("--method", choices=["manual", "correlation", "infogain", "pca"])
    common.add_argument("--dataset", help="preset: breast-cancer, kdd or csv")
    common.add_argument("--data", help="dataset file path")
    common.add_argument("--sample-rows", type=int, help="seeded row sample size (0 = all)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("preprocess", parents=[common], help="fit signal selection and categorisation")
    p_run = sub.add_parser("run", parents=[common], help="run detection with a fitted model")
    p_run.add_argument("--model", help="model file written by 'preprocess'")
    p_run.add_argument("--rows", choices=["test", "all"], help="test split (default) or every row")
    p_eval = sub.add_parser("evaluate", parents=[common], help="cross-validated TPR/FPR")
    p_eval.add_argument("--folds", type=int, help="k for k-fold; 0 = single 50/50 split")
    p_sweep = sub.add_parser("sweep", parents=[common], help="metric against one parameter")
    p_sweep.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    p_sweep.add_argument("--values", required=True, help="comma-separated values")
    p_sweep.add_argument("--folds", type=int)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {flag: getattr(args, flag, None) for flag in FLAG_KEYS}
    try:
        cfg = RunConfig.build(args.config, overrides)
        if args.command == "preprocess":
            return cmd_preprocess(cfg)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        return cmd_sweep(cfg, args.param, _list(args.values))
    except (DCAError, ValueError) as exc:
        print(f"dca: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
