"""Deterministic dendritic cell algorithm for streaming anomaly detection."""

from .analysis import AntigenScore, OnlineAnalyzer, SegmentReport, analyze, anomaly_score, classify
from .core import OutputPair, SignalVector, StreamEvent, WeightMatrix
from .engine import DCAEngine, EngineConfig
from .preprocess import FeatureTable, PreprocessModel, fit_model

__version__ = "0.1.0"
