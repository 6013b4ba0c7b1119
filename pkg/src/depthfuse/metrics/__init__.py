"""Fusion quality metrics for a source pair (A, B) and a fused image F."""

from .gradient import DegenerateInputError, QgParams, q_g
from .information import q_mi, q_ncie
from .perceptual import QcbParams, q_cb
from .phase import ImageTooSmallError, phase_congruency, q_p
from .ranking import ScoreTable, rank_csv, rank_methods, read_score_csv
from .report import METRIC_NAMES, MetricReport, evaluate_all
from .structural import q_y

__all__ = [
    "DegenerateInputError", "ImageTooSmallError", "METRIC_NAMES", "MetricReport",
    "QcbParams", "QgParams", "ScoreTable", "evaluate_all", "phase_congruency",
    "q_cb", "q_g", "q_mi", "q_ncie", "q_p", "q_y", "rank_csv", "rank_methods",
    "read_score_csv",
]
