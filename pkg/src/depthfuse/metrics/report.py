from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

from ..imgcore import to_gray
from .gradient import QgParams, q_g
from .information import q_mi, q_ncie
from .perceptual import QcbParams, q_cb
from .phase import q_p
from .structural import q_y

log = logging.getLogger(__name__)

METRIC_NAMES = ("q_mi", "q_ncie", "q_g", "q_p", "q_y", "q_cb")


@dataclass
class MetricReport:
    q_mi: float = math.nan
    q_ncie: float = math.nan
    q_g: float = math.nan
    q_p: float = math.nan
    q_y: float = math.nan
    q_cb: float = math.nan
    errors: dict = field(default_factory=dict)

    def values(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}

    def to_csv(self, label: str | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = list(METRIC_NAMES)
        row = [repr(float(v)) for v in self.values().values()]
        if label is not None:
            head.insert(0, "label")
            row.insert(0, label)
        w.writerow(head)
        w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricReport":
        rows = list(csv.DictReader(io.StringIO(text)))
        if len(rows) != 1:
            raise ValueError("expected exactly one report row")
        return cls(**{name: float(rows[0][name]) for name in METRIC_NAMES})

    def to_markdown(self) -> str:
        head = "| " + " | ".join(METRIC_NAMES) + " |"
        sep = "|" + "|".join("---:" for _ in METRIC_NAMES) + "|"
        row = "| " + " | ".join(f"{v:.4f}" for v in self.values().values()) + " |"
        return "\n".join((head, sep, row)) + "\n"


def evaluate_all(A, B, F, qg_params: QgParams | None = None, qcb_params: QcbParams | None = None,
                 metrics=METRIC_NAMES) -> MetricReport:
    """Run the six metrics on color or gray inputs; failures are recorded, not raised."""
    a, b, f = to_gray(A), to_gray(B), to_gray(F)
    funcs = {
        "q_mi": lambda: q_mi(a, b, f),
        "q_ncie": lambda: q_ncie(a, b, f),
        "q_g": lambda: q_g(a, b, f, qg_params),
        "q_p": lambda: q_p(a, b, f),
        "q_y": lambda: q_y(a, b, f),
        "q_cb": lambda: q_cb(a, b, f, qcb_params),
    }
    report = MetricReport()
    for name in metrics:
        try:
            setattr(report, name, float(funcs[name]()))
        except Exception as exc:  # a failing metric must not sink the others
            log.warning("%s failed: %s", name, exc)
            report.errors[name] = f"{type(exc).__name__}: {exc}"
    return report

