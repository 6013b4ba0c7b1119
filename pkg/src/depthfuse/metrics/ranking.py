"""Per-metric scoring and overall ranking of competing fusion methods."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np


@dataclass
class ScoreTable:
    methods: list[str]
    scenes: list[str]
    metrics: list[str]
    values: np.ndarray   # (scenes, metrics, methods)
    scores: np.ndarray   # same shape, ints in 1..N
    totals: np.ndarray   # (methods,)
    ranking: list[int]   # 1-based rank of each method

    def score_counts(self) -> np.ndarray:
        """(methods, N) matrix: how often each method got score N, N-1, ..., 1."""
        n = len(self.methods)
        flat = self.scores.reshape(-1, n)
        return np.stack([(flat == s).sum(axis=0) for s in range(n, 0, -1)], axis=1)

    def order(self) -> list[int]:
        return sorted(range(len(self.methods)), key=lambda i: self.ranking[i])

    def to_csv(self) -> str:
        n = len(self.methods)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", *[f"n_{s}" for s in range(n, 0, -1)], "total", "rank"])
        counts = self.score_counts()
        for i in self.order():
            w.writerow([self.methods[i], *counts[i].tolist(), int(self.totals[i]), self.ranking[i]])
        return buf.getvalue()

    def to_markdown(self) -> str:
        n = len(self.methods)
        head = ["Method", *[str(s) for s in range(n, 0, -1)], "Total", "Rank"]
        lines = ["| " + " | ".join(head) + " |", "|" + "|".join("---:" for _ in head) + "|"]
        counts = self.score_counts()
        for i in self.order():
            cells = [self.methods[i], *map(str, counts[i]), str(int(self.totals[i])), str(self.ranking[i])]
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def score_row(values) -> np.ndarray:
    """Scores N..1 by descending value; tied methods share the higher score."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    return n - (v[None, :] > v[:, None]).sum(axis=1)


def rank_methods(values, methods=None, scenes=None, metrics=None) -> ScoreTable:
    """Score every (scene, metric) row and rank methods by total score.

    ``values`` has shape ``(scenes, metrics, methods)``; a 2-D input is taken
    as a single scene.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 2:
        v = v[None]
    if v.ndim != 3:
        raise ValueError("values must have shape (scenes, metrics, methods)")
    if np.isnan(v).any():
        raise ValueError("score table contains NaN")
    n_scene, n_metric, n = v.shape
    methods = list(methods) if methods is not None else [f"m{i}" for i in range(n)]
    scores = np.apply_along_axis(score_row, 2, v)
    totals = scores.sum(axis=(0, 1))
    order = sorted(range(n), key=lambda i: (-totals[i], i))
    ranking = [0] * n
    for pos, i in enumerate(order, start=1):
        ranking[i] = pos
    return ScoreTable(
        methods=methods,
        scenes=list(scenes) if scenes is not None else [str(i + 1) for i in range(n_scene)],
        metrics=list(metrics) if metrics is not None else [f"metric{j}" for j in range(n_metric)],
        values=v,
        scores=scores,
        totals=totals,
        ranking=ranking,
    )


def read_score_csv(source) -> tuple[np.ndarray, list[str], list[str], list[str]]:
    """Parse a wide CSV ``scene,metric,<method>...`` into (values, methods, scenes, metrics)."""
    text = Path(source).read_text() if not isinstance(source, io.StringIO) else source.getvalue()
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 2 or [c.strip().lower() for c in rows[0][:2]] != ["scene", "metric"]:
        raise ValueError("score CSV must start with a 'scene,metric,...' header")
    methods = [c.strip() for c in rows[0][2:]]
    if len(methods) < 2:
        raise ValueError("need at least two methods to rank")
    scenes: list[str] = []
    metrics: list[str] = []
    cells: dict = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(methods) + 2:
            raise ValueError(f"line {lineno}: expected {len(methods) + 2} fields")
        scene, metric = row[0].strip(), row[1].strip()
        if scene not in scenes:
            scenes.append(scene)
        if metric not in metrics:
            metrics.append(metric)
        try:
            cells[scene, metric] = [float(x) for x in row[2:]]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc
    values = np.full((len(scenes), len(metrics), len(methods)), np.nan)
    for (s, m), row in cells.items():
        values[scenes.index(s), metrics.index(m)] = row
    return values, methods, scenes, metrics


def bundled_scores_path() -> Path:
    return Path(str(resources.files("depthfuse") / "data" / "reference_scores.csv"))


def rank_csv(source) -> ScoreTable:
    values, methods, scenes, metrics = read_score_csv(source)
    return rank_methods(values, methods, scenes, metrics)
