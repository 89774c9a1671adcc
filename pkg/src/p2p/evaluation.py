"""ADE / FDE / ISR / accuracy evaluation and tabular reports."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptySet, LengthMismatch, UnknownFormat
from .kinematics import InterceptorSpec, ScaleModel, prediction_feasible
from .predictors import DISPLAY_NAMES, Prediction, Predictor
from .tokenizer import Example
from .tracks import LabelSet


def _pair(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=np.float64).reshape(-1, 2)
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    if truth.shape != pred.shape:
        raise LengthMismatch(f"truth has {len(truth)} steps, prediction has {len(pred)}")
    if len(truth) == 0:
        raise LengthMismatch("empty trajectory")
    return truth, pred


def ade(truth, pred) -> float:
    """Mean Euclidean error over all horizon steps."""
    t, p = _pair(truth, pred)
    return float(np.linalg.norm(t - p, axis=1).mean())


def fde(truth, pred) -> float:
    """Euclidean error at the last horizon step."""
    t, p = _pair(truth, pred)
    return float(np.linalg.norm(t[-1] - p[-1]))


def accuracy(labels: Sequence[LabelSet], predictions: Sequence[Prediction], threshold: float = 0.5) -> float:
    if len(labels) == 0:
        raise EmptySet("accuracy of an empty set")
    if len(labels) != len(predictions):
        raise LengthMismatch(f"{len(labels)} labels vs {len(predictions)} predictions")
    hits = sum((p.drone_prob > threshold) == bool(l.is_drone) for l, p in zip(labels, predictions))
    return hits / len(labels)


@dataclass(frozen=True)
class EvalRow:
    method: str
    ade: float
    fde: float
    isr: float
    acc: float
    n: int


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    fingerprint: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "fingerprint": self.fingerprint}


def run_predictor(predictor: Predictor, examples: Sequence[Example]) -> list[Prediction]:
    many = getattr(predictor, "predict_many", None)
    if many is not None:
        return many(list(examples))
    return [predictor(e) for e in examples]


def evaluate(
    predictor: Predictor,
    examples: Sequence[Example],
    interceptor: InterceptorSpec = InterceptorSpec(),
    scale: ScaleModel = ScaleModel(),
    name: str = "predictor",
    all_steps: bool = False,
    threshold: float = 0.5,
) -> EvalRow:
    """Score one predictor.  The interceptor starts at each example's anchor."""
    if len(examples) == 0:
        raise EmptySet("evaluation needs at least one example")
    preds = run_predictor(predictor, examples)
    ades = [ade(e.future, p.positions) for e, p in zip(examples, preds)]
    fdes = [fde(e.future, p.positions) for e, p in zip(examples, preds)]
    feas = [prediction_feasible(interceptor, scale, p.positions, e.anchor, all_steps)
            for e, p in zip(examples, preds)]
    labelled = [(e.labels, p) for e, p in zip(examples, preds) if e.labels is not None]
    acc = accuracy(*zip(*labelled), threshold=threshold) if labelled else float("nan")
    return EvalRow(
        method=name,
        ade=float(np.mean(ades)),
        fde=float(np.mean(fdes)),
        isr=float(np.mean(feas)),
        acc=float(acc),
        n=len(examples),
    )


def evaluate_all(
    predictors: dict[str, Predictor],
    examples: Sequence[Example],
    interceptor: InterceptorSpec = InterceptorSpec(),
    scale: ScaleModel = ScaleModel(),
    all_steps: bool = False,
    fingerprint: dict | None = None,
    threshold: float = 0.5,
) -> EvalReport:
    rows = [evaluate(p, examples, interceptor, scale, DISPLAY_NAMES.get(k, k), all_steps, threshold)
            for k, p in predictors.items()]
    fp = {"interceptor": asdict(interceptor), "scale": asdict(scale), "isr_all_steps": all_steps}
    fp.update(fingerprint or {})
    return EvalReport(rows=rows, fingerprint=fp)


CSV_HEADER = ("method", "ade", "fde", "isr", "acc", "n")


def render_report(report: EvalReport, format: str = "md") -> str:
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in report.rows:
            w.writerow([r.method, f"{r.ade:.2f}", f"{r.fde:.2f}", f"{r.isr:.3f}", f"{r.acc:.3f}", r.n])
        return buf.getvalue()
    if format == "md":
        lines = ["| Method | ADE | FDE | ISR | Acc | N |", "|---|---:|---:|---:|---:|---:|"]
        for r in report.rows:
            lines.append(f"| {r.method} | {r.ade:.2f} | {r.fde:.2f} | {r.isr:.3f} | {r.acc:.3f} | {r.n} |")
        return "\n".join(lines) + "\n"
    if format == "json":
        return json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n"
    raise UnknownFormat(f"unknown report format {format!r}; use md, csv or json")
