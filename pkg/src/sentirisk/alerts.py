"""Risk scoring and sentiment-inflection alerts over daily predictions.

A bearish_flip fires when the predicted class moves positive → negative on
consecutive days (bullish_flip is the mirror); a risk_threshold alert fires
on any day whose risk score reaches the configured threshold. Within one
day, flip alerts precede threshold alerts; the stream stays chronological.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

from .errors import DataValidationError
from .matrix import Matrix
from .text import CLASS_INDEX, CLASS_NAMES, NEGATIVE, POSITIVE


@dataclass(frozen=True)
class AlertRuleConfig:
    risk_threshold: float = 0.7

    def __post_init__(self) -> None:
        if not 0.0 < self.risk_threshold < 1.0:
            raise DataValidationError(
                f"risk_threshold must lie in (0, 1), got {self.risk_threshold}"
            )


@dataclass(frozen=True)
class DailyPrediction:
    date: dt.date
    predicted_class: int
    probs: Matrix  # 3x1, (negative, neutral, positive)
    predicted_return: float


@dataclass(frozen=True)
class Alert:
    date: dt.date
    kind: str  # bearish_flip | bullish_flip | risk_threshold
    confidence: float  # probability of the predicted class
    predicted_class: int
    predicted_return: float
    risk_score: float

    def to_dict(self) -> dict:
        return {
            "date": self.date.isoformat(),
            "kind": self.kind,
            "confidence": self.confidence,
            "predicted_class": CLASS_NAMES[self.predicted_class],
            "predicted_return": self.predicted_return,
            "risk_score": self.risk_score,
        }


def risk_score(class_probs: Matrix, predicted_return: float) -> float:
    """p(negative), plus half the clamped predicted loss when return < 0."""
    if class_probs.shape != (3, 1):
        raise DataValidationError(
            f"class probabilities must be 3x1, got {class_probs.rows}x{class_probs.cols}"
        )
    vals = class_probs.values
    if min(vals) < -1e-12:
        raise DataValidationError(f"negative probability in {vals}")
    if abs(sum(vals) - 1.0) > 1e-9:
        raise DataValidationError(f"probabilities sum to {sum(vals)}, expected 1")
    p_neg = vals[CLASS_INDEX["negative"]]
    if predicted_return >= 0:
        return p_neg
    penalty = 0.5 * min(max(-predicted_return, 0.0), 1.0)
    return min(1.0, p_neg + penalty)


def detect_inflections(predictions: Sequence[DailyPrediction],
                       rules: AlertRuleConfig) -> list[Alert]:
    """One alert per (day, kind); output sorted chronologically."""
    for i in range(1, len(predictions)):
        if predictions[i].date <= predictions[i - 1].date:
            raise DataValidationError(
                f"predictions must be strictly chronological: "
                f"{predictions[i - 1].date} then {predictions[i].date}"
            )
    alerts: list[Alert] = []
    for i, p in enumerate(predictions):
        risk = risk_score(p.probs, p.predicted_return)
        confidence = p.probs.at(p.predicted_class, 0)
        if i > 0:
            prev = predictions[i - 1].predicted_class
            if prev == POSITIVE and p.predicted_class == NEGATIVE:
                alerts.append(Alert(p.date, "bearish_flip", confidence,
                                    p.predicted_class, p.predicted_return, risk))
            elif prev == NEGATIVE and p.predicted_class == POSITIVE:
                alerts.append(Alert(p.date, "bullish_flip", confidence,
                                    p.predicted_class, p.predicted_return, risk))
        if risk >= rules.risk_threshold:
            alerts.append(Alert(p.date, "risk_threshold", confidence,
                                p.predicted_class, p.predicted_return, risk))
    return alerts


def write_alerts_jsonl(alerts: Iterable[Alert], out: TextIO) -> None:
    for a in alerts:
        out.write(json.dumps(a.to_dict()) + "\n")


def load_predictions_jsonl(path: str | Path) -> list[DailyPrediction]:
    """Reads {date, probs: [3], predicted_return, optional predicted_class}.

    Without an explicit predicted_class the argmax of probs is used.
    """
    path = Path(path)
    if not path.is_file():
        raise DataValidationError(f"predictions file not found: {path}")
    preds: list[DailyPrediction] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataValidationError(f"{path}:{lineno}: bad json ({exc.msg})") from None
            try:
                probs = [float(v) for v in obj["probs"]]
                if len(probs) != 3:
                    raise DataValidationError(f"need 3 probabilities, got {len(probs)}")
                if "predicted_class" in obj:
                    name = obj["predicted_class"]
                    if name not in CLASS_INDEX:
                        raise DataValidationError(f"unknown predicted_class {name!r}")
                    cls = CLASS_INDEX[name]
                else:
                    cls = max(range(3), key=lambda i: probs[i])
                preds.append(DailyPrediction(
                    date=dt.date.fromisoformat(obj["date"]),
                    predicted_class=cls,
                    probs=Matrix(3, 1, probs),
                    predicted_return=float(obj["predicted_return"]),
                ))
            except KeyError as exc:
                raise DataValidationError(f"{path}:{lineno}: missing key {exc}") from None
            except (ValueError, TypeError) as exc:
                raise DataValidationError(f"{path}:{lineno}: {exc}") from None
    return preds
