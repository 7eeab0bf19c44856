"""Metrics report model and its deterministic JSON form."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, model_validator

from skel_data.sequence_io import IoError

logger = logging.getLogger(__name__)


class EpochRecord(BaseModel):
    """One training epoch"""
    epoch: int = Field(..., ge=1)
    train_loss: float
    train_accuracy: float = Field(..., ge=0.0, le=100.0)
    lr: float


class MetricsReport(BaseModel):
    """Training/evaluation summary written to metrics.json"""
    mode: str
    seed: int
    epochs: List[EpochRecord] = Field(default_factory=list)
    test_accuracy: float = Field(..., ge=0.0, le=100.0, description="Top-1 accuracy in percent")
    num_test: int = Field(..., ge=0)
    confusion: List[List[int]] = Field(default_factory=list, description="rows: true class, cols: predicted")
    dropout_rate: float = 0.0
    dropout_pattern: str = "random"
    # wall-clock and cost figures are only filled by bench
    inference_ms: Optional[float] = None
    flops: Optional[int] = None

    @model_validator(mode="after")
    def _check_confusion(self) -> "MetricsReport":
        if self.confusion and sum(sum(row) for row in self.confusion) != self.num_test:
            raise ValueError("confusion counts do not add up to num_test")
        return self

    @property
    def final_train_accuracy(self) -> Optional[float]:
        return self.epochs[-1].train_accuracy if self.epochs else None


def accuracy(labels: Sequence[int], predictions: Sequence[int]) -> float:
    """Top-1 accuracy in percent, two decimals."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    return round(100.0 * float(np.mean(labels == np.asarray(predictions))), 2)


def confusion_matrix(labels: Sequence[int], predictions: Sequence[int], num_classes: int) -> List[List[int]]:
    matrix = np.zeros((num_classes, num_classes), dtype=int)
    np.add.at(matrix, (np.asarray(labels, dtype=int), np.asarray(predictions, dtype=int)), 1)
    return matrix.tolist()


def report_json(report: MetricsReport) -> str:
    """Sorted keys, fixed indent: identical reports give identical bytes."""
    return json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def write_metrics(report: MetricsReport, path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report_json(report), encoding="utf-8")
    except OSError as e:
        raise IoError(f"Cannot write {path}: {e}") from e
    logger.info(f"✓ Metrics written to {path}")
    return path


def read_metrics(path: Path) -> MetricsReport:
    try:
        return MetricsReport.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise IoError(f"Cannot read {path}: {e}") from e
