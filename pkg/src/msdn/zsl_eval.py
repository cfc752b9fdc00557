"""Calibrated zero-shot prediction and the CZSL/GZSL metric suite.

Prediction fuses the two sub-net embeddings with coefficients
(alpha1, alpha2), scores every class by the dot product with its
semantic vector, and adds a fixed +1/-1 calibration offset that favors
unseen classes.  Conventional ZSL restricts the argmax to unseen
classes; generalized ZSL ranks all of them.  Accuracies are per-class
(macro) top-1, summarized by the harmonic mean H = 2SU / (S + U).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data_io import Dataset, validate_dataset
from .errors import ArgumentError, DatasetValidationError, ShapeError
from .model import ForwardTrace, ModelParams, forward

MODES = ("czsl", "gzsl")


@dataclass(frozen=True)
class PredictConfig:
    alpha1: float = 0.9
    alpha2: float = 0.1
    mode: str = "gzsl"

    def validate(self) -> None:
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ArgumentError("fusion coefficients must be non-negative")
        if self.alpha1 == 0 and self.alpha2 == 0:
            raise ArgumentError("fusion coefficients must not both be zero")
        if self.mode not in MODES:
            raise ArgumentError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class EvalReport:
    acc: float   # CZSL: per-class top-1 over unseen classes, unseen candidates only
    U: float     # GZSL unseen per-class accuracy
    S: float     # GZSL seen per-class accuracy
    H: float     # harmonic mean of S and U
    per_class: list[tuple[int, str, float]]  # (class_id, "seen"/"unseen", gzsl accuracy)


def harmonic_mean(seen_acc: float, unseen_acc: float) -> float:
    """2SU / (S + U), zero when both accuracies vanish."""
    for name, v in (("S", seen_acc), ("U", unseen_acc)):
        if not 0.0 <= v <= 1.0:
            raise ArgumentError(f"{name} must lie in [0, 1], got {v}")
    if seen_acc + unseen_acc == 0.0:
        return 0.0
    return 2.0 * seen_acc * unseen_acc / (seen_acc + unseen_acc)


def calibrated_scores(
    trace: ForwardTrace,
    class_semantics: np.ndarray,
    seen_classes: np.ndarray,
    unseen_classes: np.ndarray,
    cfg: PredictConfig,
) -> np.ndarray:
    """Fused class scores with the +1 unseen / -1 seen offset applied."""
    cfg.validate()
    fused = cfg.alpha1 * trace.psi + cfg.alpha2 * trace.Psi
    if class_semantics.shape[1] != fused.shape[0]:
        raise ShapeError(
            f"embedding length {fused.shape[0]} != class semantic width "
            f"{class_semantics.shape[1]}"
        )
    scores = class_semantics @ fused
    offset = np.full(class_semantics.shape[0], -1.0)
    offset[np.asarray(unseen_classes, dtype=np.int64)] = 1.0
    offset[np.asarray(seen_classes, dtype=np.int64)] = -1.0
    return scores + offset


def predict(
    trace: ForwardTrace,
    class_semantics: np.ndarray,
    seen_classes: np.ndarray,
    unseen_classes: np.ndarray,
    cfg: PredictConfig,
) -> int:
    """Predicted class index; ties resolve to the smallest class index."""
    scores = calibrated_scores(trace, class_semantics, seen_classes, unseen_classes, cfg)
    if cfg.mode == "czsl":
        candidates = np.sort(np.asarray(unseen_classes, dtype=np.int64))
    else:
        candidates = np.arange(class_semantics.shape[0], dtype=np.int64)
    if candidates.size == 0:
        raise ArgumentError("prediction requires a non-empty candidate set")
    return int(candidates[np.argmax(scores[candidates])])


def per_class_accuracy(
    labels: np.ndarray, predictions: np.ndarray, classes: np.ndarray
) -> tuple[float, dict[int, float]]:
    """Macro top-1: mean over classes of within-class accuracy.

    Classes without samples are excluded from the mean.
    """
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    if labels.shape != predictions.shape:
        raise ShapeError(
            f"labels and predictions differ: {labels.shape} vs {predictions.shape}"
        )
    table: dict[int, float] = {}
    for c in sorted(int(v) for v in classes):
        mask = labels == c
        if not mask.any():
            continue
        table[c] = float(np.mean(predictions[mask] == c))
    if not table:
        raise ArgumentError("no evaluated class has any samples")
    return float(np.mean(list(table.values()))), table


def evaluate(
    params: ModelParams,
    ds: Dataset,
    cfg: PredictConfig,
    predict_fn=None,
) -> EvalReport:
    """Full metric suite over the dataset's test splits.

    ``predict_fn(trace, mode)`` can replace the default predictor (used
    by tests to inject an oracle).  The report's ``acc`` uses CZSL
    predictions on the unseen test split; U and S use GZSL predictions
    on the unseen and seen test splits.
    """
    cfg.validate()
    violations = validate_dataset(ds)
    if violations:
        raise DatasetValidationError(violations)
    if ds.test_unseen_idx.size == 0:
        raise ArgumentError("test_unseen_idx is empty; nothing to evaluate")
    if ds.test_seen_idx.size == 0:
        raise ArgumentError("test_seen_idx is empty; nothing to evaluate")

    def default_predict(trace: ForwardTrace, mode: str) -> int:
        mode_cfg = PredictConfig(alpha1=cfg.alpha1, alpha2=cfg.alpha2, mode=mode)
        return predict(trace, ds.class_semantics, ds.seen_classes,
                       ds.unseen_classes, mode_cfg)

    predictor = predict_fn if predict_fn is not None else default_predict

    def run_split(idx: np.ndarray, mode: str) -> np.ndarray:
        preds = np.empty(idx.size, dtype=np.int64)
        for i, sample in enumerate(idx):
            trace = forward(ds.features[int(sample)], ds.attributes, params)
            preds[i] = predictor(trace, mode)
        return preds

    unseen_labels = ds.labels[ds.test_unseen_idx]
    seen_labels = ds.labels[ds.test_seen_idx]

    czsl_preds = run_split(ds.test_unseen_idx, "czsl")
    acc, _ = per_class_accuracy(unseen_labels, czsl_preds, ds.unseen_classes)

    gzsl_unseen_preds = run_split(ds.test_unseen_idx, "gzsl")
    u, unseen_table = per_class_accuracy(unseen_labels, gzsl_unseen_preds,
                                         ds.unseen_classes)
    gzsl_seen_preds = run_split(ds.test_seen_idx, "gzsl")
    s, seen_table = per_class_accuracy(seen_labels, gzsl_seen_preds, ds.seen_classes)

    per_class = [(c, "seen", a) for c, a in sorted(seen_table.items())]
    per_class += [(c, "unseen", a) for c, a in sorted(unseen_table.items())]
    return EvalReport(acc=acc, U=u, S=s, H=harmonic_mean(s, u), per_class=per_class)


def write_report_csv(report: EvalReport, path: str | Path) -> None:
    """Metric CSV: one metric,value row for acc, U, S, H."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("metric", "value"))
        for name, value in (("acc", report.acc), ("U", report.U),
                            ("S", report.S), ("H", report.H)):
            writer.writerow((name, repr(value)))


def write_per_class_csv(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("class_id", "split", "accuracy"))
        for class_id, split, accuracy in report.per_class:
            writer.writerow((class_id, split, repr(accuracy)))
