"""Per-day anomaly scores and the evaluation metric suite.

All classification uses the strict ``score > threshold`` convention.
Positive class = Fault days; Merk days are excluded by default but can
be counted as normal or as positive via the evaluation mode.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import DayLabel
from .errors import ParameterError, UndefinedMetricError

HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


@dataclass
class ScoreEntry:
    system_id: str
    date: str  # ISO day
    day_index: int
    score: float
    label: DayLabel


@dataclass
class EvalReport:
    optimal_f1: float
    optimal_threshold: float
    system_wise_f1: float
    per_system: list = field(default_factory=list)
    auc_pr: float = float("nan")
    auc_roc: float = float("nan")
    n_positive: int = 0
    n_negative: int = 0
    merk_mode: str = "exclude"

    def to_json(self) -> str:
        doc = {
            "optimal_f1": self.optimal_f1,
            "optimal_threshold": self.optimal_threshold,
            "system_wise_f1": self.system_wise_f1,
            "per_system": self.per_system,
            "auc_pr": self.auc_pr,
            "auc_roc": self.auc_roc,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "merk_mode": self.merk_mode,
        }
        return json.dumps(doc, indent=2)

    def format_table(self) -> str:
        lines = [
            f"{'metric':<16}{'value':>10}",
            f"{'optimal F1':<16}{self.optimal_f1:>10.4f}",
            f"{'system-wise F1':<16}{self.system_wise_f1:>10.4f}",
            f"{'AUC-PR':<16}{self.auc_pr:>10.4f}",
            f"{'AUC-ROC':<16}{self.auc_roc:>10.4f}",
            f"{'positives':<16}{self.n_positive:>10d}",
            f"{'negatives':<16}{self.n_negative:>10d}",
        ]
        return "\n".join(lines)


def nll_day_score(x: np.ndarray, mu: np.ndarray, var: np.ndarray) -> float:
    """Mean per-entry Gaussian NLL over the whole (T, F) day."""
    nll = 0.5 * (np.log(var) + (x - mu) ** 2 / var) + HALF_LOG_2PI
    return float(nll.mean())


def threshold_classify(scores: np.ndarray, threshold: float) -> np.ndarray:
    return np.asarray(scores) > threshold


def _f1(predictions: np.ndarray, labels: np.ndarray) -> float:
    tp = int(np.sum(predictions & labels))
    fp = int(np.sum(predictions & ~labels))
    fn = int(np.sum(~predictions & labels))
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom > 0 else 0.0


def f1_at_threshold(scores, labels, threshold: float) -> float:
    return _f1(threshold_classify(scores, threshold), np.asarray(labels, dtype=bool))


def _candidate_thresholds(scores: np.ndarray) -> np.ndarray:
    uniq = np.unique(scores)
    mids = (uniq[:-1] + uniq[1:]) / 2 if len(uniq) > 1 else np.empty(0)
    return np.concatenate(([-np.inf], mids, [np.inf]))


def optimal_f1(scores, labels) -> tuple[float, float]:
    """Exact maximum F1 over all distinct-score thresholds.

    Ties are broken toward the smallest threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if not labels.any():
        raise UndefinedMetricError("optimal F1 undefined without positive labels")
    best_f1, best_thr = -1.0, -np.inf
    for thr in _candidate_thresholds(scores):
        f1 = _f1(scores > thr, labels)
        if f1 > best_f1:
            best_f1, best_thr = f1, thr
    return best_f1, best_thr


def system_wise_f1(scores, labels, systems, mode: str = "exclude") -> tuple[float, list]:
    """Leave-one-system-out thresholding.

    For each system the threshold is the optimal-F1 threshold on all
    other systems pooled, then F1 is computed on the held-out system.
    ``mode='exclude'`` drops systems without positive days from the mean;
    ``mode='credit_clean'`` scores such a system 1.0 when it also has no
    false positives, else 0.0.
    """
    if mode not in ("exclude", "credit_clean"):
        raise ParameterError(f"unknown system-wise mode {mode!r}")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    systems = np.asarray(systems)
    uniq = np.unique(systems)
    if len(uniq) < 2:
        raise UndefinedMetricError("system-wise F1 needs at least 2 systems")

    per_system = []
    f1s = []
    for sid in uniq:
        mask = systems == sid
        other_scores, other_labels = scores[~mask], labels[~mask]
        if other_labels.any():
            _, thr = optimal_f1(other_scores, other_labels)
        else:
            thr = np.inf  # no basis for a threshold: predict nothing
        preds = scores[mask] > thr
        has_pos = bool(labels[mask].any())
        if has_pos:
            f1 = _f1(preds, labels[mask])
            f1s.append(f1)
        elif mode == "credit_clean":
            f1 = 1.0 if not preds.any() else 0.0
            f1s.append(f1)
        else:
            f1 = None
        per_system.append({"system_id": str(sid), "threshold": float(thr),
                           "f1": f1, "n_days": int(mask.sum()),
                           "n_positive": int(labels[mask].sum())})
    if not f1s:
        raise UndefinedMetricError("no eligible systems for system-wise F1")
    return float(np.mean(f1s)), per_system


def auc_roc(scores, labels) -> float:
    """Probability a random positive outscores a random negative,
    ties counted one half (rank-statistic form)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC-ROC needs both classes")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    # midranks handle ties exactly
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    rank_sum = ranks[labels].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def auc_pr(scores, labels) -> float:
    """Area under the precision-recall curve via step-wise interpolation
    over every distinct threshold (sum of precision * recall increment)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUC-PR undefined without positive labels")
    area = 0.0
    prev_recall = 0.0
    for s in np.unique(scores)[::-1]:
        preds = scores >= s
        tp = int(np.sum(preds & labels))
        precision = tp / int(preds.sum())
        recall = tp / n_pos
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return float(area)


@dataclass
class KFoldResult:
    mean_f1: float
    mean_threshold: float
    skipped_folds: int


def kfold_f1(scores, labels, k: int, rng: np.random.Generator) -> KFoldResult:
    """Random day-level K-fold threshold cross-validation.

    Per fold the threshold is fitted on the other K-1 folds and applied
    to the held-out fold. A held-out fold without positives counts as
    F1 = 1 when nothing is predicted, otherwise the fold is skipped.
    """
    if k < 2:
        raise ParameterError("k must be >= 2")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    idx = rng.permutation(len(scores))
    folds = np.array_split(idx, k)
    f1s, thresholds, skipped = [], [], 0
    for fold in folds:
        mask = np.zeros(len(scores), dtype=bool)
        mask[fold] = True
        if not labels[~mask].any():
            skipped += 1
            continue
        _, thr = optimal_f1(scores[~mask], labels[~mask])
        preds = scores[mask] > thr
        if not labels[mask].any():
            if not preds.any():
                f1s.append(1.0)
                thresholds.append(thr)
            else:
                skipped += 1
            continue
        f1s.append(_f1(preds, labels[mask]))
        thresholds.append(thr)
    if not f1s:
        raise UndefinedMetricError("all folds degenerate")
    finite = [t for t in thresholds if np.isfinite(t)]
    mean_thr = float(np.mean(finite)) if finite else float("nan")
    return KFoldResult(mean_f1=float(np.mean(f1s)), mean_threshold=mean_thr,
                       skipped_folds=skipped)


def score_cap_for_display(scores, cap: float) -> np.ndarray:
    """min(score, cap) for plotting only; metrics always use raw scores."""
    if cap <= 0:
        raise ParameterError("cap must be positive")
    return np.minimum(np.asarray(scores, dtype=np.float64), cap)


def select_eval_subset(entries: list[ScoreEntry], merk_mode: str = "exclude"):
    """Apply the Merk policy and binarize labels (Fault = positive)."""
    if merk_mode not in ("exclude", "normal", "positive"):
        raise ParameterError(f"unknown merk mode {merk_mode!r}")
    kept = [e for e in entries if e.label is not DayLabel.MERK or merk_mode != "exclude"]
    scores = np.array([e.score for e in kept])
    systems = np.array([e.system_id for e in kept])
    if merk_mode == "positive":
        labels = np.array([e.label in (DayLabel.FAULT, DayLabel.MERK) for e in kept])
    else:
        labels = np.array([e.label is DayLabel.FAULT for e in kept])
    return kept, scores, labels, systems


def evaluate(entries: list[ScoreEntry], merk_mode: str = "exclude",
             system_mode: str = "exclude") -> EvalReport:
    _, scores, labels, systems = select_eval_subset(entries, merk_mode)
    opt, thr = optimal_f1(scores, labels)
    sys_f1, per_system = system_wise_f1(scores, labels, systems, mode=system_mode)
    return EvalReport(
        optimal_f1=opt,
        optimal_threshold=float(thr),
        system_wise_f1=sys_f1,
        per_system=per_system,
        auc_pr=auc_pr(scores, labels),
        auc_roc=auc_roc(scores, labels),
        n_positive=int(labels.sum()),
        n_negative=int((~labels).sum()),
        merk_mode=merk_mode,
    )


def write_scores_csv(path, entries: list[ScoreEntry]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["system_id", "date", "day_index", "score", "label"])
        for e in entries:
            writer.writerow([e.system_id, e.date, e.day_index, repr(e.score), e.label.value])


def read_scores_csv(path) -> list[ScoreEntry]:
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            entries.append(ScoreEntry(
                system_id=row["system_id"],
                date=row["date"],
                day_index=int(row["day_index"]),
                score=float(row["score"]),
                label=DayLabel(row["label"]),
            ))
    return entries
