"""Evaluation: micro / per-class precision-recall-F1 and McNemar testing.

Micro scores treat the null label as "no relation": a null prediction is
never a true positive, so only the relation types contribute TP/FP/FN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import RelationSchema

# Chi-squared critical value, 1 degree of freedom, alpha = 0.05.
CHI2_CRITICAL_05 = 3.841


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "support": self.support,
        }


@dataclass
class EvalResult:
    micro_precision: float
    micro_recall: float
    micro_f1: float
    per_class: dict[str, ClassScores]
    confusion: np.ndarray  # (c+1) x (c+1), rows gold / columns predicted, null last

    def micro(self) -> dict[str, float]:
        return {
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
        }

    def to_dict(self) -> dict:
        return {
            **self.micro(),
            "per_class": {label: scores.to_dict() for label, scores in self.per_class.items()},
            "confusion": self.confusion.tolist(),
        }


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def evaluate(predictions: list[str], gold: list[str], schema: RelationSchema) -> EvalResult:
    """Score predictions against gold labels.

    Micro precision/recall/F1 pool TP/FP/FN over all relation types; the null
    label only ever counts against a system (as a missed or spurious
    relation). Classes with zero gold support are left out of per_class.
    """
    if len(predictions) != len(gold):
        raise ValueError(f"length mismatch: {len(predictions)} predictions vs {len(gold)} gold")
    labels = schema.labels
    index = {label: i for i, label in enumerate(labels)}
    for label in set(predictions) | set(gold):
        if label not in index:
            raise ValueError(f"unknown label {label!r}")

    confusion = np.zeros((len(labels), len(labels)), dtype=int)
    for pred, true in zip(predictions, gold):
        confusion[index[true], index[pred]] += 1

    tp = fp = fn = 0
    per_class: dict[str, ClassScores] = {}
    for label in schema.relation_types:
        i = index[label]
        class_tp = int(confusion[i, i])
        class_fp = int(confusion[:, i].sum()) - class_tp
        class_fn = int(confusion[i, :].sum()) - class_tp
        tp += class_tp
        fp += class_fp
        fn += class_fn
        support = int(confusion[i, :].sum())
        if support > 0:
            p, r, f = _prf(class_tp, class_fp, class_fn)
            per_class[label] = ClassScores(p, r, f, support)
    micro_p, micro_r, micro_f = _prf(tp, fp, fn)
    return EvalResult(
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=micro_f,
        per_class=per_class,
        confusion=confusion,
    )


@dataclass(frozen=True)
class McNemarResult:
    b: int  # first system correct, second wrong
    c: int  # first system wrong, second correct
    statistic: float
    significant_at_05: bool

    def to_dict(self) -> dict:
        return {
            "b": self.b,
            "c": self.c,
            "statistic": self.statistic,
            "significant_at_05": self.significant_at_05,
        }


def mcnemar(preds_a: list[str], preds_b: list[str], gold: list[str]) -> McNemarResult:
    """Paired significance test over the two systems' disagreements.

    Uses the continuity-corrected statistic (|b - c| - 1)^2 / (b + c),
    compared against the chi-squared critical value at alpha = 0.05.
    """
    if not len(preds_a) == len(preds_b) == len(gold):
        raise ValueError(
            f"length mismatch: {len(preds_a)} vs {len(preds_b)} predictions, {len(gold)} gold"
        )
    b = c = 0
    for pa, pb, g in zip(preds_a, preds_b, gold):
        a_correct = pa == g
        b_correct = pb == g
        if a_correct and not b_correct:
            b += 1
        elif b_correct and not a_correct:
            c += 1
    if b + c == 0:
        return McNemarResult(b=0, c=0, statistic=0.0, significant_at_05=False)
    statistic = (abs(b - c) - 1) ** 2 / (b + c)
    return McNemarResult(b=b, c=c, statistic=statistic, significant_at_05=statistic > CHI2_CRITICAL_05)


def exact_binomial_p(b: int, c: int) -> float:
    """Two-sided exact binomial p-value for the disagreement counts.

    Cross-check oracle for the chi-squared approximation used above.
    """
    n = b + c
    if n == 0:
        return 1.0
    k = min(b, c)
    tail = sum(math.comb(n, i) for i in range(k + 1)) / 2**n
    return min(1.0, 2.0 * tail)


@dataclass
class RunSummary:
    mean: dict[str, float]
    std: dict[str, float]
    per_class_f1_mean: dict[str, float]
    per_class_f1_std: dict[str, float]
    n_runs: int

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "per_class_f1_mean": self.per_class_f1_mean,
            "per_class_f1_std": self.per_class_f1_std,
            "n_runs": self.n_runs,
        }


def _mean_std(values: list[float]) -> tuple[float, float]:
    mean = sum(values) / len(values)
    if len(values) < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return mean, math.sqrt(var)


def aggregate_runs(results: list[EvalResult]) -> RunSummary:
    """Mean and sample standard deviation of the metrics across runs."""
    if not results:
        raise ValueError("cannot aggregate an empty list of results")
    mean: dict[str, float] = {}
    std: dict[str, float] = {}
    for metric in ("micro_precision", "micro_recall", "micro_f1"):
        values = [getattr(r, metric) for r in results]
        mean[metric], std[metric] = _mean_std(values)
    shared_classes = set(results[0].per_class)
    for r in results[1:]:
        shared_classes &= set(r.per_class)
    f1_mean: dict[str, float] = {}
    f1_std: dict[str, float] = {}
    for label in sorted(shared_classes):
        values = [r.per_class[label].f1 for r in results]
        f1_mean[label], f1_std[label] = _mean_std(values)
    return RunSummary(
        mean=mean, std=std, per_class_f1_mean=f1_mean, per_class_f1_std=f1_std, n_runs=len(results)
    )
