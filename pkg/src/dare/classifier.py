"""Linear relation classifier over hashed n-gram features.

The built-in backend is a multinomial logistic model trained with
per-example SGD over hashed unigram+bigram counts. Mask tokens are hashed
like any other token, so the entity positions stay visible to the model.
The decision rule predicts the best relation type only when its probability
clears a threshold, and falls back to the null label otherwise.
"""

from __future__ import annotations

import json
import logging
import zlib
from dataclasses import dataclass
from pathlib import Path
from random import Random

import numpy as np

from .corpus import RelationInstance, RelationSchema
from .metrics import evaluate

log = logging.getLogger(__name__)

DEFAULT_FEATURE_DIM = 2**18
PROB_FLOOR = 1e-12
DEFAULT_THRESHOLD_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))

_BIGRAM_SEP = "\x1f"


@dataclass(frozen=True)
class ClassWeights:
    """Per-class loss weights: rarest-class frequency over class frequency."""

    weights: dict[str, float]

    def weight_for(self, label: str) -> float:
        return self.weights[label]


def compute_class_weights(train: list[RelationInstance], schema: RelationSchema) -> ClassWeights:
    """Weight each class (null included) by freq_min / freq_c.

    The rarest class gets weight exactly 1; every class must appear at least
    once in the training data.
    """
    counts = {label: 0 for label in schema.labels}
    for inst in train:
        if inst.label not in counts:
            raise ValueError(f"unknown label {inst.label!r}")
        counts[inst.label] += 1
    missing = [label for label, c in counts.items() if c == 0]
    if missing:
        raise ValueError(f"classes with zero training instances: {missing}")
    freq_min = min(counts.values())
    return ClassWeights(weights={label: freq_min / c for label, c in counts.items()})


@dataclass(frozen=True)
class PredictionRule:
    """Threshold decision: argmax over relation types if confident, else null."""

    threshold: float

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")


def featurize(instance: RelationInstance, feature_dim: int = DEFAULT_FEATURE_DIM) -> dict[int, int]:
    """Hashed unigram+bigram counts; deterministic across processes (crc32)."""
    feats: dict[int, int] = {}
    tokens = instance.tokens
    for tok in tokens:
        idx = zlib.crc32(tok.encode("utf-8")) % feature_dim
        feats[idx] = feats.get(idx, 0) + 1
    for a, b in zip(tokens, tokens[1:]):
        idx = zlib.crc32((a + _BIGRAM_SEP + b).encode("utf-8")) % feature_dim
        feats[idx] = feats.get(idx, 0) + 1
    return feats


def _feature_arrays(feats: dict[int, int]) -> tuple[np.ndarray, np.ndarray]:
    idx = np.fromiter(sorted(feats), dtype=np.int64, count=len(feats))
    vals = np.array([feats[i] for i in idx], dtype=float)
    return idx, vals


@dataclass
class TrainConfig:
    epochs: int = 5
    learning_rate: float = 0.1
    feature_dim: int = DEFAULT_FEATURE_DIM


class LinearTextClassifier:
    """Multinomial logistic model: one weight row per relation type plus null."""

    def __init__(self, schema: RelationSchema, feature_dim: int = DEFAULT_FEATURE_DIM):
        self.schema = schema
        self.classes: tuple[str, ...] = schema.labels
        self.feature_dim = feature_dim
        self.weights_matrix = np.zeros((len(self.classes), feature_dim))
        self.loss_history: list[float] = []

    def _proba_from_arrays(self, idx: np.ndarray, vals: np.ndarray) -> np.ndarray:
        logits = self.weights_matrix[:, idx] @ vals
        logits -= logits.max()
        p = np.exp(logits)
        return p / p.sum()

    def predict_proba(self, instance: RelationInstance) -> np.ndarray:
        """Probability distribution over classes (relation types, then null)."""
        idx, vals = _feature_arrays(featurize(instance, self.feature_dim))
        return self._proba_from_arrays(idx, vals)


def example_loss_and_grad(
    weights_matrix: np.ndarray,
    idx: np.ndarray,
    vals: np.ndarray,
    class_idx: int,
    class_weight: float,
) -> tuple[float, np.ndarray]:
    """Weighted negative log-likelihood of one example and its gradient.

    The gradient is returned dense over the touched feature columns only,
    shaped (n_classes, len(idx)); callers scatter it into the full matrix.
    """
    logits = weights_matrix[:, idx] @ vals
    logits -= logits.max()
    p = np.exp(logits)
    p /= p.sum()
    loss = -class_weight * np.log(max(p[class_idx], PROB_FLOOR))
    coeff = class_weight * p
    coeff[class_idx] -= class_weight
    return loss, np.outer(coeff, vals)


def batch_loss_and_grad(
    weights_matrix: np.ndarray,
    features: list[dict[int, int]],
    class_indices: list[int],
    class_weights: list[float],
) -> tuple[float, np.ndarray]:
    """Summed weighted loss and full dense gradient over a batch."""
    total = 0.0
    grad = np.zeros_like(weights_matrix)
    for feats, y, w in zip(features, class_indices, class_weights):
        idx, vals = _feature_arrays(feats)
        loss, g = example_loss_and_grad(weights_matrix, idx, vals, y, w)
        total += loss
        grad[:, idx] += g
    return total, grad


def train_classifier(
    train: list[RelationInstance],
    schema: RelationSchema,
    weights: ClassWeights | None = None,
    config: TrainConfig | None = None,
    seed: int = 0,
) -> LinearTextClassifier:
    """Train by per-example SGD; deterministic given (data, config, seed).

    ``weights`` scales each example's loss by its class weight (uniform when
    None). The average weighted loss of each epoch is logged and kept on the
    returned model as ``loss_history``.
    """
    if not train:
        raise ValueError("cannot train on an empty dataset")
    config = config or TrainConfig()
    present = {inst.label for inst in train}
    missing = [label for label in schema.labels if label not in present]
    if missing:
        raise ValueError(f"classes missing from the training data: {missing}")

    clf = LinearTextClassifier(schema, feature_dim=config.feature_dim)
    class_index = {label: i for i, label in enumerate(clf.classes)}
    prepared = []
    for inst in train:
        idx, vals = _feature_arrays(featurize(inst, config.feature_dim))
        w = weights.weight_for(inst.label) if weights is not None else 1.0
        prepared.append((idx, vals, class_index[inst.label], w))

    rng = Random(seed)
    order = list(range(len(prepared)))
    lr = config.learning_rate
    W = clf.weights_matrix
    for epoch in range(config.epochs):
        rng.shuffle(order)
        epoch_loss = 0.0
        for i in order:
            idx, vals, y, w = prepared[i]
            loss, g = example_loss_and_grad(W, idx, vals, y, w)
            epoch_loss += loss
            W[:, idx] -= lr * g
        avg = epoch_loss / len(prepared)
        clf.loss_history.append(avg)
        log.debug("epoch %d/%d: avg weighted loss %.6f", epoch + 1, config.epochs, avg)
    return clf


def predict_from_proba(probs: np.ndarray, schema: RelationSchema, rule: PredictionRule) -> str:
    """Apply the threshold rule to a class distribution (null entry last).

    Ties in the argmax go to the lowest-indexed relation type.
    """
    relation_probs = probs[: len(schema.relation_types)]
    best = int(np.argmax(relation_probs))
    if relation_probs[best] >= rule.threshold:
        return schema.relation_types[best]
    return schema.null_label


def predict(classifier, instance: RelationInstance, rule: PredictionRule) -> str:
    return predict_from_proba(classifier.predict_proba(instance), classifier.schema, rule)


def threshold_curve(
    classifier, dev: list[RelationInstance], grid: tuple[float, ...] = DEFAULT_THRESHOLD_GRID
) -> list[tuple[float, float]]:
    """Dev micro-F1 achieved at each candidate threshold."""
    if not dev:
        raise ValueError("cannot tune a threshold on an empty dev set")
    schema = classifier.schema
    probs = [classifier.predict_proba(inst) for inst in dev]
    gold = [inst.label for inst in dev]
    curve = []
    for t in grid:
        rule = PredictionRule(threshold=t)
        preds = [predict_from_proba(p, schema, rule) for p in probs]
        curve.append((t, evaluate(preds, gold, schema).micro_f1))
    return curve


def tune_threshold(
    classifier, dev: list[RelationInstance], grid: tuple[float, ...] = DEFAULT_THRESHOLD_GRID
) -> PredictionRule:
    """Pick the grid threshold maximizing dev micro-F1 (ties -> smallest t)."""
    curve = threshold_curve(classifier, dev, grid)
    best_t, best_f1 = max(curve, key=lambda tf: (tf[1], -tf[0]))
    log.debug("tuned threshold %.2f (dev micro-F1 %.4f)", best_t, best_f1)
    return PredictionRule(threshold=best_t)


CLASSIFIER_FORMAT = "linear-classifier/1"


def save_classifier(
    classifier: LinearTextClassifier, path: str | Path, rule: PredictionRule | None = None
) -> None:
    """Persist (feature_dim, classes, weights, threshold) as a .npz archive."""
    meta = {
        "format": CLASSIFIER_FORMAT,
        "feature_dim": classifier.feature_dim,
        "schema": classifier.schema.to_dict(),
        "threshold": rule.threshold if rule is not None else None,
        "loss_history": classifier.loss_history,
    }
    np.savez_compressed(
        Path(path),
        weights=classifier.weights_matrix,
        meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
    )


def load_classifier(path: str | Path) -> tuple[LinearTextClassifier, PredictionRule | None]:
    with np.load(Path(path)) as archive:
        meta = json.loads(archive["meta"].tobytes().decode("utf-8"))
        if meta.get("format") != CLASSIFIER_FORMAT:
            raise ValueError(f"unsupported classifier format {meta.get('format')!r}")
        schema = RelationSchema.from_dict(meta["schema"])
        clf = LinearTextClassifier(schema, feature_dim=meta["feature_dim"])
        clf.weights_matrix = archive["weights"].copy()
        clf.loss_history = list(meta.get("loss_history", []))
    rule = PredictionRule(meta["threshold"]) if meta["threshold"] is not None else None
    return clf, rule
