from fractions import Fraction
from random import Random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dare.classifier import (
    ClassWeights,
    PredictionRule,
    TrainConfig,
    batch_loss_and_grad,
    compute_class_weights,
    featurize,
    load_classifier,
    predict,
    predict_from_proba,
    save_classifier,
    threshold_curve,
    train_classifier,
    tune_threshold,
)
from dare.corpus import RelationInstance, RelationSchema
from dare import taskgen

SCHEMA1 = RelationSchema(relation_types=("induce",), null_label="null")
SCHEMA2 = RelationSchema(relation_types=("r1", "r2"), null_label="null")


def inst(i, label, words):
    tokens = ("ENTITY_A",) + tuple(words) + ("ENTITY_B",)
    return RelationInstance(id=f"c{i}", tokens=tokens, label=label)


def labeled_set(schema, spec):
    """spec: list of (label, words, count) -> instances with distinct ids."""
    out = []
    i = 0
    for label, words, count in spec:
        for _ in range(count):
            out.append(inst(i, label, words))
            i += 1
    return out


class TestClassWeights:
    def test_ddi_shaped_counts_exact(self):
        schema = RelationSchema(
            relation_types=("advise", "effect", "int", "mechanism"), null_label="null"
        )
        train = labeled_set(
            schema,
            [
                ("advise", ["a"], 153),
                ("effect", ["b"], 658),
                ("int", ["c"], 1083),
                ("mechanism", ["d"], 1353),
                ("null", ["e"], 2000),
            ],
        )
        weights = compute_class_weights(train, schema)
        assert weights.weight_for("advise") == 1.0
        for label, count in [("effect", 658), ("int", 1083), ("mechanism", 1353), ("null", 2000)]:
            assert abs(weights.weight_for(label) - Fraction(153, count)) <= 1e-12

    def test_balanced_counts(self):
        train = labeled_set(SCHEMA1, [("induce", ["x"], 10), ("null", ["y"], 10)])
        weights = compute_class_weights(train, SCHEMA1)
        assert weights.weight_for("induce") == 1.0
        assert weights.weight_for("null") == 1.0

    def test_extreme_ratio(self):
        train = labeled_set(SCHEMA1, [("induce", ["x"], 1), ("null", ["y"], 1000)])
        weights = compute_class_weights(train, SCHEMA1)
        assert weights.weight_for("induce") == 1.0
        assert weights.weight_for("null") == pytest.approx(0.001, abs=1e-15)

    def test_zero_count_class_rejected(self):
        train = labeled_set(SCHEMA2, [("r1", ["x"], 3), ("null", ["y"], 3)])
        with pytest.raises(ValueError, match="r2"):
            compute_class_weights(train, SCHEMA2)

    def test_scale_invariance(self):
        small = labeled_set(SCHEMA2, [("r1", ["x"], 3), ("r2", ["y"], 9), ("null", ["z"], 12)])
        big = labeled_set(SCHEMA2, [("r1", ["x"], 21), ("r2", ["y"], 63), ("null", ["z"], 84)])
        w_small = compute_class_weights(small, SCHEMA2)
        w_big = compute_class_weights(big, SCHEMA2)
        for label in SCHEMA2.labels:
            assert w_small.weight_for(label) == pytest.approx(w_big.weight_for(label), abs=1e-12)


class TestFeaturize:
    def test_deterministic(self):
        a = inst(1, "induce", ["alpha", "beta"])
        assert featurize(a) == featurize(a)

    def test_mask_swap_changes_features(self):
        a = RelationInstance(id="a", tokens=("ENTITY_A", "x", "ENTITY_B"), label="induce")
        b = RelationInstance(id="b", tokens=("ENTITY_B", "x", "ENTITY_A"), label="induce")
        assert featurize(a) != featurize(b)

    def test_l1_norm_counts_unigrams_and_bigrams(self):
        # 5 tokens -> 5 unigrams + 4 bigrams = 9.
        a = RelationInstance(
            id="a", tokens=("ENTITY_A", "causes", "severe", "pain", "ENTITY_B"), label="induce"
        )
        assert sum(featurize(a).values()) == 9

    def test_same_tokens_same_vector_regardless_of_id_and_label(self):
        a = RelationInstance(id="a", tokens=("ENTITY_A", "x", "ENTITY_B"), label="induce")
        b = RelationInstance(id="b", tokens=("ENTITY_A", "x", "ENTITY_B"), label="null")
        assert featurize(a) == featurize(b)


def separable_train(n_per_class=30):
    return labeled_set(
        SCHEMA1,
        [
            ("induce", ["triggered", "severe", "episodes", "badly"], n_per_class),
            ("null", ["recorded", "alongside", "baseline", "notes"], n_per_class),
        ],
    )


class TestTraining:
    def test_separable_toy_reaches_perfect_accuracy(self):
        train = separable_train()
        clf = train_classifier(train, SCHEMA1, seed=0)
        correct = 0
        for item in train:
            probs = clf.predict_proba(item)
            correct += clf.classes[int(np.argmax(probs))] == item.label
        assert correct == len(train)

    def test_loss_decreases(self):
        train = separable_train()
        clf = train_classifier(train, SCHEMA1, seed=0)
        assert len(clf.loss_history) == 5
        assert clf.loss_history[-1] < clf.loss_history[0]

    def test_uninformative_features_give_even_probabilities(self):
        # Identical features carry no class signal; with a step size small
        # enough that per-example SGD jitter is negligible, the predicted
        # distribution sits at (0.5, 0.5).
        train = labeled_set(
            SCHEMA1, [("induce", ["same", "words"], 25), ("null", ["same", "words"], 25)]
        )
        config = TrainConfig(learning_rate=0.005)
        for seed in range(4):
            clf = train_classifier(train, SCHEMA1, config=config, seed=seed)
            probs = clf.predict_proba(train[0])
            assert probs[0] == pytest.approx(0.5, abs=0.03)
            assert probs[1] == pytest.approx(0.5, abs=0.03)

    def test_probabilities_sum_to_one(self):
        clf = train_classifier(separable_train(), SCHEMA1, seed=0)
        for item in separable_train(3):
            assert clf.predict_proba(item).sum() == pytest.approx(1.0, abs=1e-9)

    def test_empty_train_rejected(self):
        with pytest.raises(ValueError):
            train_classifier([], SCHEMA1)

    def test_missing_class_rejected(self):
        train = labeled_set(SCHEMA1, [("induce", ["x"], 5)])
        with pytest.raises(ValueError, match="null"):
            train_classifier(train, SCHEMA1)

    def test_deterministic_given_seed(self):
        train = separable_train()
        a = train_classifier(train, SCHEMA1, seed=7)
        b = train_classifier(train, SCHEMA1, seed=7)
        assert np.array_equal(a.weights_matrix, b.weights_matrix)
        c = train_classifier(train, SCHEMA1, seed=8)
        assert not np.array_equal(a.weights_matrix, c.weights_matrix)

    def test_class_weighting_lifts_rare_class_recall(self):
        # Paired runs over five seeds on an imbalanced task: weighting the
        # rare class must not lose recall on it, on average.
        base = taskgen.relation_task(
            n_train_pos=25, n_train_neg=500, n_dev_pos=10, n_dev_neg=50,
            n_test_pos=60, n_test_neg=300, seed=11,
        )
        weights = compute_class_weights(base.train, base.schema)
        deltas = []
        for seed in range(5):
            weighted = train_classifier(base.train, base.schema, weights=weights, seed=seed)
            plain = train_classifier(base.train, base.schema, weights=None, seed=seed)

            def recall(model):
                hits = total = 0
                for item in base.test:
                    if item.label == "induce":
                        total += 1
                        probs = model.predict_proba(item)
                        hits += model.classes[int(np.argmax(probs))] == "induce"
                return hits / total

            deltas.append(recall(weighted) - recall(plain))
        assert sum(deltas) / len(deltas) >= 0.0


class _StubClassifier:
    def __init__(self, schema, probs_by_id):
        self.schema = schema
        self.probs_by_id = probs_by_id

    def predict_proba(self, instance):
        return np.array(self.probs_by_id[instance.id])


class TestPredictionRule:
    def test_below_threshold_gives_null(self):
        probs = np.array([0.30, 0.40, 0.30])
        assert predict_from_proba(probs, SCHEMA2, PredictionRule(0.50)) == "null"

    def test_above_threshold_gives_argmax(self):
        probs = np.array([0.30, 0.60, 0.10])
        assert predict_from_proba(probs, SCHEMA2, PredictionRule(0.50)) == "r2"

    def test_tie_goes_to_lowest_index(self):
        probs = np.array([0.40, 0.40, 0.20])
        assert predict_from_proba(probs, SCHEMA2, PredictionRule(0.35)) == "r1"

    def test_threshold_bounds(self):
        with pytest.raises(ValueError):
            PredictionRule(0.0)
        with pytest.raises(ValueError):
            PredictionRule(1.0)

    def test_predict_uses_classifier_probs(self):
        item = inst(0, "induce", ["x"])
        stub = _StubClassifier(SCHEMA1, {item.id: [0.7, 0.3]})
        assert predict(stub, item, PredictionRule(0.5)) == "induce"
        assert predict(stub, item, PredictionRule(0.75)) == "null"

    @given(
        st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=3, max_size=3),
        st.floats(min_value=0.05, max_value=0.90),
        st.floats(min_value=0.01, max_value=0.09),
    )
    @settings(max_examples=80, deadline=None)
    def test_raising_threshold_never_unnulls(self, raw, t, bump):
        probs = np.array(raw) / np.array(raw).sum()
        low = predict_from_proba(probs, SCHEMA2, PredictionRule(t))
        high = predict_from_proba(probs, SCHEMA2, PredictionRule(min(t + bump, 0.99)))
        if low == "null":
            assert high == "null"


class TestThresholdTuning:
    def _dev(self, n_pos=6, n_neg=6):
        items = []
        probs = {}
        for i in range(n_pos):
            item = inst(i, "induce", ["p", str(i)])
            items.append(item)
            probs[item.id] = [0.6, 0.4]
        for i in range(n_pos, n_pos + n_neg):
            item = inst(i, "null", ["n", str(i)])
            items.append(item)
            probs[item.id] = [0.4, 0.6]
        return items, probs

    def test_confident_classifier_ties_to_smallest_threshold(self):
        items = [inst(0, "induce", ["a"]), inst(1, "null", ["b"])]
        stub = _StubClassifier(SCHEMA1, {items[0].id: [0.99, 0.01], items[1].id: [0.01, 0.99]})
        rule = tune_threshold(stub, items)
        assert rule.threshold == 0.05

    def test_separating_band_picks_smallest_inside(self):
        items, probs = self._dev()
        stub = _StubClassifier(SCHEMA1, probs)
        rule = tune_threshold(stub, items)
        assert rule.threshold == pytest.approx(0.45)
        curve = dict(threshold_curve(stub, items))
        assert curve[0.45] == 1.0
        assert curve[0.40] < 1.0

    def test_single_point_grid(self):
        items, probs = self._dev()
        stub = _StubClassifier(SCHEMA1, probs)
        assert tune_threshold(stub, items, grid=(0.5,)).threshold == 0.5

    def test_empty_dev_rejected(self):
        stub = _StubClassifier(SCHEMA1, {})
        with pytest.raises(ValueError):
            tune_threshold(stub, [])


class TestGradient:
    def test_analytic_gradient_matches_central_differences(self):
        rng = Random(3)
        np_rng = np.random.default_rng(5)
        feature_dim = 64
        n_classes = 3
        features = []
        labels = []
        weights = []
        for _ in range(8):
            feats = {rng.randrange(feature_dim): rng.randrange(1, 4) for _ in range(6)}
            features.append(feats)
            labels.append(rng.randrange(n_classes))
            weights.append(rng.choice([0.25, 0.5, 1.0]))
        W = np_rng.normal(scale=0.5, size=(n_classes, feature_dim))
        loss, grad = batch_loss_and_grad(W, features, labels, weights)

        eps = 1e-6
        checked = 0
        for r in range(n_classes):
            for j in sorted({k for f in features for k in f})[:10]:
                w_plus = W.copy()
                w_plus[r, j] += eps
                w_minus = W.copy()
                w_minus[r, j] -= eps
                loss_plus, _ = batch_loss_and_grad(w_plus, features, labels, weights)
                loss_minus, _ = batch_loss_and_grad(w_minus, features, labels, weights)
                numeric = (loss_plus - loss_minus) / (2 * eps)
                denom = max(abs(numeric), abs(grad[r, j]), 1e-8)
                assert abs(numeric - grad[r, j]) / denom <= 1e-4
                checked += 1
        assert checked >= 20


class TestPersistence:
    def test_round_trip(self, tmp_path):
        train = separable_train()
        clf = train_classifier(train, SCHEMA1, config=TrainConfig(feature_dim=4096), seed=0)
        rule = PredictionRule(0.35)
        save_classifier(clf, tmp_path / "clf.npz", rule=rule)
        loaded, loaded_rule = load_classifier(tmp_path / "clf.npz")
        assert loaded_rule == rule
        assert loaded.classes == clf.classes
        assert loaded.feature_dim == clf.feature_dim
        assert np.array_equal(loaded.weights_matrix, clf.weights_matrix)
        for item in train[:5]:
            assert predict(loaded, item, loaded_rule) == predict(clf, item, rule)

    def test_round_trip_without_rule(self, tmp_path):
        clf = train_classifier(separable_train(5), SCHEMA1, config=TrainConfig(feature_dim=512))
        save_classifier(clf, tmp_path / "clf.npz")
        _, rule = load_classifier(tmp_path / "clf.npz")
        assert rule is None


def test_class_weights_type_is_plain_mapping():
    weights = ClassWeights(weights={"a": 1.0, "b": 0.5})
    assert weights.weight_for("b") == 0.5
