import json

import numpy as np
import pytest

from plud.classifier import Prediction
from plud.evaluation import (
    ConfusionMatrix,
    confusion,
    f_score,
    macro_average,
    precision_recall,
    report,
)

# Published per-class rates (percent) the macro/F plumbing must reproduce.
TOP1_PRECISION = [45.73, 85.60, 93.72, 60.52, 92.69, 94.33, 68.25, 87.22, 96.30, 73.61]
TOP1_RECALL = [53.88, 67.36, 62.34, 97.60, 77.21, 94.91, 55.84, 91.97, 98.86, 100.0]
TOP3_PRECISION = [80.23, 96.86, 97.75, 86.96, 97.53, 98.29, 89.57, 97.20, 98.87, 88.88]
TOP3_RECALL = [92.69, 87.63, 90.66, 99.57, 96.34, 99.75, 81.81, 96.27, 100.0, 100.0]


def pred(item_id, ranking):
    total = sum(p for _, p in ranking)
    ranked = [(label, p / total) for label, p in ranking]
    return Prediction(
        item_id=item_id,
        ranked=ranked,
        confidence=ranked[0][1],
        features=np.zeros(1),
    )


class TestConfusion:
    def test_two_correct_items_diagonal(self):
        preds = [
            pred("a", [("A", 0.9), ("B", 0.1)]),
            pred("b", [("B", 0.8), ("A", 0.2)]),
        ]
        cm = confusion(preds, {"a": "A", "b": "B"}, k=1)
        np.testing.assert_array_equal(cm.counts, [[1, 0], [0, 1]])

    def test_topk_substitution_counts_on_diagonal(self):
        preds = [pred("x", [("A", 0.5), ("B", 0.3), ("C", 0.2)])]
        cm = confusion(preds, {"x": "B"}, k=3)
        assert cm.counts[cm.classes.index("B"), cm.classes.index("B")] == 1

    def test_top1_same_item_counts_at_top_prediction(self):
        preds = [pred("x", [("A", 0.5), ("B", 0.3), ("C", 0.2)])]
        cm = confusion(preds, {"x": "B"}, k=1)
        assert cm.counts[cm.classes.index("B"), cm.classes.index("A")] == 1

    def test_missing_truth_rejected(self):
        with pytest.raises(KeyError):
            confusion([pred("x", [("A", 1.0)])], {}, k=1)

    def test_k_out_of_range(self):
        preds = [pred("x", [("A", 0.6), ("B", 0.4)])]
        with pytest.raises(ValueError):
            confusion(preds, {"x": "A"}, k=3)

    def test_total_equals_items_and_micro_accuracy(self):
        rng = np.random.default_rng(0)
        preds = []
        truth = {}
        for i in range(50):
            probs = rng.dirichlet(np.ones(3))
            order = np.argsort(-probs)
            ranked = [(f"c{j}", float(probs[j])) for j in order]
            preds.append(
                Prediction(f"i{i}", ranked, ranked[0][1], np.zeros(1))
            )
            truth[f"i{i}"] = f"c{rng.integers(3)}"
        cm = confusion(preds, truth, k=1, classes=["c0", "c1", "c2"])
        assert cm.total == 50
        assert cm.accuracy == np.trace(cm.counts) / 50

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError, match="nothing to evaluate"):
            confusion([], {}, k=1)


class TestPrecisionRecall:
    def test_perfect_diagonal_all_ones(self):
        cm = ConfusionMatrix(classes=["A", "B"], counts=np.array([[3, 0], [0, 2]]))
        pr = precision_recall(cm)
        assert pr == {"A": (1.0, 1.0), "B": (1.0, 1.0)}

    def test_absent_class_scores_zero(self):
        cm = ConfusionMatrix(
            classes=["A", "B", "C"],
            counts=np.array([[2, 0, 0], [1, 1, 0], [0, 0, 0]]),
        )
        pr = precision_recall(cm)
        assert pr["C"] == (0.0, 0.0)

    def test_published_macro_averages(self):
        assert macro_average(TOP1_PRECISION) == pytest.approx(79.80, abs=0.005)
        assert macro_average(TOP1_RECALL) == pytest.approx(80.00, abs=0.005)
        assert macro_average(TOP3_PRECISION) == pytest.approx(93.21, abs=0.005)
        assert macro_average(TOP3_RECALL) == pytest.approx(94.47, abs=0.005)


class TestMacroAndF:
    def test_single_class_macro_is_identity(self):
        assert macro_average([42.5]) == 42.5

    def test_macro_permutation_invariant(self):
        values = [1.0, 2.0, 5.0, 9.0]
        assert macro_average(values) == macro_average(values[::-1])

    def test_f_of_published_macros(self):
        ap1 = macro_average(TOP1_PRECISION)
        ar1 = macro_average(TOP1_RECALL)
        assert f_score(ap1, ar1) == pytest.approx(79.90, abs=0.02)
        ap3 = macro_average(TOP3_PRECISION)
        ar3 = macro_average(TOP3_RECALL)
        assert f_score(ap3, ar3) == pytest.approx(93.84, abs=0.02)

    def test_f_degenerate_zero(self):
        assert f_score(0.0, 0.0) == 0.0

    def test_f_symmetry_and_fixed_point(self):
        assert f_score(30.0, 70.0) == f_score(70.0, 30.0)
        assert f_score(55.5, 55.5) == pytest.approx(55.5)


def make_random_predictions(n, n_classes, seed):
    rng = np.random.default_rng(seed)
    classes = [f"c{j}" for j in range(n_classes)]
    preds = []
    truth = {}
    for i in range(n):
        order = rng.permutation(n_classes)
        probs = np.sort(rng.dirichlet(np.ones(n_classes)))[::-1]
        ranked = [(classes[j], float(p)) for j, p in zip(order, probs)]
        preds.append(Prediction(f"i{i}", ranked, ranked[0][1], np.zeros(1)))
        truth[f"i{i}"] = classes[i % n_classes]
    return preds, truth, classes


class TestReport:
    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="nothing to evaluate"):
            report([], {})

    def test_perfect_predictor_scores_100(self):
        preds = [
            pred("a", [("A", 0.9), ("B", 0.1)]),
            pred("b", [("B", 0.8), ("A", 0.2)]),
        ]
        rep = report(preds, {"a": "A", "b": "B"}, ks=(1,))
        blk = rep.per_k[1]
        assert blk["accuracy"] == 100.0
        assert blk["ap"] == 100.0
        assert blk["ar"] == 100.0
        assert blk["f"] == 100.0

    def test_random_predictor_near_chance(self):
        # Monte-Carlo oracle: a uniformly random ranking puts the true class
        # first with probability 1/10 and in the top three with 3/10.
        preds, truth, classes = make_random_predictions(10000, 10, seed=1)
        rep = report(preds, truth, ks=(1, 3), classes=classes)
        assert rep.per_k[1]["accuracy"] == pytest.approx(10.0, abs=1.0)
        assert rep.per_k[3]["accuracy"] == pytest.approx(30.0, abs=2.0)

    def test_topk_recall_dominates_top1(self):
        preds, truth, classes = make_random_predictions(500, 5, seed=3)
        rep = report(preds, truth, ks=(1, 3), classes=classes)
        for c in classes:
            assert rep.per_k[3]["recall"][c] >= rep.per_k[1]["recall"][c]

    def test_json_and_text_render(self):
        preds, truth, classes = make_random_predictions(50, 3, seed=5)
        rep = report(preds, truth, ks=(1, 3), classes=classes)
        doc = json.loads(rep.to_json())
        assert set(doc["per_k"].keys()) == {"1", "3"}
        text = rep.to_text()
        assert "AP" in text and "AR" in text and "top-1" in text
        csv_text = confusion(preds, truth, k=1, classes=classes).to_csv()
        assert csv_text.count("\n") == len(classes) + 1
