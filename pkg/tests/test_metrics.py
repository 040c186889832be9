"""Metrics against brute-force oracles plus the documented edge rules."""

import random

import pytest

from helpers import (assert_close, oracle_auc, oracle_best_constant_micro_f1,
                     oracle_macro_f1, oracle_micro_f1, oracle_precision_at_k)
from mhlat.errors import ShapeError
from mhlat.metrics import (auc, best_constant_micro_f1,
                           compute_report, constant_prediction_micro_f1,
                           macro_f1, micro_f1, precision_at_k)


class TestMicroF1:
    def test_perfect(self):
        gold = [[1, 0, 1], [0, 1, 0]]
        assert micro_f1(gold, gold) == 1.0

    def test_all_negative_prediction(self):
        assert micro_f1([[0, 0], [0, 0]], [[1, 0], [0, 1]]) == 0.0

    def test_hand_counts(self):
        # TP=2, FP=1, FN=1 -> 4/6
        pred = [[1, 1, 0], [1, 0, 0]]
        gold = [[1, 0, 0], [1, 0, 1]]
        assert_close(micro_f1(pred, gold), 2.0 * 2 / (2 * 2 + 1 + 1), 1e-15)

    def test_empty_everything_is_zero(self):
        assert micro_f1([[0, 0]], [[0, 0]]) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            micro_f1([[1, 0]], [[1, 0], [0, 1]])


class TestMacroF1:
    def test_perfect_with_all_labels_present(self):
        gold = [[1, 0], [0, 1]]
        assert macro_f1(gold, gold) == 1.0

    def test_degenerate_label_contributes_zero(self):
        # label 1 never gold, never predicted: 0/0 -> 0 pulls the mean down
        pred = [[1, 0], [1, 0]]
        gold = [[1, 0], [1, 0]]
        assert macro_f1(pred, gold) == 0.5

    def test_hand_average(self):
        # per-label F1 of (1, 0.5, 0) -> 0.5
        pred = [[1, 1, 1], [0, 0, 1]]
        gold = [[1, 1, 0], [0, 1, 0]]
        assert_close(macro_f1(pred, gold), (1.0 + 2 / 3 + 0.0) / 3, 1e-15)


class TestPrecisionAtK:
    def test_gold_superset_of_topk(self):
        scores = [[0.9, 0.8, 0.1], [0.7, 0.6, 0.2]]
        gold = [[1, 1, 0], [1, 1, 1]]
        assert precision_at_k(scores, gold, 2) == 1.0

    def test_spec_example(self):
        scores = [[0.9, 0.1, 0.8]]
        gold = [[1, 0, 1]]
        assert precision_at_k(scores, gold, 2) == 1.0
        assert_close(precision_at_k(scores, gold, 3), 2 / 3, 1e-15)

    def test_empty_gold_contributes_zero(self):
        scores = [[0.9, 0.1], [0.8, 0.2]]
        gold = [[0, 0], [1, 0]]
        assert precision_at_k(scores, gold, 1) == 0.5

    def test_k_above_label_count_rejected(self):
        with pytest.raises(ValueError, match="k=3"):
            precision_at_k([[0.5, 0.5]], [[1, 0]], 3)

    def test_tie_rule_uses_ascending_index(self):
        scores = [[0.5, 0.5]]
        assert precision_at_k(scores, [[1, 0]], 1) == 1.0
        assert precision_at_k(scores, [[0, 1]], 1) == 0.0


class TestAuc:
    def test_perfect_separation(self):
        scores = [[0.9, 0.1], [0.2, 0.8]]
        gold = [[1, 0], [0, 1]]
        assert auc(scores, gold, "micro") == 1.0
        assert auc(scores, gold, "macro") == 1.0

    def test_all_ties_is_half(self):
        scores = [[0.5, 0.5], [0.5, 0.5]]
        gold = [[1, 0], [0, 1]]
        assert auc(scores, gold, "micro") == 0.5

    def test_pair_enumeration_example(self):
        # positives {0.8, 0.6}, negatives {0.7, 0.1}: 3 wins of 4 pairs
        scores = [[0.8, 0.6, 0.7, 0.1]]
        gold = [[1, 1, 0, 0]]
        assert_close(auc(scores, gold, "micro"), 0.75, 1e-15)

    def test_degenerate_sides_error(self):
        with pytest.raises(ValueError, match="negative"):
            auc([[0.5, 0.6]], [[1, 1]], "micro")
        with pytest.raises(ValueError, match="positive"):
            auc([[0.5, 0.6]], [[0, 0]], "micro")
        with pytest.raises(ValueError, match="label"):
            auc([[0.5], [0.6]], [[1], [1]], "macro")

    def test_macro_skips_degenerate_labels(self):
        # label 1 all-gold (skipped); label 0 separable
        scores = [[0.9, 0.4], [0.1, 0.6]]
        gold = [[1, 1], [0, 1]]
        assert auc(scores, gold, "macro") == 1.0

    def test_monotone_transform_invariance(self):
        rng = random.Random(0)
        for _ in range(50):
            d, c = rng.randint(2, 6), rng.randint(2, 6)
            scores = [[rng.choice([0.0, 0.1, 0.25, 0.5, 0.9]) for _ in range(c)]
                      for _ in range(d)]
            gold = [[rng.randint(0, 1) for _ in range(c)] for _ in range(d)]
            cells = [g for row in gold for g in row]
            if not (0 < sum(cells) < len(cells)):
                continue
            transformed = [[3.0 * s ** 3 + 2.0 * s for s in row] for row in scores]
            assert_close(auc(scores, gold, "micro"),
                         auc(transformed, gold, "micro"), 1e-12)


class TestOracleEquivalence:
    """Exact agreement with brute-force enumeration on random instances."""

    def test_thousand_random_instances(self):
        rng = random.Random(1234)
        grid = [0.0, 0.1, 0.2, 0.35, 0.5, 0.7, 0.9, 1.0]  # forces score ties
        checked_auc = 0
        for _ in range(1000):
            d, c = rng.randint(1, 8), rng.randint(1, 10)
            scores = [[rng.choice(grid) for _ in range(c)] for _ in range(d)]
            pred = [[rng.randint(0, 1) for _ in range(c)] for _ in range(d)]
            gold = [[rng.randint(0, 1) for _ in range(c)] for _ in range(d)]

            assert abs(micro_f1(pred, gold) - oracle_micro_f1(pred, gold)) <= 1e-12
            assert abs(macro_f1(pred, gold) - oracle_macro_f1(pred, gold)) <= 1e-12
            k = rng.randint(1, c)
            assert abs(precision_at_k(scores, gold, k)
                       - oracle_precision_at_k(scores, gold, k)) <= 1e-12
            want_micro = oracle_auc(scores, gold, "micro")
            if want_micro is not None:
                assert abs(auc(scores, gold, "micro") - want_micro) <= 1e-12
                checked_auc += 1
            want_macro = oracle_auc(scores, gold, "macro")
            if want_macro is not None:
                assert abs(auc(scores, gold, "macro") - want_macro) <= 1e-12
        assert checked_auc > 800  # the degenerate-gold draw is rare


class TestBestConstant:
    def test_matches_exhaustive_subset_search(self):
        rng = random.Random(9)
        for _ in range(200):
            c = rng.randint(1, 8)
            d = rng.randint(1, 12)
            counts = [rng.randint(0, d) for _ in range(c)]
            assert_close(best_constant_micro_f1(counts, d),
                         oracle_best_constant_micro_f1(counts, d), 1e-12)

    def test_constant_prediction_closed_form_matches_micro_f1(self):
        rng = random.Random(10)
        for _ in range(100):
            c, d = rng.randint(1, 6), rng.randint(1, 10)
            gold = [[rng.randint(0, 1) for _ in range(c)] for _ in range(d)]
            flags = [rng.randint(0, 1) for _ in range(c)]
            counts = [sum(row[j] for row in gold) for j in range(c)]
            assert_close(constant_prediction_micro_f1(flags, counts, d),
                         micro_f1([flags] * d, gold), 1e-15)


class TestReport:
    def test_report_json_shape_and_skipped_k(self):
        scores = [[0.9, 0.2], [0.1, 0.8]]
        gold = [[1, 0], [0, 1]]
        report = compute_report(scores, gold, gold, ks=(1, 2, 15))
        obj = report.to_json_dict()
        assert set(obj) == {"macro_f1", "micro_f1", "macro_auc", "micro_auc",
                            "p_at_k", "p_at_k_errors"}
        assert obj["p_at_k"]["15"] is None
        assert "15" in obj["p_at_k_errors"]
        assert obj["p_at_k"]["1"] == 1.0
        table = report.format_table()
        assert "P@15" in table and "n/a" in table

    def test_values_in_unit_interval(self):
        rng = random.Random(11)
        scores = [[rng.random() for _ in range(6)] for _ in range(5)]
        gold = [[rng.randint(0, 1) for _ in range(6)] for _ in range(5)]
        gold[0][0] = 1
        gold[1][1] = 0
        report = compute_report(scores, [[int(s > 0.5) for s in row]
                                         for row in scores], gold, ks=(5,))
        for v in (report.macro_f1, report.micro_f1, report.macro_auc,
                  report.micro_auc, *report.p_at_k.values()):
            assert 0.0 <= v <= 1.0
