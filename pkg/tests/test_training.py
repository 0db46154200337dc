"""Losses, optimizer, schedule, training loop, metrics, cross-validation."""

import math

import numpy as np
import pytest
from sklearn.metrics import f1_score, precision_score, recall_score

from seecgnet.autodiff import Tensor, grad_check, ops
from seecgnet.data import records_to_arrays, synth_dataset
from seecgnet.metrics import MetricsReport
from seecgnet.model import ModelConfig, build_model
from seecgnet.training import (Adam, EpochStats, TrainConfig, cross_entropy,
                               crossvalidate, evaluate, evaluate_arrays,
                               fit_arrays, focal_loss, lr_at_epoch, train)

from _oracles import max_rel_err

TINY_MODEL = ModelConfig(
    n_leads=2, n_samples=64, n_classes=2,
    stem_kernel=9, stage2_kernel=5, branch_kernels=(3, 5),
    stem_channels=4, stage2_channels=6, branch_channels=6, block1d_channels=8,
    blocks_per_branch_2d=1, blocks_per_branch_1d=1, se_ratio=4,
)


def t64(a):
    return Tensor(np.asarray(a, dtype=np.float64))


class TestCrossEntropy:
    def test_symmetric_two_class(self):
        loss = cross_entropy(t64([[0.0, 0.0]]), [0])
        assert loss.item() == pytest.approx(math.log(2), rel=1e-9)

    def test_saturated_correct_prediction(self):
        loss = cross_entropy(t64([[1000.0, 0.0]]), [0])
        assert 0 <= loss.item() < 1e-6

    def test_random_batches_match_direct_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n, k = int(rng.integers(1, 8)), int(rng.integers(2, 6))
            logits = rng.standard_normal((n, k)) * 5
            targets = rng.integers(0, k, size=n)
            got = cross_entropy(t64(logits), targets).item()
            direct = np.mean([
                -np.log(np.exp(logits[i, targets[i]]) / np.exp(logits[i]).sum())
                for i in range(n)])
            assert abs(got - direct) / max(abs(direct), 1e-8) < 1e-6

    def test_out_of_range_target_rejected(self):
        with pytest.raises(ValueError, match="range"):
            cross_entropy(t64([[0.0, 1.0]]), [2])


class TestFocalLoss:
    def test_reduces_to_cross_entropy_at_gamma_zero(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n, k = int(rng.integers(1, 8)), int(rng.integers(2, 6))
            logits = rng.standard_normal((n, k)) * 3
            targets = rng.integers(0, k, size=n)
            fl = focal_loss(t64(logits), targets, alpha=1.0, gamma=0.0).item()
            ce = cross_entropy(t64(logits), targets).item()
            assert abs(fl - ce) < 1e-7

    def test_value_at_even_odds(self):
        # p = 1/2, alpha 0.25, gamma 2: loss = 0.25 * 0.25 * ln 2.
        loss = focal_loss(t64([[0.0, 0.0]]), [0], alpha=0.25, gamma=2.0)
        assert loss.item() == pytest.approx(0.25 * 0.25 * math.log(2), abs=1e-9)

    def test_monotone_in_target_probability(self):
        gaps = np.linspace(-6, 6, 61)
        losses = [focal_loss(t64([[g / 2, -g / 2]]), [0], 0.25, 2.0).item() for g in gaps]
        diffs = np.diff(losses)
        assert np.all(diffs <= 1e-12)  # non-increasing as p(class 0) grows

    def test_per_class_weight_vector(self):
        logits = t64([[0.0, 0.0], [0.0, 0.0]])
        loss = focal_loss(logits, [0, 1], class_weights=[1.0, 0.5])
        expected = (1.0 * 0.25 * math.log(2) + 0.5 * 0.25 * math.log(2)) / 2
        assert loss.item() == pytest.approx(expected, rel=1e-9)

    def test_losses_nonnegative_and_vanish_when_confident(self):
        for gamma in (0.0, 1.0, 2.0):
            sure = focal_loss(t64([[30.0, 0.0]]), [0], 1.0, gamma).item()
            unsure = focal_loss(t64([[0.0, 3.0]]), [0], 1.0, gamma).item()
            assert 0 <= sure < 1e-9
            assert unsure > 0

    def test_gradients_through_hardness_term(self):
        rng = np.random.default_rng(2)
        w = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        targets = np.array([0, 2, 3])

        def forward():
            return focal_loss(w, targets, alpha=0.25, gamma=2.0)

        report = grad_check(forward, {"w": w}, epsilon=1e-4)
        assert report.max_relative_error < 1e-5

    def test_cross_entropy_gradients(self):
        rng = np.random.default_rng(3)
        w = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        targets = np.array([0, 1, 2, 1])

        def forward():
            return cross_entropy(w, targets)

        report = grad_check(forward, {"w": w}, epsilon=1e-4)
        assert report.max_relative_error < 1e-5


class TestAdam:
    def test_zero_gradients_leave_parameters_unchanged(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        p.grad = np.zeros(2)
        opt = Adam({"p": p})
        before = p.data.copy()
        opt.step({"p": p}, lr=0.01)
        np.testing.assert_array_equal(p.data, before)
        assert opt.t == 1

    def test_first_step_magnitude(self):
        p = Tensor(np.array([0.0]), requires_grad=True)
        p.grad = np.array([1.0])
        opt = Adam({"p": p})
        opt.step({"p": p}, lr=0.01)
        assert p.data[0] == pytest.approx(-0.01, abs=1e-9)

    def test_two_steps_match_scalar_recurrence(self):
        p = Tensor(np.array([0.5]), requires_grad=True)
        opt = Adam({"p": p}, beta1=0.9, beta2=0.999, eps=1e-8)
        # independent scalar re-implementation
        theta, m, v = 0.5, 0.0, 0.0
        for t in (1, 2):
            p.grad = np.array([1.0])
            opt.step({"p": p}, lr=0.01)
            m = 0.9 * m + 0.1 * 1.0
            v = 0.999 * v + 0.001 * 1.0
            theta -= 0.01 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert abs(p.data[0] - theta) < 1e-12

    def test_missing_gradient_names_parameter(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adam({"stem.weight": p})
        with pytest.raises(ValueError, match="stem.weight"):
            opt.step({"stem.weight": p}, lr=0.01)


class TestLrSchedule:
    def test_default_step_decay(self):
        config = TrainConfig()
        assert lr_at_epoch(config, 0) == pytest.approx(1e-2)
        assert lr_at_epoch(config, 15) == pytest.approx(1e-2)
        assert lr_at_epoch(config, 16) == pytest.approx(1e-3)
        assert lr_at_epoch(config, 63) == pytest.approx(1e-4)
        assert lr_at_epoch(config, 64) == pytest.approx(1e-5)
        assert lr_at_epoch(config, 127) == pytest.approx(1e-5)

    def test_empty_decay_schedule_is_constant(self):
        config = TrainConfig(decay_epochs=())
        for epoch in (0, 50, 127):
            assert lr_at_epoch(config, epoch) == pytest.approx(1e-2)

    def test_non_increasing_and_piecewise_constant(self):
        config = TrainConfig()
        rates = [lr_at_epoch(config, e) for e in range(128)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))
        assert len(set(rates)) == 4

    def test_epoch_out_of_range(self):
        config = TrainConfig(max_epochs=8)
        with pytest.raises(ValueError):
            lr_at_epoch(config, 8)
        with pytest.raises(ValueError):
            lr_at_epoch(config, -1)

    def test_unsorted_decay_epochs_rejected(self):
        with pytest.raises(ValueError, match="ascending"):
            TrainConfig(decay_epochs=(32, 16))


class TestEvaluate:
    def test_perfect_classifier(self):
        report = MetricsReport.from_predictions([0, 1, 2, 1], [0, 1, 2, 1], 3)
        assert report.micro_f1 == 1.0
        assert report.macro_f1 == 1.0
        assert np.all(report.confusion == np.diag([1, 2, 1]))

    def test_hand_counted_confusion(self):
        report = MetricsReport.from_predictions([0, 0, 1, 1], [0, 1, 1, 1], 2)
        np.testing.assert_array_equal(report.confusion, [[1, 1], [0, 2]])
        assert report.micro_f1 == pytest.approx(0.75)
        assert report.precision[0] == pytest.approx(1.0)
        assert report.recall[0] == pytest.approx(0.5)
        assert report.precision[1] == pytest.approx(2 / 3)
        assert report.recall[1] == pytest.approx(1.0)

    def test_micro_metrics_equal_accuracy(self):
        rng = np.random.default_rng(4)
        y_true = rng.integers(0, 5, size=200)
        y_pred = rng.integers(0, 5, size=200)
        report = MetricsReport.from_predictions(y_true, y_pred, 5)
        acc = float((y_true == y_pred).mean())
        assert report.micro_precision == pytest.approx(acc)
        assert report.micro_recall == pytest.approx(acc)
        assert report.micro_f1 == pytest.approx(acc)

    def test_against_sklearn_oracle(self):
        rng = np.random.default_rng(5)
        y_true = rng.integers(0, 4, size=300)
        y_pred = rng.integers(0, 4, size=300)
        report = MetricsReport.from_predictions(y_true, y_pred, 4)
        assert report.micro_f1 == pytest.approx(
            f1_score(y_true, y_pred, average="micro"))
        assert report.macro_f1 == pytest.approx(
            f1_score(y_true, y_pred, average="macro"))
        np.testing.assert_allclose(
            report.precision, precision_score(y_true, y_pred, average=None,
                                              zero_division=0.0))
        np.testing.assert_allclose(
            report.recall, recall_score(y_true, y_pred, average=None, zero_division=0.0))

    def test_confusion_sums_to_sample_count(self):
        report = MetricsReport.from_predictions([0, 1, 1], [1, 1, 0], 2)
        assert report.confusion.sum() == report.n_samples == 3

    def test_argmax_tie_breaks_to_lowest_class(self):
        model = build_model(TINY_MODEL, seed=0)
        for name, p in model.params.items():
            p.data[:] = 0.0  # all-zero net emits identical logits
        records = synth_dataset(0, 4, 2, 2, 64, 0.0)
        report = evaluate(model, records)
        np.testing.assert_array_equal(report.confusion[:, 1], [0, 0])

    def test_prediction_invariant_under_logit_shift(self):
        rng = np.random.default_rng(6)
        logits = rng.standard_normal((10, 4))
        shifted = logits + 57.0
        assert np.array_equal(np.argmax(logits, 1), np.argmax(shifted, 1))

    def test_parallel_evaluation_matches_serial(self):
        model = build_model(TINY_MODEL, seed=8)
        records = synth_dataset(10, 20, 2, 2, 64, 0.1)
        x, y = records_to_arrays(records)
        serial = evaluate_arrays(model, x, y, batch_size=4, workers=1)
        threaded = evaluate_arrays(model, x, y, batch_size=4, workers=4)
        np.testing.assert_array_equal(serial.confusion, threaded.confusion)


class TestTrainingLoop:
    def test_zero_lr_leaves_parameters_bitwise_identical(self):
        model = build_model(TINY_MODEL, seed=1)
        before = {n: p.data.copy() for n, p in model.params.items()}
        records = synth_dataset(2, 8, 2, 2, 64, 0.05)
        x, y = records_to_arrays(records)
        config = TrainConfig(max_epochs=2, initial_lr=0.0, batch_size=4, seed=0)
        fit_arrays(model, x, y, config)
        for name, p in model.params.items():
            assert p.data.tobytes() == before[name].tobytes(), name

    def test_identical_seeds_give_bitwise_identical_histories(self):
        records = synth_dataset(3, 12, 2, 2, 64, 0.05)
        x, y = records_to_arrays(records)
        losses = []
        for _ in range(2):
            model = build_model(TINY_MODEL, seed=5)
            config = TrainConfig(max_epochs=3, initial_lr=1e-3, batch_size=4, seed=7)
            history = fit_arrays(model, x, y, config)
            losses.append(np.array([h.train_loss for h in history]).tobytes())
        assert losses[0] == losses[1]

    def test_overfits_separable_synthetic_data(self):
        records = synth_dataset(4, 64, 2, 2, 64, noise_std=0.02)
        x, y = records_to_arrays(records)
        model = build_model(TINY_MODEL, seed=2)
        config = TrainConfig(max_epochs=20, initial_lr=3e-3, decay_epochs=(),
                             batch_size=16, seed=1)
        fit_arrays(model, x, y, config)
        report = evaluate_arrays(model, x, y)
        assert report.micro_f1 >= 0.99

    def test_shape_mismatch_fails_before_any_update(self):
        model = build_model(TINY_MODEL, seed=0)
        before = model.params["stem.weight"].data.copy()
        x = np.zeros((4, 3, 64), dtype=np.float32)  # wrong lead count
        with pytest.raises(Exception, match="shape"):
            fit_arrays(model, x, np.zeros(4, dtype=np.int64), TrainConfig(max_epochs=1))
        np.testing.assert_array_equal(model.params["stem.weight"].data, before)

    def test_history_rows_carry_epoch_lr_and_val(self):
        records = synth_dataset(5, 8, 2, 2, 64, 0.05)
        x, y = records_to_arrays(records)
        model = build_model(TINY_MODEL, seed=3)
        config = TrainConfig(max_epochs=2, initial_lr=1e-3, batch_size=4, seed=0)
        history = fit_arrays(model, x, y, config, x, y)
        assert [h.epoch for h in history] == [0, 1]
        assert all(isinstance(h, EpochStats) and h.val is not None for h in history)

    def test_train_wrapper_returns_model_and_history(self):
        records = synth_dataset(6, 8, 2, 2, 64, 0.05)
        model = build_model(TINY_MODEL, seed=4)
        config = TrainConfig(max_epochs=1, initial_lr=1e-3, batch_size=4)
        out_model, history = train(model, records, records[:4], config)
        assert out_model is model
        assert len(history) == 1 and history[0].val is not None


class TestCrossValidate:
    def test_fold_arithmetic_and_sample_counts(self):
        records = synth_dataset(8, 20, 2, 2, 64, 0.05, records_per_subject=2)
        config = TrainConfig(max_epochs=1, initial_lr=1e-3, batch_size=8, seed=0)
        reports, summary = crossvalidate(records, TINY_MODEL, config, k=5)
        assert len(reports) == 5
        assert sum(r.n_samples for r in reports) == 20
        assert "micro_f1" in summary and "mean" in summary["micro_f1"]

    def test_separable_data_scores_high_on_every_fold(self):
        records = synth_dataset(9, 40, 2, 2, 64, noise_std=0.02)
        config = TrainConfig(max_epochs=15, initial_lr=3e-3, decay_epochs=(),
                             batch_size=16, seed=2)
        reports, _ = crossvalidate(records, TINY_MODEL, config, k=5)
        for report in reports:
            assert report.micro_f1 >= 0.95
