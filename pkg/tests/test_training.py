import csv

import numpy as np
import numpy.testing as npt
import pytest

from splinenet.backprop import GradientTape, loss_grad_mse
from splinenet.data import Dataset, gen_symbolic, split
from splinenet.network import Architecture, Network, init_network
from splinenet.training import (
    AdamState,
    TrainConfig,
    TrainingDiverged,
    adam_step,
    evaluate,
    grid_search,
    mse_loss,
    sgd_step,
    softmax_xent,
    softmax_xent_batch,
    train,
)


def linear_net(w, b):
    return Network([], np.atleast_2d(w), np.atleast_1d(b))


def fabricated_tape(net, grads):
    named = dict(grads)
    return GradientTape(
        layer_grads=[],
        out_weights=named.get("output.weights", np.zeros_like(net.out_weights)),
        out_bias=named.get("output.bias", np.zeros_like(net.out_bias)),
    )


class TestLosses:
    def test_mse_zero_at_match(self):
        assert mse_loss([1.0, 2.0], [1.0, 2.0], 1) == 0.0

    def test_mse_sum_of_squares(self):
        assert mse_loss([1.0, 1.0], [0.0, 0.0], 1) == 2.0

    def test_mse_gradient_consistent(self, rng):
        # numeric gradient of the loss matches loss_grad_mse
        y_hat = rng.normal(size=6)
        y = rng.normal(size=6)
        g = loss_grad_mse(y_hat, y, 2)
        h = 1e-6
        for i in range(6):
            bumped = y_hat.copy()
            bumped[i] += h
            up = mse_loss(bumped, y, 2)
            bumped[i] -= 2 * h
            down = mse_loss(bumped, y, 2)
            npt.assert_allclose((up - down) / (2 * h), g[i], atol=1e-8)

    def test_xent_uniform_logits(self):
        for k in (2, 5, 10):
            loss, _ = softmax_xent(np.zeros(k), 0)
            npt.assert_allclose(loss, np.log(k), atol=1e-12)

    def test_xent_confident_correct_approaches_zero(self):
        loss, _ = softmax_xent(np.array([100.0, 0.0, 0.0]), 0)
        assert 0 <= loss < 1e-10

    def test_xent_dlogits_sum_zero(self, rng):
        for _ in range(20):
            logits = rng.normal(size=7) * 10
            _, d = softmax_xent(logits, int(rng.integers(7)))
            assert abs(d.sum()) <= 1e-12

    def test_xent_invalid_class(self):
        with pytest.raises(ValueError, match="class index"):
            softmax_xent(np.zeros(3), 3)

    def test_xent_batch_matches_single(self, rng):
        logits = rng.normal(size=(4, 5))
        classes = rng.integers(0, 5, 4)
        loss, d = softmax_xent_batch(logits, classes)
        singles = [softmax_xent(logits[i], classes[i]) for i in range(4)]
        npt.assert_allclose(loss, np.mean([s[0] for s in singles]), atol=1e-12)
        npt.assert_allclose(d, np.stack([s[1] for s in singles]) / 4, atol=1e-15)


class TestOptimizers:
    def test_sgd_hand_value(self):
        net = linear_net([[1.0]], [0.0])
        tape = fabricated_tape(net, {"output.weights": np.array([[2.0]])})
        sgd_step(net.parameters(), tape, 0.1)
        assert net.out_weights[0, 0] == 0.8

    def test_zero_gradient_no_change(self):
        net = linear_net([[1.5]], [0.5])
        before = [p.copy() for _, p in net.parameters()]
        tape = fabricated_tape(net, {})
        sgd_step(net.parameters(), tape, 0.1)
        adam_step(net.parameters(), tape, AdamState(), TrainConfig())
        for (_, p), b in zip(net.parameters(), before):
            npt.assert_array_equal(p, b)

    @pytest.mark.parametrize("scale", [1e-6, 1.0, 1e6])
    def test_adam_first_step_magnitude(self, scale):
        # after bias correction the first update is lr * g / (|g| + eps)
        net = linear_net([[0.0]], [0.0])
        cfg = TrainConfig(learning_rate=0.01)
        tape = fabricated_tape(net, {"output.weights": np.array([[scale]])})
        adam_step(net.parameters(), tape, AdamState(), cfg)
        expected = cfg.learning_rate * scale / (scale + cfg.eps)
        npt.assert_allclose(abs(net.out_weights[0, 0]), expected, rtol=1e-12)
        npt.assert_allclose(abs(net.out_weights[0, 0]), cfg.learning_rate, rtol=2e-2)

    def test_shape_mismatch_rejected(self):
        net = linear_net([[0.0, 0.0]], [0.0])
        tape = fabricated_tape(net, {"output.weights": np.zeros((2, 2))})
        with pytest.raises(ValueError, match="shape"):
            sgd_step(net.parameters(), tape, 0.1)


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=-1)
        with pytest.raises(ValueError):
            TrainConfig(beta1=1.0)
        with pytest.raises(ValueError):
            TrainConfig(optimizer="lbfgs")
        with pytest.raises(ValueError):
            TrainConfig(loss="hinge")


def tiny_regression(seed=0, n=96):
    full = gen_symbolic("f1", seed=seed, n_samples=n)
    return split(full, 0.75, seed=3)


class TestTrain:
    def test_zero_learning_rate_freezes_parameters(self):
        train_ds, test_ds = tiny_regression()
        net = init_network(Architecture("lcn", 1, 1, (4,), num_basis=6), seed=0)
        before = [p.copy() for _, p in net.parameters()]
        cfg = TrainConfig(
            epochs=3, learning_rate=0.0, optimizer="sgd", loss="mse", seed=0, shuffle=False
        )
        _, metrics = train(net, train_ds, cfg, test_dataset=test_ds)
        for (_, p), b in zip(net.parameters(), before):
            npt.assert_array_equal(p, b)
        assert len({m.train_loss for m in metrics}) == 1
        assert len({m.test_acc for m in metrics}) == 1

    def test_zero_epochs_returns_untouched(self):
        train_ds, _ = tiny_regression()
        net = init_network(Architecture("mlp", 1, 1, (4,)), seed=0)
        before = [p.copy() for _, p in net.parameters()]
        _, metrics = train(net, train_ds, TrainConfig(epochs=0, loss="mse"))
        assert metrics == []
        for (_, p), b in zip(net.parameters(), before):
            npt.assert_array_equal(p, b)

    def test_single_neuron_fits_sine(self):
        # 1 hidden neuron with a 16-coefficient cubic grid reaches 1e-3
        # test MSE inside 2000 steps
        full = gen_symbolic("f1", seed=1, n_samples=1024)
        train_ds, test_ds = split(full, 0.8, seed=7)
        net = init_network(Architecture("lcn", 1, 1, (1,), num_basis=16, degree=3), seed=0)
        steps_per_epoch = int(np.ceil(len(train_ds) / 32))
        cfg = TrainConfig(
            epochs=2000 // steps_per_epoch,
            batch_size=32,
            learning_rate=1e-2,
            optimizer="adam",
            loss="mse",
            seed=0,
        )
        _, metrics = train(net, train_ds, cfg, test_dataset=test_ds)
        assert metrics[-1].test_acc <= 1e-3
        assert metrics[-1].train_loss < metrics[0].train_loss

    def test_determinism_bitwise(self):
        train_ds, test_ds = tiny_regression()
        cfg = TrainConfig(epochs=4, learning_rate=3e-3, loss="mse", seed=11)
        runs = []
        for _ in range(2):
            net = init_network(Architecture("lcn", 1, 1, (5,), num_basis=8), seed=4)
            net, metrics = train(net, train_ds, cfg, test_dataset=test_ds)
            runs.append((net, [m.train_loss for m in metrics]))
        assert runs[0][1] == runs[1][1]
        for (_, a), (_, b) in zip(runs[0][0].parameters(), runs[1][0].parameters()):
            assert a.tobytes() == b.tobytes()

    def test_divergence_detected(self):
        train_ds, _ = tiny_regression()
        net = init_network(Architecture("lcn", 1, 1, (4,), num_basis=6), seed=0)
        cfg = TrainConfig(epochs=50, learning_rate=1e9, optimizer="sgd", loss="mse", seed=0)
        with pytest.raises(TrainingDiverged, match="epoch"):
            train(net, train_ds, cfg)

    def test_metrics_csv_format(self, tmp_path):
        train_ds, test_ds = tiny_regression()
        net = init_network(Architecture("mlp", 1, 1, (4,)), seed=0)
        path = tmp_path / "metrics.csv"
        cfg = TrainConfig(epochs=2, loss="mse", seed=0)
        train(net, train_ds, cfg, test_dataset=test_ds, metrics_path=str(path))
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        assert header == ["epoch", "train_loss", "train_acc", "test_acc", "seconds", "frac_clamped"]
        assert len(rows) == 2
        assert rows[0][0] == "0" and rows[1][0] == "1"

    def test_classification_with_mse_one_hot(self, rng):
        features = rng.uniform(0, 1, (40, 3))
        targets = (features[:, 0] > 0.5).astype(np.int64)
        ds = Dataset(features=features, targets=targets)
        net = init_network(Architecture("mlp", 3, 2, (6,)), seed=0)
        cfg = TrainConfig(epochs=5, learning_rate=1e-2, loss="mse", seed=0)
        _, metrics = train(net, ds, cfg)
        assert metrics[-1].train_loss < metrics[0].train_loss

    def test_regression_requires_mse(self):
        train_ds, _ = tiny_regression()
        net = init_network(Architecture("mlp", 1, 1, (4,)), seed=0)
        with pytest.raises(ValueError, match="mse"):
            train(net, train_ds, TrainConfig(epochs=1, loss="softmax_xent"))


class TestEvaluate:
    def test_perfect_predictor(self):
        ds = Dataset(features=np.array([[0.0], [1.0]]), targets=np.array([0, 1]))
        net = linear_net([[-1.0], [1.0]], [0.9, 0.0])  # argmax picks 1 iff x > 0.45
        assert evaluate(net, ds) == 1.0

    def test_constant_predictor_balanced_binary(self):
        ds = Dataset(features=np.linspace(0, 1, 10)[:, None], targets=np.array([0, 1] * 5))
        net = linear_net([[0.0], [0.0]], [1.0, 0.0])  # always predicts class 0
        assert evaluate(net, ds) == 0.5

    def test_hand_confusion_fixture(self):
        # 10 samples, predictions known in closed form: class = x > 0.5
        x = np.array([0.1, 0.2, 0.3, 0.4, 0.45, 0.55, 0.6, 0.7, 0.8, 0.9])[:, None]
        targets = np.array([0, 0, 1, 0, 1, 1, 0, 1, 1, 1])
        ds = Dataset(features=x, targets=targets)
        net = linear_net([[0.0], [2.0]], [1.0, 0.0])  # predicts 1 iff 2x > 1
        # predicted: [0,0,0,0,0,1,1,1,1,1] -> 7 of 10 match
        assert evaluate(net, ds) == 0.7

    def test_regression_mse(self, rng):
        x = rng.uniform(0, 1, (20, 2))
        y = x @ np.array([[1.0], [2.0]])
        ds = Dataset(features=x, targets=y)
        net = linear_net([[1.0, 2.0]], [0.0])
        assert evaluate(net, ds) == 0.0

    def test_empty_dataset_rejected(self):
        ds = Dataset(features=np.zeros((0, 2)), targets=np.zeros(0, dtype=np.int64))
        net = linear_net([[0.0, 0.0]], [0.0])
        with pytest.raises(ValueError, match="empty"):
            evaluate(net, ds)


class TestGridSearch:
    def test_small_grid_runs_and_picks_best(self):
        train_ds, val_ds = tiny_regression(n=64)

        def make_net(num_basis, degree, seed):
            return init_network(
                Architecture("lcn", 1, 1, (3,), num_basis=num_basis, degree=degree), seed
            )

        base = TrainConfig(epochs=2, batch_size=16, loss="mse", seed=0)
        results, best = grid_search(make_net, train_ds, val_ds, base, seed=0)
        assert len(results) == 3 * 3 * 2
        assert best["score"] == min(r["score"] for r in results)
        assert {"learning_rate", "num_basis", "degree", "score"} <= best.keys()
