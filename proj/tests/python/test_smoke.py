"""Smoke tests for the fedmtl python module built from this tree."""

import os
import sys
import tempfile

import numpy as np

import fedmtl


def test_gen_synthetic():
    x, y = fedmtl.gen_synthetic(samples=200, latent_dim=4, feature_dim=12, tasks=3, seed=5)
    assert x.shape == (200, 12)
    assert y.shape == (200, 3)
    assert set(np.unique(y)) <= {0.0, 1.0}
    x2, y2 = fedmtl.gen_synthetic(samples=200, latent_dim=4, feature_dim=12, tasks=3, seed=5)
    assert np.array_equal(x, x2) and np.array_equal(y, y2)
    x3, _ = fedmtl.gen_synthetic(samples=200, latent_dim=4, feature_dim=12, tasks=3, seed=6)
    assert not np.array_equal(x, x3)


def test_model_forward_and_gradient_check():
    model = fedmtl.Model(input_width=6, hidden=[8, 4], output="sigmoid", output_width=1,
                         tags=["common", "task", "personal"], seed=3)
    assert model.tags == ["common", "task", "personal"]
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 6))
    out = model.forward(x)
    assert out.shape == (5, 1)
    assert np.all((out > 0.0) & (out < 1.0))

    y = (rng.random(size=(5, 1)) > 0.5).astype(float)
    assert model.gradient_check(x, y, epsilon=1e-5) <= 1e-4


def test_training_learns_separable_data():
    rng = np.random.default_rng(1)
    w = rng.normal(size=8)
    x = rng.normal(size=(400, 8))
    y = (x @ w > 0).astype(float).reshape(-1, 1)
    model = fedmtl.Model(input_width=8, hidden=[], output="sigmoid", output_width=1,
                         tags=["common"], seed=2)
    model.train_local(x, y, epochs=80, batch_size=32, learning_rate=0.5)
    acc, loss = model.evaluate(x, y)
    assert acc >= 0.97, acc
    assert loss >= 0.0


CONFIG = """
[experiment]
seed = 11
[dataset]
kind = synthetic
samples = 480
latent_dim = 4
feature_dim = 12
tasks = 3
[model]
hidden = 8
output = sigmoid
[partition]
tags = common, task
[federation]
rounds = 4
clients_per_round = 2
learning_rate = 0.2
[scenario]
kind = distributed_multitask_fl
clients = 6
"""


def test_run_config_end_to_end():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "exp.ini")
        with open(cfg, "w") as f:
            f.write(CONFIG)

        out_a = os.path.join(tmp, "a")
        out_b = os.path.join(tmp, "b")
        summary = fedmtl.run_config(cfg, out_dir=out_a)
        assert summary["rounds"] == 4
        assert summary["task_names"] == ["task_0", "task_1", "task_2"]
        assert len(summary["task_accuracy"]) == 3
        assert 0.0 <= summary["overall_accuracy"] <= 1.0
        assert len(summary["accuracy_curve"]) == 4

        fedmtl.run_config(cfg, out_dir=out_b)
        with open(os.path.join(out_a, "metrics.csv"), "rb") as f:
            bytes_a = f.read()
        with open(os.path.join(out_b, "metrics.csv"), "rb") as f:
            bytes_b = f.read()
        assert bytes_a == bytes_b  # byte-identical rerun

        changed = fedmtl.run_config(cfg, seed=99)
        assert changed["rounds"] == 4


def test_grid_config_selects_a_point():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "exp.ini")
        with open(cfg, "w") as f:
            f.write(CONFIG.replace("learning_rate = 0.2", "learning_rate = 0.3, 0.1"))
        summary = fedmtl.grid_config(cfg)
        assert summary["grid_points"] == 2
        assert summary["best_learning_rate"] in (0.3, 0.1)


def test_errors_surface_as_value_errors():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "bad.ini")
        with open(cfg, "w") as f:
            f.write(CONFIG + "mystery_key = 1\n")
        try:
            fedmtl.run_config(cfg)
        except ValueError as e:
            assert "mystery_key" in str(e)
        else:
            raise AssertionError("expected ValueError")


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for test in tests:
        test()
        print(f"{test.__name__}: ok")
    print(f"{len(tests)} smoke tests passed")


if __name__ == "__main__":
    sys.exit(main())
