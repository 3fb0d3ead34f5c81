import math

import numpy as np
import pytest

pymnn = pytest.importorskip("pymnn")


def unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def test_byol_case_is_two_minus_two_cos():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p, z = unit(rng, 16), unit(rng, 16)
        out = pymnn.mnn_loss(p, z, [], pymnn.weights_wse(0))
        assert out["total"] == pytest.approx(2 - 2 * p @ z, abs=1e-12)


def test_weights_and_lambda_endpoints():
    assert pymnn.weights_wse(4) == pytest.approx([1, 0.25, 0.25, 0.25, 0.25])
    assert pymnn.weights_mse(3) == pytest.approx([0.25] * 4)
    rng = np.random.default_rng(1)
    p, z = unit(rng, 8), unit(rng, 8)
    nb = [unit(rng, 8) for _ in range(3)]
    assert pymnn.simplified_loss(p, z, nb, 0.0) == pytest.approx(2 * np.sum((p - z) ** 2))
    unmixed = pymnn.mnn_loss(p, z, nb, pymnn.weights_wse(3))["total"]
    assert pymnn.simplified_loss(p, z, nb, 1.0) == pytest.approx(unmixed)


def test_entropy_and_errors():
    assert pymnn.weight_entropy([0.2] * 5) == pytest.approx(math.log(5), abs=1e-12)
    with pytest.raises(ValueError):
        pymnn.l2_normalize(np.zeros(3))
    with pytest.raises(ValueError):
        pymnn.weight_entropy([0.5, -0.1])


def test_support_set_topk_matches_numpy():
    rng = np.random.default_rng(2)
    s = pymnn.SupportSet(64, 8)
    batch = rng.standard_normal((80, 8))
    s.refresh(batch[:48])
    s.refresh(batch[48:])
    assert len(s) == 64
    with pytest.raises(ValueError):
        s.refresh(batch)
    kept = batch[16:] / np.linalg.norm(batch[16:], axis=1, keepdims=True)
    q = unit(rng, 8)
    got = [i for i, _ in s.topk(q, 5)]
    assert got == list(np.argsort(-(kept @ q), kind="stable")[:5])


def test_dataset_and_tiny_training_run():
    tx, ty, vx, vy = pymnn.generate_dataset(n_train=200, n_test=50)
    assert tx.shape == (200, 64) and len(vy) == 50
    assert 0.1 < pymnn.knn_accuracy(tx, ty, vx, vy, 5) <= 1.0
    seen = []
    manifest = pymnn.train(
        {
            "dataset": {"n_train": 256, "n_test": 64},
            "batch_size": 64,
            "support_capacity": 128,
            "k": 3,
            "epochs": 2,
            "warmup_epochs": 1,
        },
        on_epoch=lambda epoch, loss: seen.append((epoch, loss)),
    )
    assert [e for e, _ in seen] == [1, 2]
    assert len(manifest["epochs"]) == 2
    assert 0.0 <= manifest["final_eval"]["knn_acc"] <= 1.0
