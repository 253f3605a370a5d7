"""End-to-end run on a real image-classification task.

Uses scikit-learn's bundled 8x8 digits (no network access needed) pushed
through the IDX writer/loader, so the whole image pipeline is exercised:
bytes on disk -> Dataset -> matched budgets -> training -> evaluation.
"""

import numpy as np
import pytest

import splinenet as sn

sklearn_datasets = pytest.importorskip("sklearn.datasets")


@pytest.fixture(scope="module")
def digits_idx(tmp_path_factory):
    raw = sklearn_datasets.load_digits()
    images = np.round(raw.images / 16.0 * 255.0).astype(np.uint8)
    labels = raw.target.astype(np.uint8)
    tmp = tmp_path_factory.mktemp("digits")
    sn.write_idx_images(tmp / "images.idx", images)
    sn.write_idx_labels(tmp / "labels.idx", labels)
    return tmp / "images.idx", tmp / "labels.idx"


def test_idx_pipeline_trains_all_families(digits_idx):
    ds = sn.load_idx(*digits_idx)
    assert ds.features.shape == (1797, 64)
    assert ds.num_classes == 10
    train_ds, test_ds = sn.split(ds, 0.8, seed=7)

    archs, counts = sn.matched_architectures(4000, ["lcn", "mlp", "kan"], 64, 10)
    spread = (max(counts.values()) - min(counts.values())) / min(counts.values())
    assert spread < 0.02

    cfg = sn.TrainConfig(
        epochs=15, batch_size=32, learning_rate=3e-3, optimizer="adam",
        loss="softmax_xent", seed=0,
    )
    accs = {}
    for family, arch in archs.items():
        net = sn.init_network(arch, seed=0)
        _, metrics = sn.train(net, train_ds, cfg, test_dataset=test_ds)
        accs[family] = metrics[-1].test_acc
        assert metrics[-1].train_loss < metrics[0].train_loss

    # a real learning outcome, not a smoke threshold
    assert accs["lcn"] >= 0.9, accs
    assert all(a >= 0.75 for a in accs.values()), accs
