import csv
import json
import struct

import numpy as np
import pytest
import torch

import locnoise as ln

from train_export import MNIST_HELP, file_digest, load_dataset, train_and_export


class TestDeterminism:
    def test_same_seed_identical_digest(self, tmp_path):
        _, _, p1 = train_and_export("digits", seed=1, out_dir=tmp_path / "a", epochs=3)
        _, _, p2 = train_and_export("digits", seed=1, out_dir=tmp_path / "b", epochs=3)
        assert file_digest(p1["weights"]) == file_digest(p2["weights"])

    def test_different_seed_differs(self, tmp_path):
        _, _, p1 = train_and_export("digits", seed=1, out_dir=tmp_path / "a", epochs=3)
        _, _, p2 = train_and_export("digits", seed=2, out_dir=tmp_path / "b", epochs=3)
        assert file_digest(p1["weights"]) != file_digest(p2["weights"])


class TestBundleFormat:
    def test_weight_file_magic_and_version(self, bundle):
        _, _, paths = bundle
        head = paths["weights"].read_bytes()[:5]
        assert head[:4] == b"LOCN"
        assert head[4] == 1

    def test_loads_in_engine_without_shape_errors(self, bundle):
        _, _, paths = bundle
        net = ln.load_weights(paths["weights"])
        assert net.input_shape == (8, 8, 1)
        assert net.num_classes == 10

    def test_manifest_matches_exported_images(self, bundle):
        _, _, paths = bundle
        rows = list(csv.DictReader(open(paths["manifest"])))
        assert len(rows) == 100
        for row in rows:
            img = ln.read_ltns(paths["images"] / row["filename"])
            assert img.shape == (8, 8, 1)
            assert 0 <= int(row["label"]) <= 9
            assert img.data.min() >= 0.0 and img.data.max() <= 1.0

    def test_report_contents(self, bundle):
        _, accuracy, paths = bundle
        report = json.loads(paths["report"].read_text())
        assert report["seed"] == 1
        assert report["dataset"] == "digits"
        assert report["accuracy"] == accuracy


class TestCrossChecks:
    def test_clean_accuracy_at_least_095(self, bundle):
        _, accuracy, _ = bundle
        assert accuracy >= 0.95

    def test_logits_agree_within_1e3(self, bundle):
        model, _, paths = bundle
        net = ln.load_weights(paths["weights"])
        rows = list(csv.DictReader(open(paths["manifest"])))
        assert len(rows) == 100
        worst = 0.0
        for row in rows:
            x = ln.read_ltns(paths["images"] / row["filename"])
            mine = ln.forward(net, x).logits
            with torch.no_grad():
                ref = model(torch.from_numpy(x.data[:, :, 0].copy())[None, None]).numpy()[0]
            worst = max(worst, float(np.abs(mine - ref).max()))
        assert worst <= 1e-3, f"max |logit diff| {worst}"

    def test_label_agreement_at_least_99pct(self, bundle):
        model, _, paths = bundle
        net = ln.load_weights(paths["weights"])
        rows = list(csv.DictReader(open(paths["manifest"])))
        agree = 0
        for row in rows:
            x = ln.read_ltns(paths["images"] / row["filename"])
            with torch.no_grad():
                ref = model(torch.from_numpy(x.data[:, :, 0].copy())[None, None]).numpy()[0]
            agree += int(ln.forward(net, x).label == int(np.argmax(ref)))
        assert agree / len(rows) >= 0.99


class TestDatasets:
    def test_digits_shape_and_range(self, tmp_path):
        images, labels = load_dataset("digits", tmp_path)
        assert images.shape[1:] == (8, 8)
        assert images.min() >= 0.0 and images.max() <= 1.0
        assert set(np.unique(labels)) == set(range(10))

    def test_unknown_dataset_fatal(self, tmp_path):
        with pytest.raises(SystemExit, match="unknown dataset"):
            load_dataset("cifar", tmp_path)

    def test_mnist_unavailable_gives_instructions(self, tmp_path, monkeypatch):
        import torchvision.datasets as tvd

        def boom(*args, **kwargs):
            raise RuntimeError("no network")

        monkeypatch.setattr(tvd, "MNIST", boom)
        with pytest.raises(SystemExit) as err:
            load_dataset("mnist", tmp_path)
        assert "scikit-learn" in str(err.value)
        assert MNIST_HELP.split()[0] in str(err.value)
