#!/usr/bin/env python3
"""Train the small fixed CNN on a desk-scale digit dataset and export the
weights, an evaluation image set, and a training report in the attack
toolkit's binary formats.

    python train_export.py --dataset digits --seed 1 --out bundle/

Outputs under --out:
    weights.locn      weight file ("LOCN" format)
    images/*.ltns     evaluation images ("LTNS" raw tensors, values in [0,1])
    manifest.csv      filename,label rows for the evaluation set
    report.json       final accuracy, epochs, seed, dataset

The architecture mirrors the toolkit's built-in stack exactly (conv3x3 C->8,
relu, maxpool2, conv3x3 8->16, relu, maxpool2, flatten, dense), and the
exporter owns all layout conversion: conv kernels go out as (kh, kw, in, out)
and the dense weight is re-indexed from torch's channel-first flatten order
to the toolkit's row-major (h, w, c) order.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import struct
import sys
from pathlib import Path

import numpy as np
import torch
from torch import nn

LOCN_MAGIC = b"LOCN"
LOCN_VERSION = 1
LTNS_MAGIC = b"LTNS"

DATASET_EPOCHS = {"digits": 40, "mnist": 2}

MNIST_HELP = (
    "MNIST could not be downloaded. Fetch the four files from "
    "https://ossci-datasets.s3.amazonaws.com/mnist/ into <out>/mnist_raw/"
    "MNIST/raw/ and rerun, or use --dataset digits (bundled with "
    "scikit-learn, no network needed)."
)


class SmallCnn(nn.Module):
    """conv3x3(C->8) relu pool2 conv3x3(8->16) relu pool2 flatten dense."""

    def __init__(self, height: int, width: int, channels: int, num_classes: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, 8, 3, padding=1)
        self.conv2 = nn.Conv2d(8, 16, 3, padding=1)
        self.pool = nn.MaxPool2d(2)
        self.flat_dim = (height // 4) * (width // 4) * 16
        self.fc = nn.Linear(self.flat_dim, num_classes)

    def forward(self, x):
        x = self.pool(torch.relu(self.conv1(x)))
        x = self.pool(torch.relu(self.conv2(x)))
        return self.fc(x.flatten(1))


def load_dataset(name: str, data_dir: Path):
    """Return (images, labels) with images (N, H, W) float32 in [0, 1]."""
    if name == "digits":
        from sklearn.datasets import load_digits

        raw = load_digits()
        return (raw.images / 16.0).astype(np.float32), raw.target.astype(np.int64)
    if name == "mnist":
        from torchvision import datasets

        try:
            train = datasets.MNIST(str(data_dir / "mnist_raw"), train=True, download=True)
            test = datasets.MNIST(str(data_dir / "mnist_raw"), train=False, download=True)
        except Exception as exc:
            raise SystemExit(f"error: {MNIST_HELP} ({exc})") from exc
        images = np.concatenate([train.data.numpy(), test.data.numpy()])
        labels = np.concatenate([train.targets.numpy(), test.targets.numpy()])
        return (images / 255.0).astype(np.float32), labels.astype(np.int64)
    raise SystemExit(f"error: unknown dataset {name!r} (expected digits or mnist)")


def _split(images, labels, seed: int, eval_count: int):
    order = np.random.default_rng(seed).permutation(len(images))
    eval_idx, train_idx = order[:eval_count], order[eval_count:]
    return (images[train_idx], labels[train_idx]), (images[eval_idx], labels[eval_idx])


def train_model(images, labels, seed: int, epochs: int, batch_size: int, lr: float) -> SmallCnn:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)
    n, h, w = images.shape
    model = SmallCnn(h, w, 1, int(labels.max()) + 1)
    xs = torch.from_numpy(images).unsqueeze(1)
    ys = torch.from_numpy(labels)
    dataset = torch.utils.data.TensorDataset(xs, ys)
    generator = torch.Generator().manual_seed(seed)
    loader = torch.utils.data.DataLoader(
        dataset, batch_size=batch_size, shuffle=True, generator=generator
    )
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    model.train()
    for _ in range(epochs):
        for xb, yb in loader:
            optimizer.zero_grad()
            loss_fn(model(xb), yb).backward()
            optimizer.step()
    model.eval()
    return model


def evaluate(model: SmallCnn, images, labels) -> float:
    with torch.no_grad():
        logits = model(torch.from_numpy(images).unsqueeze(1))
    return float((logits.argmax(1).numpy() == labels).mean())


# ---------------------------------------------------------------------------
# binary export

def _dense_permutation(h2: int, w2: int, c2: int) -> np.ndarray:
    """Map toolkit flatten positions (h, w, c) to torch positions (c, h, w)."""
    perm = np.empty(h2 * w2 * c2, dtype=np.int64)
    for h in range(h2):
        for w in range(w2):
            for c in range(c2):
                perm[(h * w2 + w) * c2 + c] = (c * h2 + h) * w2 + w
    return perm


def export_weights(model: SmallCnn, input_shape, path: Path) -> None:
    height, width, channels = input_shape
    conv1_k = model.conv1.weight.detach().numpy().transpose(2, 3, 1, 0)
    conv2_k = model.conv2.weight.detach().numpy().transpose(2, 3, 1, 0)
    perm = _dense_permutation(height // 4, width // 4, 16)
    fc_w = model.fc.weight.detach().numpy()[:, perm].T
    layers = [
        (0, conv1_k, model.conv1.bias.detach().numpy()),
        (1, None, None),
        (2, None, None),
        (0, conv2_k, model.conv2.bias.detach().numpy()),
        (1, None, None),
        (2, None, None),
        (3, None, None),
        (4, fc_w, model.fc.bias.detach().numpy()),
    ]
    with open(path, "wb") as f:
        f.write(LOCN_MAGIC)
        f.write(struct.pack("<B", LOCN_VERSION))
        f.write(struct.pack("<3I", height, width, channels))
        f.write(struct.pack("<I", len(layers)))
        for kind, weight, bias in layers:
            f.write(struct.pack("<B", kind))
            if weight is None:
                continue
            dims = weight.shape
            f.write(struct.pack(f"<{len(dims)}I", *dims))
            f.write(np.ascontiguousarray(weight, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(bias, dtype="<f4").tobytes())


def export_images(images, labels, out_dir: Path) -> list[tuple[str, int]]:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (img, label) in enumerate(zip(images, labels)):
        name = f"eval{i:04d}.ltns"
        h, w = img.shape
        with open(out_dir / name, "wb") as f:
            f.write(LTNS_MAGIC)
            f.write(struct.pack("<3I", h, w, 1))
            f.write(np.ascontiguousarray(img[:, :, None], dtype="<f4").tobytes())
        rows.append((name, int(label)))
    return rows


def train_and_export(dataset: str, seed: int, out_dir: Path, epochs: int | None = None,
                     batch_size: int = 64, lr: float = 1e-3, eval_count: int = 100):
    """Full pipeline; returns (model, accuracy, bundle paths dict)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images, labels = load_dataset(dataset, out_dir)
    epochs = DATASET_EPOCHS[dataset] if epochs is None else epochs
    (train_x, train_y), (eval_x, eval_y) = _split(images, labels, seed, eval_count)
    model = train_model(train_x, train_y, seed, epochs, batch_size, lr)
    accuracy = evaluate(model, eval_x, eval_y)

    h, w = images.shape[1:]
    weights_path = out_dir / "weights.locn"
    export_weights(model, (h, w, 1), weights_path)
    manifest_rows = export_images(eval_x, eval_y, out_dir / "images")
    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["filename", "label"])
        writer.writerows(manifest_rows)
    report = {"dataset": dataset, "seed": seed, "epochs": epochs,
              "eval_count": len(eval_y), "accuracy": accuracy}
    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(report, indent=2) + "\n")
    paths = {"weights": weights_path, "images": out_dir / "images",
             "manifest": manifest_path, "report": report_path}
    return model, accuracy, paths


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dataset", default="digits", help="digits (offline) or mnist")
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--out", required=True, help="bundle output directory")
    parser.add_argument("--epochs", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--eval-count", type=int, default=100)
    args = parser.parse_args(argv)
    _, accuracy, paths = train_and_export(
        args.dataset, args.seed, Path(args.out), epochs=args.epochs,
        batch_size=args.batch_size, lr=args.lr, eval_count=args.eval_count,
    )
    print(f"eval accuracy {accuracy:.4f}")
    print(f"weights sha256 {file_digest(paths['weights'])}")
    print(f"bundle written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
