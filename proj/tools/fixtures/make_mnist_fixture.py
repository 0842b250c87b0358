#!/usr/bin/env python3
"""Builds the MNIST fixture files used by the test suites.

Writes into the output directory:
  mnist_cnn.a3mw          small adversarially trained CNN (A3MW format)
  mnist_1000.a3ds         1,000 held-out digits (A3DS format)
  mnist_100-images.idx    first 100 held-out digits (IDX ubyte)
  mnist_100-labels.idx
  golden.json             reference logits and label histogram

Digits come from the 5,000-sample MNIST subset bundled with the mlxtend
package (pip install --no-deps mlxtend). The reference logits are computed
by torch in float64 and serve as an independent forward-pass oracle.
"""

import argparse
import gzip
import importlib.util
import json
import os
import struct

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


def load_mnist_5k(path=None):
    if path is None:
        spec = importlib.util.find_spec("mlxtend")
        if spec is None:
            raise SystemExit("mlxtend not installed; pass --csv")
        path = os.path.join(spec.submodule_search_locations[0], "data", "data", "mnist_5k.csv.gz")
    with gzip.open(path, "rt") as fh:
        arr = np.loadtxt(fh, delimiter=",")
    x = arr[:, :-1].astype(np.uint8).reshape(-1, 1, 28, 28)
    y = arr[:, -1].astype(np.int64)
    return x, y


class Net(nn.Module):
    # Mirrors the layer list written to the A3MW file.
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 4, 3, stride=1, padding=1)
        self.conv2 = nn.Conv2d(4, 8, 3, stride=2, padding=1)
        self.fc1 = nn.Linear(8 * 7 * 7, 32)
        self.fc2 = nn.Linear(32, 10)

    def forward(self, x):
        x = F.max_pool2d(F.relu(self.conv1(x)), 2)
        x = F.relu(self.conv2(x))
        x = torch.flatten(x, 1)
        x = F.relu(self.fc1(x))
        return self.fc2(x)


def pgd(model, x, y, eps, steps, alpha):
    delta = (torch.rand_like(x) * 2 - 1) * eps
    xa = (x + delta).clamp(0, 1)
    for _ in range(steps):
        xa.requires_grad_(True)
        loss = F.cross_entropy(model(xa), y)
        (g,) = torch.autograd.grad(loss, xa)
        xa = xa.detach() + alpha * g.sign()
        xa = torch.min(torch.max(xa, x - eps), x + eps).clamp(0, 1)
    return xa.detach()


def train(model, x, y, eps, epochs, seed):
    gen = torch.Generator().manual_seed(seed)
    opt = torch.optim.Adam(model.parameters(), lr=3e-3)
    n = x.shape[0]
    for epoch in range(epochs):
        # Linear epsilon warm-up over the first half of training.
        e = eps * min(1.0, (epoch + 1) / max(1, epochs // 2))
        perm = torch.randperm(n, generator=gen)
        model.train()
        for i in range(0, n, 64):
            idx = perm[i:i + 64]
            xb, yb = x[idx], y[idx]
            xa = pgd(model, xb, yb, e, 7, 2.5 * e / 7)
            loss = F.cross_entropy(model(xa), yb)
            opt.zero_grad()
            loss.backward()
            opt.step()
        print(f"epoch {epoch} eps {e:.3f} loss {loss.item():.3f}", flush=True)


def write_a3mw(model, path):
    layers = []
    c1, c2, f1, f2 = model.conv1, model.conv2, model.fc1, model.fc2

    def conv(m):
        geo = struct.pack("<5I", m.in_channels, m.out_channels, m.kernel_size[0], m.stride[0], m.padding[0])
        return b"\x01" + geo + m.weight.detach().float().numpy().astype("<f4").tobytes() + \
            m.bias.detach().float().numpy().astype("<f4").tobytes()

    def dense(m):
        geo = struct.pack("<2I", m.in_features, m.out_features)
        return b"\x00" + geo + m.weight.detach().float().numpy().astype("<f4").tobytes() + \
            m.bias.detach().float().numpy().astype("<f4").tobytes()

    relu, pool, flat = b"\x02", b"\x03", b"\x04"
    layers = [conv(c1), relu, pool, conv(c2), relu, flat, dense(f1), relu, dense(f2)]
    with open(path, "wb") as fh:
        fh.write(b"A3MW" + struct.pack("<I", 1) + struct.pack("<3I", 1, 28, 28) + struct.pack("<I", 10))
        fh.write(struct.pack("<I", len(layers)))
        for blob in layers:
            fh.write(blob)


def write_a3ds(x, y, path):
    n, c, h, w = x.shape
    with open(path, "wb") as fh:
        fh.write(b"A3DS" + struct.pack("<5I", 1, n, c, h, w))
        fh.write(x.astype(np.uint8).tobytes())
        fh.write(y.astype(np.uint8).tobytes())


def write_idx(x, y, img_path, lbl_path):
    n = x.shape[0]
    with open(img_path, "wb") as fh:
        fh.write(struct.pack(">4I", 0x00000803, n, 28, 28))
        fh.write(x.astype(np.uint8).tobytes())
    with open(lbl_path, "wb") as fh:
        fh.write(struct.pack(">2I", 0x00000801, n))
        fh.write(y.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--csv", default=None)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--eps", type=float, default=0.3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    x_u8, y = load_mnist_5k(args.csv)
    # The bundled subset is sorted by label: split 400/100 per class, then shuffle.
    rng = np.random.default_rng(args.seed)
    train_idx, test_idx = [], []
    for c in range(10):
        idx = rng.permutation(np.flatnonzero(y == c))
        train_idx.extend(idx[:400])
        test_idx.extend(idx[400:])
    train_idx = rng.permutation(train_idx)
    test_idx = rng.permutation(test_idx)
    x_train, y_train = x_u8[train_idx], y[train_idx]
    x_test, y_test = x_u8[test_idx], y[test_idx]

    model = Net()
    xt = torch.tensor(x_train, dtype=torch.float32) / 255.0
    yt = torch.tensor(y_train)
    train(model, xt, yt, args.eps, args.epochs, args.seed)

    model.eval()
    xe = torch.tensor(x_test, dtype=torch.float32) / 255.0
    ye = torch.tensor(y_test)
    with torch.no_grad():
        clean = (model(xe).argmax(1) == ye).float().mean().item()
    xa = pgd(model, xe, ye, args.eps, 40, 0.01)
    with torch.no_grad():
        robust = (model(xa).argmax(1) == ye).float().mean().item()
    print(f"clean {clean:.3f} pgd40 {robust:.3f}")

    os.makedirs(args.out, exist_ok=True)
    write_a3mw(model, os.path.join(args.out, "mnist_cnn.a3mw"))
    write_a3ds(x_test, y_test, os.path.join(args.out, "mnist_1000.a3ds"))
    write_idx(x_test[:100], y_test[:100], os.path.join(args.out, "mnist_100-images.idx"),
              os.path.join(args.out, "mnist_100-labels.idx"))

    # Reference forward pass in float64 from the float32 weights actually stored.
    ref = Net().double()
    ref.load_state_dict({k: v.detach().float().double() for k, v in model.state_dict().items()})
    with torch.no_grad():
        x0 = torch.tensor(x_test[:1], dtype=torch.float64) / 255.0
        logits0 = ref(x0)[0].tolist()
        preds = ref(torch.tensor(x_test, dtype=torch.float64) / 255.0).argmax(1).numpy()
    golden = {
        "image0_label": int(y_test[0]),
        "image0_logits": logits0,
        "image0_prediction": int(np.argmax(logits0)),
        "clean_correct": int((preds == y_test).sum()),
        "first100_label_histogram": np.bincount(y_test[:100], minlength=10).tolist(),
    }
    with open(os.path.join(args.out, "golden.json"), "w") as fh:
        json.dump(golden, fh, indent=2)


if __name__ == "__main__":
    main()
