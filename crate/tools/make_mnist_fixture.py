#!/usr/bin/env python3
"""Train the small MNIST CNN fixture and export it as LGTW/LGTD plus reference logits.

Usage:
    python3 tools/make_mnist_fixture.py MNIST_5K_CSV_GZ OUT_DIR

MNIST_5K_CSV_GZ is the 5000-sample MNIST subset shipped inside the mlxtend
wheel (mlxtend/data/data/mnist_5k.csv.gz): 784 pixel columns then the label.
Per class, the first 400 rows train and the last 100 rows form the
1000-sample evaluation set.
"""
import gzip
import io
import json
import struct
import sys
import zlib

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

SEED = 0
MEAN, STD = 0.1307, 0.3081

ROLE_WEIGHT, ROLE_BIAS = 0, 1
TAG_INPUT, TAG_DENSE, TAG_CONV2D, TAG_RELU, TAG_MAXPOOL2D, TAG_FLATTEN = (
    0x01, 0x10, 0x11, 0x12, 0x13, 0x14)


class FixtureCnn(nn.Module):
    # Every flattened weight matrix except the 10-way head has both dims divisible by 4.
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 16, 4)    # [16, 1*4*4]  -> 16x16
        self.conv2 = nn.Conv2d(16, 32, 4)   # [32, 16*4*4] -> 32x256
        self.fc1 = nn.Linear(32 * 4 * 4, 64)  # 64x512
        self.fc2 = nn.Linear(64, 10)          # 10x64, not divisible by 4

    def forward(self, x):
        x = F.max_pool2d(F.relu(self.conv1(x)), 2)  # 28 -> 25 -> 12
        x = F.max_pool2d(F.relu(self.conv2(x)), 2)  # 12 -> 9 -> 4
        x = torch.flatten(x, 1)
        x = F.relu(self.fc1(x))
        return self.fc2(x)


def load(path):
    raw = np.loadtxt(io.BytesIO(gzip.decompress(open(path, "rb").read())), delimiter=",")
    x = ((raw[:, :-1] / 255.0 - MEAN) / STD).astype(np.float32).reshape(-1, 1, 28, 28)
    y = raw[:, -1].astype(np.int64)
    train_idx, test_idx = [], []
    for c in range(10):
        idx = np.flatnonzero(y == c)
        train_idx.extend(idx[:400])
        test_idx.extend(idx[400:])
    test_idx = np.array(test_idx)[np.random.default_rng(SEED).permutation(len(test_idx))]
    return x[train_idx], y[train_idx], x[test_idx], y[test_idx]


def train(xtr, ytr):
    torch.manual_seed(SEED)
    model = FixtureCnn()
    opt = torch.optim.Adam(model.parameters(), lr=2e-3)
    xt, yt = torch.from_numpy(xtr), torch.from_numpy(ytr)
    g = torch.Generator().manual_seed(SEED)
    for _ in range(15):
        perm = torch.randperm(len(xt), generator=g)
        for i in range(0, len(xt), 64):
            b = perm[i:i + 64]
            opt.zero_grad()
            F.cross_entropy(model(xt[b]), yt[b]).backward()
            opt.step()
    return model.eval()


def pstr(s):
    b = s.encode()
    return struct.pack("<H", len(b)) + b


def rec(tag, body):
    return struct.pack("<BI", tag, len(body)) + body


def manifest():
    out = rec(TAG_INPUT, struct.pack("<B3I", 3, 1, 28, 28))
    out += rec(TAG_CONV2D, struct.pack("<6I", 1, 16, 4, 4, 1, 0) + pstr("conv1.weight") + pstr("conv1.bias"))
    out += rec(TAG_RELU, b"") + rec(TAG_MAXPOOL2D, struct.pack("<2I", 2, 2))
    out += rec(TAG_CONV2D, struct.pack("<6I", 16, 32, 4, 4, 1, 0) + pstr("conv2.weight") + pstr("conv2.bias"))
    out += rec(TAG_RELU, b"") + rec(TAG_MAXPOOL2D, struct.pack("<2I", 2, 2))
    out += rec(TAG_FLATTEN, b"")
    out += rec(TAG_DENSE, struct.pack("<2I", 512, 64) + pstr("fc1.weight") + pstr("fc1.bias"))
    out += rec(TAG_RELU, b"")
    out += rec(TAG_DENSE, struct.pack("<2I", 64, 10) + pstr("fc2.weight") + pstr("fc2.bias"))
    return out


def tensor_record(name, role, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    out = pstr(name) + struct.pack("<BBB", role, 0, arr.ndim)
    out += struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes()
    return out


def write_lgtw(model, path):
    sd = model.state_dict()
    body = b"LGTW" + struct.pack("<HI", 1, len(sd))
    for name, t in sd.items():
        role = ROLE_BIAS if name.endswith(".bias") else ROLE_WEIGHT
        body += tensor_record(name, role, t.numpy())
    m = manifest()
    body += struct.pack("<I", len(m)) + m
    open(path, "wb").write(body + struct.pack("<I", zlib.crc32(body)))


def write_lgtd(x, y, path):
    body = b"LGTD" + struct.pack("<HII", 1, 10, len(x))
    body += struct.pack("<B3I", 3, 1, 28, 28)
    body += np.ascontiguousarray(x, dtype="<f4").tobytes()
    body += np.ascontiguousarray(y, dtype="<u4").tobytes()
    open(path, "wb").write(body + struct.pack("<I", zlib.crc32(body)))


def main():
    src, out = sys.argv[1], sys.argv[2]
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)
    xtr, ytr, xte, yte = load(src)
    model = train(xtr, ytr)
    with torch.no_grad():
        logits = model(torch.from_numpy(xte))
    acc = (logits.argmax(1).numpy() == yte).mean() * 100
    print(f"framework top-1 on {len(yte)} samples: {acc:.1f}%")
    torch.save(model.state_dict(), f"{out}/mnist_cnn.pt")
    write_lgtw(model, f"{out}/mnist_cnn.lgtw")
    write_lgtd(xte, yte, f"{out}/mnist_1k.lgtd")
    ref = {
        "samples": 10,
        "framework_top1": float(acc),
        "logits": logits[:10].double().tolist(),
    }
    with open(f"{out}/mnist_cnn_ref_logits.json", "w") as f:
        json.dump(ref, f, indent=1)


if __name__ == "__main__":
    main()
