"""Train the small weight files checked in under crates/core/fixtures/.

The networks and the loss mirror the Rust implementation: masked first layer
(mask A), pointwise (local) or [1, 3, 1] (full) residual blocks with mask B,
two pointwise output layers, and a discretized logistic mixture with a 1e-4
uniform component. Weights are exported in the NLW1 layout.

    python3 tools/train_fixtures.py [--steps N] [--out DIR]
"""

import argparse
import struct
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

ALPHA = 1e-4
MIN_LOG_SCALE = -7.0


# ---------------------------------------------------------------- textures
# Keep in sync with crates/core/tests/common/mod.rs.

def blocks_gray(rng, n, size=16, block=4):
    levels = rng.integers(32, 224, size=(n, size // block, size // block))
    img = np.kron(levels, np.ones((block, block), dtype=np.int64))
    img = img + rng.integers(-6, 7, size=img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)[:, None]


def ramps_gray(rng, n, size=16):
    a = rng.uniform(64, 192, size=(n, 1, 1))
    gx = rng.uniform(-4, 4, size=(n, 1, 1))
    gy = rng.uniform(-4, 4, size=(n, 1, 1))
    idx = np.arange(size) - (size - 1) / 2
    img = np.round(a + gx * idx[None, None, :] + gy * idx[None, :, None])
    img = img + rng.integers(-1, 2, size=img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)[:, None]


def blocks_color(rng, n, size=16, block=4):
    levels = rng.integers(32, 224, size=(n, 3, size // block, size // block))
    img = np.kron(levels, np.ones((block, block), dtype=np.int64))
    shared = rng.integers(-6, 7, size=(n, 1, size, size))
    img = img + shared + rng.integers(-2, 3, size=img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


# ---------------------------------------------------------------- model

class MaskedConv(nn.Conv2d):
    def __init__(self, cin, cout, k, kind):
        super().__init__(cin, cout, k, padding=k // 2)
        mask = torch.zeros(k, k)
        c = k // 2
        mask[:c, :] = 1
        mask[c, :c] = 1
        if kind == "B":
            mask[c, c] = 1
        self.register_buffer("mask", mask[None, None].expand(cout, cin, k, k).clone())

    def forward(self, x):
        return F.conv2d(x, self.weight * self.mask, self.bias, padding=self.padding)


class PixelCNN(nn.Module):
    def __init__(self, variant, horizon, blocks, hidden, mixtures, channels):
        super().__init__()
        self.spec = (variant, horizon, blocks, hidden, mixtures, channels)
        out = 3 * mixtures if channels == 1 else 10 * mixtures
        middle = 1 if variant == "local" else 3
        self.first = MaskedConv(channels, hidden, 2 * horizon + 1, "A")
        self.blocks = nn.ModuleList(
            nn.ModuleList([MaskedConv(hidden, hidden, 1, "B"),
                           MaskedConv(hidden, hidden, middle, "B"),
                           MaskedConv(hidden, hidden, 1, "B")])
            for _ in range(blocks))
        self.head1 = MaskedConv(hidden, hidden, 1, "B")
        self.head2 = MaskedConv(hidden, out, 1, "B")

    def forward(self, x):
        h = F.relu(self.first(x))
        for block in self.blocks:
            t = h
            for conv in block:
                t = F.relu(conv(t))
            h = h + t
        return self.head2(F.relu(self.head1(h)))

    def layers(self):
        yield self.first
        for block in self.blocks:
            yield from block
        yield self.head1
        yield self.head2

    def export(self, path):
        variant, horizon, blocks, hidden, mixtures, channels = self.spec
        buf = bytearray(b"NLW1")
        buf.append(1)
        buf += struct.pack("<6I", 0 if variant == "local" else 1, horizon, blocks, hidden, mixtures, channels)
        for conv in self.layers():
            w = (conv.weight * conv.mask).detach().cpu().numpy().astype("<f4")
            b = conv.bias.detach().cpu().numpy().astype("<f4")
            buf += w.tobytes() + b.tobytes()
        Path(path).write_bytes(bytes(buf))


def nll_bits(out, x_int, mixtures):
    """Per-image negative log2 likelihood. out: (N, P, H, W), x_int: (N, C, H, W)."""
    n, channels, hgt, wid = x_int.shape
    k = mixtures
    x = 2.0 * x_int.double() / 255.0 - 1.0
    out = out.double()
    logits = out[:, :k]
    log_w = F.log_softmax(logits, dim=1)
    total = torch.zeros(n, dtype=torch.float64)
    for c in range(channels):
        mean = out[:, k * (1 + c):k * (2 + c)]
        log_s = out[:, k * (1 + channels + c):k * (2 + channels + c)].clamp(min=MIN_LOG_SCALE)
        if c == 1:
            mean = mean + torch.tanh(out[:, k * 7:k * 8]) * x[:, 0:1]
        elif c == 2:
            mean = mean + torch.tanh(out[:, k * 8:k * 9]) * x[:, 0:1] + torch.tanh(out[:, k * 9:k * 10]) * x[:, 1:2]
        xc = x[:, c:c + 1]
        inv_s = torch.exp(-log_s)
        upper = torch.where(x_int[:, c:c + 1] == 255, torch.ones_like(mean),
                            torch.sigmoid((xc + 1 / 255 - mean) * inv_s))
        lower = torch.where(x_int[:, c:c + 1] == 0, torch.zeros_like(mean),
                            torch.sigmoid((xc - 1 / 255 - mean) * inv_s))
        mass = (torch.exp(log_w) * (upper - lower)).sum(dim=1)
        p = (1 - ALPHA) * mass + ALPHA / 256
        total = total - torch.log2(p).sum(dim=(1, 2))
    return total


def train(model, data, steps, seed, lr=2e-3, batch=64):
    torch.manual_seed(seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    data = torch.from_numpy(data).long()
    dims = data[0].numel()
    mixtures = model.spec[4]
    for step in range(steps):
        idx = torch.randint(0, len(data), (batch,))
        x = data[idx]
        out = model(2.0 * x.float() / 255.0 - 1.0)
        loss = nll_bits(out, x, mixtures).mean() / dims
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % 250 == 0 or step == steps - 1:
            print(f"  step {step:5d}  bpd {loss.item():.4f}", flush=True)
    return model


def evaluate(model, data):
    with torch.no_grad():
        x = torch.from_numpy(data).long()
        out = model(2.0 * x.float() / 255.0 - 1.0)
        return (nll_bits(out, x, model.spec[4]) / x[0].numel()).mean().item()


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "crates/core/fixtures"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240601)

    gray = blocks_gray(rng, 4000)
    color = blocks_color(rng, 4000)
    held_a = blocks_gray(rng, 200)
    held_b = ramps_gray(rng, 200)

    jobs = [
        ("local_gray.nlw", PixelCNN("local", 2, 0, 32, 5, 1), gray),
        ("full_gray.nlw", PixelCNN("full", 2, 3, 32, 5, 1), gray),
        ("local_rgb.nlw", PixelCNN("local", 2, 0, 32, 5, 3), color),
    ]
    for seed, (name, model, data) in enumerate(jobs):
        print(f"training {name}")
        train(model, data, args.steps, seed)
        model.export(out / name)
        if data is gray:
            print(f"  held-out blocks bpd {evaluate(model, held_a):.4f}  ramps bpd {evaluate(model, held_b):.4f}")
        else:
            print(f"  held-out bpd {evaluate(model, blocks_color(rng, 200)):.4f}")


if __name__ == "__main__":
    main()
