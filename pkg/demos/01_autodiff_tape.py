"""Tour of the reverse-mode tape: build a computation from numpy arrays,
pull gradients back through it, and cross-check one of them against central
finite differences.

Run:  python3 demos/01_autodiff_tape.py
"""

import numpy as np

from seqstruct import autodiff as ad


def main():
    rng = np.random.default_rng(0)

    # a small two-layer computation ending in a scalar
    x = ad.Tensor(rng.normal(size=(5, 3)), requires_grad=True)
    w1 = ad.Tensor(rng.normal(size=(3, 4)) * 0.5, requires_grad=True)
    w2 = ad.Tensor(rng.normal(size=(4, 1)) * 0.5, requires_grad=True)

    hidden = ad.relu(ad.matmul(x, w1))
    out = ad.sum(ad.matmul(hidden, w2))
    print(f"forward value: {out.item():.6f}")

    ad.backward(out)
    print(f"dout/dw1 shape {w1.grad.shape}, norm {np.linalg.norm(w1.grad):.6f}")
    print(f"dout/dw2 shape {w2.grad.shape}, norm {np.linalg.norm(w2.grad):.6f}")

    # spot-check one entry of w1's gradient numerically
    eps = 1e-6
    i, j = 1, 2
    saved = w1.data[i, j]

    def value():
        return ad.sum(ad.matmul(ad.relu(ad.matmul(x, w1)), w2)).item()

    w1.data[i, j] = saved + eps
    up = value()
    w1.data[i, j] = saved - eps
    down = value()
    w1.data[i, j] = saved
    numeric = (up - down) / (2 * eps)
    print(f"w1[{i},{j}]: analytic {w1.grad[i, j]:+.8f}  numeric {numeric:+.8f}")

    # gradients accumulate until cleared, which is what batching relies on
    w1.zero_grad()
    ad.backward(ad.sum(ad.matmul(x, w1)))
    after_one = w1.grad.copy()
    ad.backward(ad.sum(ad.matmul(x, w1)))
    print(f"two backward passes accumulate: {np.allclose(w1.grad, 2 * after_one)}")

    # no_grad turns the tape off for evaluation-only work
    with ad.no_grad():
        silent = ad.sum(ad.matmul(x, w1))
    print(f"inside no_grad the result carries no history: "
          f"requires_grad={silent.requires_grad}")


if __name__ == "__main__":
    main()
