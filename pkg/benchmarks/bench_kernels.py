"""Benchmark the compiled conv kernels against the numpy fallback.

Times conv2d forward and backward at the three shapes the patch encoder
actually runs, plus one full encoder forward/backward, for both
backends. Run from the repository root after installing:

    python benchmarks/bench_kernels.py [--repeat 30]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from aide.nn import _fallback

try:
    from aide.nn import _native
except ImportError:
    _native = None

# (label, C_in, C_out, side): the encoder's conv shapes at patch_resize=64
CONV_CASES = [
    ("conv 3->16 @64", 3, 16, 64),
    ("conv 16->32 @32", 16, 32, 32),
    ("conv 32->64 @16", 32, 64, 16),
]


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def bench_backend(impl, repeat):
    rng = np.random.default_rng(7)
    rows = []
    for label, c_in, c_out, side in CONV_CASES:
        x = rng.normal(size=(c_in, side, side))
        w = rng.normal(size=(c_out, c_in, 3, 3))
        b = rng.normal(size=c_out)
        y = impl.conv2d_forward(x, w, b, 1, 1)
        dy = rng.normal(size=y.shape)
        fwd = time_call(lambda: impl.conv2d_forward(x, w, b, 1, 1), repeat)
        bwd = time_call(lambda: impl.conv2d_backward(x, w, dy, 1, 1), repeat)
        rows.append((label, fwd, bwd))
    return rows


def bench_model(repeat):
    """One full-image training step (forward + backward), per backend."""
    import importlib

    import aide.nn.kernels as kernels

    results = {}
    for backend, impl in (("native", _native), ("fallback", _fallback)):
        if impl is None:
            continue
        kernels._impl = impl  # swap the dispatch target directly
        from aide.config import AideConfig
        from aide.imageio import RgbImage
        from aide.network import AideModel
        from aide.nn import bce_with_logits

        model = AideModel(AideConfig())
        rng = np.random.default_rng(11)
        image = RgbImage(rng.integers(0, 256, size=(128, 128, 3), dtype=np.uint8))

        def step():
            model.zero_grad()
            result, ctx = model.forward_train(image)
            _, dlogit = bce_with_logits(result.logit, 1.0)
            model.backward(ctx, dlogit)

        results[backend] = time_call(step, max(3, repeat // 10))
    importlib.reload(kernels)
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=30)
    args = parser.parse_args()

    backends = [("fallback", _fallback)]
    if _native is not None:
        backends.insert(0, ("native", _native))
    else:
        print("compiled extension not available; timing fallback only\n")

    results = {name: bench_backend(impl, args.repeat) for name, impl in backends}
    header = f"{'case':<18}"
    for name, _ in backends:
        header += f"  {name + ' fwd':>14}  {name + ' bwd':>14}"
    print(header)
    for i, (label, *_rest) in enumerate(results[backends[0][0]]):
        line = f"{label:<18}"
        for name, _ in backends:
            _, fwd, bwd = results[name][i]
            line += f"  {fwd * 1e3:>11.3f} ms  {bwd * 1e3:>11.3f} ms"
        print(line)

    if _native is not None:
        fall = results["fallback"]
        nat = results["native"]
        speedups = [
            (f[1] + f[2]) / (n[1] + n[2]) for f, n in zip(fall, nat)
        ]
        print(f"\nconv speedup native vs fallback: "
              + ", ".join(f"{s:.2f}x" for s in speedups))

    print("\nfull training step (one 128x128 image):")
    for backend, seconds in bench_model(args.repeat).items():
        print(f"  {backend:<9} {seconds * 1e3:8.1f} ms")


if __name__ == "__main__":
    main()
