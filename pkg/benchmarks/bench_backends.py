"""Throughput of the compiled core against the numpy fallback.

Runs batch feature extraction on synthetic images for a few network shapes
and checks that both backends return identical features.

    python benchmarks/bench_backends.py [--images 256] [--kernels 512] [--repeat 3]
"""

import argparse
import time

import numpy as np

from rdcnn import _backend, network
from rdcnn.network import NetworkConfig

CASES = [
    # name, (C, H, W), kernel_size, blocks
    ("mnist-like k=7 b=1", (1, 28, 28), 7, 1),
    ("cifar-like k=5 b=1", (3, 32, 32), 5, 1),
    ("cifar-like k=3 b=2", (3, 32, 32), 3, 2),
    ("stl10-like k=5 b=2", (3, 96, 96), 5, 2),
]


def time_extract(images, cfg, kern, repeat):
    best, values = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        values = network.extract_features(images, cfg, threads=1, backend=kern).values
        best = min(best, time.perf_counter() - t0)
    return best, values


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--images", type=int, default=256)
    ap.add_argument("--kernels", type=int, default=512)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    names = _backend.available()
    if "cython" not in names:
        print("compiled core not built; only the numpy fallback is available")
    rs = np.random.default_rng(0)
    print(f"{'case':<22}" + "".join(f"{n + ' feat/s':>18}" for n in names) + f"{'speedup':>10}")
    for label, shape, k, b in CASES:
        n = args.images if shape[1] <= 32 else max(1, args.images // 8)
        images = rs.integers(0, 256, (n,) + shape, dtype=np.uint8)
        cfg = NetworkConfig(kernel_size=k, blocks=b, num_kernels=args.kernels, input_channels=shape[0])
        rates, outputs = {}, {}
        for name in names:
            secs, outputs[name] = time_extract(images, cfg, _backend.load(name), args.repeat)
            rates[name] = n * args.kernels / secs
        if len(outputs) > 1:
            first, *rest = outputs.values()
            assert all(np.array_equal(first, r) for r in rest), f"backends disagree on {label}"
        speedup = rates["cython"] / rates["python"] if len(rates) > 1 else float("nan")
        print(f"{label:<22}" + "".join(f"{rates[n]:>18,.0f}" for n in names) + f"{speedup:>9.2f}x")


if __name__ == "__main__":
    main()
