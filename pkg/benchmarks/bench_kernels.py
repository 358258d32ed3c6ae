"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py [--size 48] [--repeat 3]
"""

import argparse
import time

import numpy as np

from fusemetrics.morphology import available_backends, connected_components, squared_distance_transform
from fusemetrics.volume import BinaryMask, ImageGeometry


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=48, help="cube edge in voxels")
    ap.add_argument("--density", type=float, default=0.3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    shape = (args.size,) * 3
    arr = rng.random(shape) < args.density
    mask = BinaryMask(ImageGeometry(shape, (1.0, 1.0, 2.5)), arr)
    sparse = rng.random(shape) < 0.01

    cases = {
        "components 26": lambda b: connected_components(mask, 26, backend=b),
        "components 6": lambda b: connected_components(mask, 6, backend=b),
        "squared EDT": lambda b: squared_distance_transform(sparse, (1.0, 1.0, 2.5), backend=b),
    }
    backends = available_backends()
    print(f"grid {shape}, backends: {', '.join(backends)}")
    print(f"{'kernel':16}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases.items():
        t = {b: best_of(lambda: fn(b), args.repeat) for b in backends}
        line = f"{name:16}" + "".join(f"{t[b]:11.4f}s" for b in backends)
        if len(backends) > 1:
            line += f"{t['python'] / t['cython']:11.1f}x"
        print(line)

    if len(backends) > 1:
        a = connected_components(mask, 26, backend="cython").labels
        b = connected_components(mask, 26, backend="python").labels
        assert np.array_equal(a, b), "backends disagree"


if __name__ == "__main__":
    main()
