"""Compare the numba and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best-of-N wall time of each backend
and the speed-up. The first numba call (compilation) is excluded.
"""

import argparse
import itertools
import timeit

import numpy as np

from memcodec import _kernels
from memcodec.info import all_bit_vectors


def cases(rng):
    # oracle reduction: every map of 7 events onto 7 memories, in one block
    events = all_bit_vectors(3)[:7]
    probs = rng.random(7)
    probs /= probs.sum()
    maps = np.array(list(itertools.product(range(7), repeat=7))[: 1 << 16])
    yield "evaluate_encodings (65536 maps)", "evaluate_encodings", (maps, events, probs, 7, 0.1, 0.2)

    values = rng.integers(0, 2, size=(4096, 12)).astype(np.uint8)
    yield "sq_distances (4096 x 12)", "sq_distances", (values, values[0].copy())

    fvalues = values.astype(np.float64)
    weights = rng.integers(1, 50, size=4096).astype(np.float64)
    yield "gaussian_density (4096 x 12)", "gaussian_density", (fvalues, weights, rng.random(12), 5.0)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _kernels.numba_backend is None:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<34}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}")
    for label, name, call_args in cases(rng):
        fast = getattr(_kernels.numba_backend, name)
        slow = getattr(_kernels.numpy_backend, name)
        fast(*call_args)  # compile
        a, b = slow(*call_args), fast(*call_args)
        np.testing.assert_allclose(np.asarray(a[0] if isinstance(a, tuple) else a),
                                   np.asarray(b[0] if isinstance(b, tuple) else b), rtol=1e-10, atol=1e-12)
        t_np = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat))
        print(f"{label:<34}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
