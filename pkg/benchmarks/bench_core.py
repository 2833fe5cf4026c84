"""Time the compiled kernels against the numpy fallback on the same inputs.

    python benchmarks/bench_core.py [--repeat 3] [--R 48]

Each kernel is run once per backend to warm caches, then timed `repeat`
times; the best wall time is reported. Outputs are compared so a speedup
from a wrong answer does not go unnoticed.
"""

import argparse
import time

import numpy as np

from heisembed import frames, kernels
from heisembed.fields import GridSpec
from heisembed.mollify import _line_bounds, _samples


def word_ball_case(R):
    return (R, R * R // 4 + 1)


def line_weights_case():
    spec = GridSpec.box(1 / 16, 0.5, 1 / 8)
    lo, hi, _ = _line_bounds(spec, "X")
    tau, w = _samples(2.5, 16)
    return (np.ascontiguousarray(lo, dtype=np.int64), np.ascontiguousarray(hi, dtype=np.int64), tau, w, -6, 13, True)


def frame_case(seed=0):
    spec = GridSpec((0, 0, 0), 0.05, (21, 21, 41))
    order, parent = frames.bfs_tree(spec.shape)
    rng = np.random.default_rng(seed)
    F = np.linalg.qr(rng.normal(size=(spec.size, 12, 3)))[0].transpose(0, 2, 1).copy()
    return (order, parent, F, frames.null_seed(F[order[0]]), 0.0)


def best_time(fn, args, repeat):
    out = fn(*args)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return a.shape == b.shape and np.allclose(a, b, atol=1e-12)
    return a == b


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--R", type=int, default=48, help="word-ball radius")
    args = ap.parse_args()
    if "cython" not in kernels.available():
        raise SystemExit("compiled extension not built; run `pip install --no-build-isolation -e .` first")

    cases = {
        "bfs_word_ball": word_ball_case(args.R),
        "line_weights": line_weights_case(),
        "propagate_frame": frame_case(),
    }
    start = kernels.BACKEND
    print(f"{'kernel':<16} {'cython s':>10} {'python s':>10} {'speedup':>8}  agree")
    try:
        for name, case in cases.items():
            res = {}
            for backend in ("cython", "python"):
                kernels.use_backend(backend)
                res[backend] = best_time(getattr(kernels, name), case, args.repeat)
            (tc, oc), (tp, op) = res["cython"], res["python"]
            print(f"{name:<16} {tc:>10.4f} {tp:>10.4f} {tp / tc:>7.1f}x  {same(oc, op)}")
    finally:
        kernels.use_backend(start)


if __name__ == "__main__":
    main()
