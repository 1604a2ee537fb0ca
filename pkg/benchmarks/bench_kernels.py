"""Compare the compiled kernels with the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--width 608 --height 480 --frames 50 --repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sonarpipe import _kernels
from sonarpipe.background import BackgroundModel, BackgroundParams


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_gmm(name, frames, repeat):
    h, w = frames[0].shape

    def run():
        model = BackgroundModel(BackgroundParams.for_camera("DIDSON"), w, h, backend=name)
        for t, f in enumerate(frames):
            model.apply(f, t)

    return _best_of(run, repeat) / len(frames)


def bench_kernel(name, kernel, args, repeat, inner=10):
    fn = getattr(_kernels.get_backend(name), kernel)
    return _best_of(lambda: [fn(*args) for _ in range(inner)], repeat) / inner


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--width", type=int, default=608)
    ap.add_argument("--height", type=int, default=480)
    ap.add_argument("--frames", type=int, default=50, help="frames fed to the background model")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = ["python"] + (["compiled"] if _kernels.compiled is not None else [])
    if len(backends) == 1:
        print("compiled kernels are not built; timing the fallback only")

    rng = np.random.default_rng(args.seed)
    shape = (args.height, args.width)
    frames = [np.clip(rng.normal(40, 8, shape), 0, 255).astype(np.uint8) for _ in range(args.frames)]
    mask = (rng.random(shape) < 0.1).astype(np.uint8)
    raw = frames[0]

    rows = [("gmm_apply (per frame)", {b: bench_gmm(b, frames, args.repeat) for b in backends})]
    for kernel, kargs in (
        ("median3x3", (mask,)),
        ("open_cross3x3", (mask,)),
        ("connected_components", (mask, raw, 8)),
    ):
        rows.append((kernel, {b: bench_kernel(b, kernel, kargs, args.repeat) for b in backends}))

    print(f"frame {args.width}x{args.height}, best of {args.repeat}")
    header = f"{'kernel':<24}" + "".join(f"{b + ' ms':>14}" for b in backends)
    if "compiled" in backends:
        header += f"{'speed-up':>10}"
    print(header)
    for label, times in rows:
        line = f"{label:<24}" + "".join(f"{times[b] * 1e3:>14.3f}" for b in backends)
        if "compiled" in backends:
            line += f"{times['python'] / times['compiled']:>9.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
