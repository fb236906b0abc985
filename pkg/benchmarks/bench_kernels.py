"""Time the compiled kernel extension against the pure-numpy reference.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --rows 4096 --dim 256 --repeats 30
"""

import argparse
import sys
import time

import numpy as np

from ctrlvid.kernels import (
    BACKEND,
    _ref,
    gelu_bwd,
    gelu_fwd,
    layer_norm_bwd,
    layer_norm_fwd,
    softmax_bwd,
    softmax_fwd,
)


def _time(fn, args, repeats: int) -> float:
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(rows: int, dim: int, seed: int):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((rows, dim))
    gout = rng.standard_normal((rows, dim))
    y = softmax_fwd(x)
    xhat, inv = layer_norm_fwd(x, 1e-5)
    return [
        ("softmax_fwd", softmax_fwd, _ref.softmax_fwd, (x,)),
        ("softmax_bwd", softmax_bwd, _ref.softmax_bwd, (y, gout)),
        ("layer_norm_fwd", layer_norm_fwd, _ref.layer_norm_fwd, (x, 1e-5)),
        ("layer_norm_bwd", layer_norm_bwd, _ref.layer_norm_bwd, (xhat, inv, gout)),
        ("gelu_fwd", gelu_fwd, _ref.gelu_fwd, (x,)),
        ("gelu_bwd", gelu_bwd, _ref.gelu_bwd, (x, gout)),
    ]


def _max_err(a, b) -> float:
    flat_a = a if isinstance(a, tuple) else (a,)
    flat_b = b if isinstance(b, tuple) else (b,)
    return max(float(np.abs(u - v).max()) for u, v in zip(flat_a, flat_b))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=2048)
    parser.add_argument("--dim", type=int, default=128)
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if BACKEND != "compiled":
        print("compiled extension not built; only the pure-numpy backend is available")
        print("build it with: pip install -e . --no-build-isolation")

    print(f"backend={BACKEND}  rows={args.rows}  dim={args.dim}  repeats={args.repeats}")
    header = f"{'kernel':<16} {'compiled':>10} {'numpy':>10} {'speedup':>8} {'max_err':>10}"
    print(header)
    print("-" * len(header))
    for name, fast, ref, call_args in _cases(args.rows, args.dim, args.seed):
        err = _max_err(fast(*call_args), ref(*call_args))
        t_fast = _time(fast, call_args, args.repeats)
        t_ref = _time(ref, call_args, args.repeats)
        ratio = t_ref / t_fast if t_fast > 0 else float("inf")
        print(f"{name:<16} {t_fast * 1e3:>8.3f}ms {t_ref * 1e3:>8.3f}ms {ratio:>7.2f}x {err:>10.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
