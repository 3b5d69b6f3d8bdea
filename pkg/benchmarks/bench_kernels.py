"""Numba vs. numpy kernels: probe training and mean cosine.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends take identical SGD steps, so the script also reports how far
their final losses drift apart. JIT compilation is done before timing.
"""

import argparse
import time

import numpy as np

from layerlens import _jit
from layerlens.probing import kernels
from layerlens.probing.probe import epoch_order, init_params
from layerlens.synth import onehot_split


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def train_case(c, n, hidden, epochs, batch):
    ds = onehot_split(c, n, seed=0)
    order = epoch_order(n, epochs, seed=0)

    def run(backend):
        params = init_params(ds.dim, hidden, c, seed=0)
        return kernels.train_mlp(ds.features, ds.labels, params, 1e-2, order, batch, backend=backend)

    return run


def cosine_case(n, m, d):
    rng = np.random.default_rng(0)
    x, p = rng.standard_normal((n, d)), rng.standard_normal((m, d))
    return lambda backend: kernels.mean_cosine(x, p, backend=backend)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _jit.HAVE_NUMBA:
        raise SystemExit(f"numba is unavailable or disabled via {_jit.ENV_FLAG}; nothing to compare")

    cases = [
        ("train c=2 n=800 h=512 ep=10 b=16", train_case(2, 800, 512, 10, 16)),
        ("train c=8 n=800 h=512 ep=10 b=64", train_case(8, 800, 512, 10, 64)),
        ("train c=4 n=800 d=4 h=64 ep=30 b=16", train_case(4, 800, 64, 30, 16)),
        ("cosine 2000x16 vs 80", cosine_case(2000, 80, 16)),
        ("cosine 200x4096 vs 80", cosine_case(200, 80, 4096)),
    ]
    print(f"{'case':<38s} {'numba (s)':>10s} {'numpy (s)':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, fn in cases:
        fn("numba")  # compile
        t_nb, out_nb = best_of(lambda: fn("numba"), args.repeat)
        t_np, out_np = best_of(lambda: fn("numpy"), args.repeat)
        diff = float(np.nanmax(np.abs(np.asarray(out_nb) - np.asarray(out_np))))
        print(f"{name:<38s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:7.2f}x {diff:11.2e}")


if __name__ == "__main__":
    main()
