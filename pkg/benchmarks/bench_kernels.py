"""Time the numba and pure-numpy builds of the encoder kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Kernels are called directly, so both builds are timed in one process (numba
must be installed).  ``--end-to-end`` additionally times one training epoch of a
small LSTM in two child processes, one with ``REVHIJACK_NUMBA=0``.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from revhijack.model import _kernels as K

CHILD = """
import time
from revhijack.model import BACKEND
from revhijack.model.twin import TwinConfig, train
from revhijack.synthgen import DatasetSplit, LabeledPair
from revhijack.corpus import ProductText, ReviewText
import numpy as np
rng = np.random.default_rng(0)
words = [f"w{i}" for i in range(400)]
def text(n): return " ".join(rng.choice(words, n))
pairs = [LabeledPair(ProductText(f"p{i}", text(40)), ReviewText(f"r{i}", f"p{i}", text(30)), i % 2, "x", f"p{i}", f"p{i}")
         for i in range(400)]
split = DatasetSplit(pairs, pairs[:50], [], 0)
cfg = TwinConfig(encoder="lstm", embedding_dim=32, hidden_sizes=(32, 32), epochs=1, learning_rate=1e-3)
train(DatasetSplit(pairs[:8], [], [], 0), cfg)  # warm-up / compile
t0 = time.perf_counter()
train(split, cfg)
print(f"{BACKEND:>6}: lstm epoch {time.perf_counter() - t0:.2f}s")
"""


def _time(fn, repeat: int) -> float:
    fn()  # compile / warm caches
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench(repeat: int) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(0)
    emb = rng.normal(size=(20_000, 300))
    lens = rng.integers(20, 200, size=512)
    offsets = np.r_[0, np.cumsum(lens)].astype(np.int64)
    ids = rng.integers(0, 20_000, size=offsets[-1]).astype(np.int64)
    d_out = rng.normal(size=(512, 300))
    x = rng.normal(size=(256, 64))
    wx, wh, b = rng.normal(size=(64, 256)) * 0.1, rng.normal(size=(64, 256)) * 0.1, np.zeros(256)
    fwd = K.lstm_forward_numpy(x, wx, wh, b)
    d_h = rng.normal(size=(256, 64))

    cases = [
        ("pool_mean 512x~110x300", lambda: K.pool_mean_numpy(ids, offsets, emb),
         lambda: K._pool_mean_nb(ids, offsets, emb)),
        ("pool_mean_backward", lambda: K.pool_mean_backward_numpy(ids, offsets, d_out, np.zeros_like(emb)),
         lambda: K._pool_mean_backward_nb(ids, offsets, d_out, np.zeros_like(emb))),
        ("lstm_forward 256 steps h=64", lambda: K.lstm_forward_numpy(x, wx, wh, b),
         lambda: K._lstm_forward_nb(x, wx, wh, b)),
        ("lstm_backward", lambda: K.lstm_backward_numpy(x, wx, wh, *fwd, d_h),
         lambda: K._lstm_backward_nb(x, wx, wh, *fwd, d_h)),
    ]
    return [(name, _time(np_fn, repeat), _time(nb_fn, repeat)) for name, np_fn, nb_fn in cases]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args()
    if not K.USE_NUMBA:
        sys.exit("numba is not active (not installed or REVHIJACK_NUMBA=0); nothing to compare")
    print(f"{'kernel':<30}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, t_np, t_nb in bench(args.repeat):
        print(f"{name:<30}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x")
    if args.end_to_end:
        sys.stdout.flush()
        for flag in ("1", "0"):
            env = {**os.environ, "REVHIJACK_NUMBA": flag}
            subprocess.run([sys.executable, "-c", CHILD], env=env, check=True)


if __name__ == "__main__":
    main()
