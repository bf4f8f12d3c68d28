"""Numba vs numpy timings for the hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--frames 400]

Each kernel runs once first so numba compilation is excluded, then the best
of ``--repeat`` runs is reported.  Sizes mirror a 4 s utterance: 400 frames,
5 CTC symbols, a target of 12 language runs, 32 hidden units.
"""

import argparse
import timeit

import numpy as np

from cslid import kernels
from cslid.ctc import extend_with_blanks
from cslid.kernels import numpy_impl


def cases(frames, rng):
    logits = rng.normal(size=(frames, 5))
    lp = logits - np.logaddexp.reduce(logits, axis=1, keepdims=True)
    ext = extend_with_blanks(rng.integers(2, 5, size=12))
    z = rng.normal(size=(frames, 32))
    return {
        "ctc_alpha": lambda m: m.ctc_alpha(lp, ext, 0),
        "ctc_beta": lambda m: m.ctc_beta(lp, ext, 0),
        "ctc_viterbi": lambda m: m.ctc_viterbi(lp, ext, 0),
        "ema_scan": lambda m: m.ema_scan(z, 0.9, False),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--frames", type=int, default=400)
    args = ap.parse_args()

    backends = {"numpy": numpy_impl}
    if kernels.numba_impl is not None:
        backends["numba"] = kernels.numba_impl
    else:
        print("numba backend unavailable; timing numpy only")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<12} " + " ".join(f"{name:>12}" for name in backends) + "   speedup")
    for name, fn in cases(args.frames, rng).items():
        times = {}
        for label, module in backends.items():
            fn(module)  # warm-up / JIT
            times[label] = min(timeit.repeat(lambda: fn(module), number=1, repeat=args.repeat))
        speedup = times["numpy"] / times["numba"] if "numba" in times else float("nan")
        cells = " ".join(f"{1e3 * t:>10.3f}ms" for t in times.values())
        print(f"{name:<12} {cells}   {speedup:6.1f}x")


if __name__ == "__main__":
    main()
