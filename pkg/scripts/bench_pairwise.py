#!/usr/bin/env python3
"""Measure the pairwise-distance kernel: wall time and worker scaling.

Generates a synthetic vocabulary with planted near-variants (apostrophes,
vowel insertions, letter swaps) so the prescreen has realistic survivors,
then times pairwise_distances across worker counts.
"""

import argparse
import random
import time

from phone2word.scoring import pairwise_distances


def synthetic_words(count, seed=1010):
    rng = random.Random(seed)
    letters = "abcdefghijklmnopqrst"
    vowels = "aeiou"
    words = set()
    while len(words) < count:
        base = "".join(rng.choice(letters) for _ in range(rng.randrange(7, 12)))
        words.add(base)
        for _ in range(4):
            kind = rng.randrange(3)
            pos = rng.randrange(1, len(base))
            if kind == 0:
                words.add(base[:pos] + "’" + base[pos:])
            elif kind == 1:
                words.add(base[:pos] + rng.choice(vowels) + base[pos:])
            else:
                words.add(base[:pos] + rng.choice(letters) + base[pos + 1:])
    return set(sorted(words)[:count])


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--words", type=int, default=5000)
    parser.add_argument("--workers", default="1,2,4,8",
                        help="comma-separated worker counts")
    parser.add_argument("--cutoff", type=float, default=1.5)
    parser.add_argument("--repeats", type=int, default=1)
    args = parser.parse_args()

    words = synthetic_words(args.words)
    n = len(words)
    print(f"{n} words, {n * (n - 1) // 2} candidate pairs, cutoff {args.cutoff}")
    baseline = None
    for workers in (int(w) for w in args.workers.split(",")):
        best = min(
            _timed(words, args.cutoff, workers) for _ in range(args.repeats))
        t, stored = best
        if baseline is None:
            baseline = t
        print(f"workers={workers}: {t:6.2f}s  stored pairs={stored}  "
              f"speedup={baseline / t:.2f}x")


def _timed(words, cutoff, workers):
    t0 = time.monotonic()
    na = pairwise_distances(words, cutoff=cutoff, workers=workers)
    t = time.monotonic() - t0
    return t, sum(len(v) for v in na.arrays.values()) // 2


if __name__ == "__main__":
    main()
