#!/usr/bin/env python3
"""Benchmark the compiled string-distance kernels against the pure-Python
fallback.

Times scalar calls, the *_many batch entry points and the full distance
matrix on synthetic address-like strings, and prints one table with the
speedup per operation. Run with ``python3 benchmarks/bench_kernels.py``.
"""
import argparse
import json
import random
import string
import time

from addrmatch._kernels import _pure

try:
    from addrmatch._kernels import _speedups
except ImportError:
    _speedups = None


def make_strings(n: int, seed: int) -> list[str]:
    rnd = random.Random(seed)
    words = ["rua", "avenida", "travessa", "flores", "liberdade", "carmo",
             "lisboa", "porto", "braga", "1000", "4715", "001"]
    out = []
    for _ in range(n):
        toks = rnd.choices(words, k=rnd.randint(3, 7))
        s = " ".join(toks)
        # sprinkle in typos so the strings are not all identical
        if rnd.random() < 0.5 and s:
            i = rnd.randrange(len(s))
            s = s[:i] + rnd.choice(string.ascii_lowercase) + s[i + 1:]
        out.append(s)
    return out


def best_of(fn, reps: int) -> float:
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=400,
                    help="strings per side (matrix is n*n pairs)")
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", action="store_true",
                    help="emit machine-readable JSON instead of a table")
    args = ap.parse_args()

    xs = make_strings(args.n, args.seed)
    ys = make_strings(args.n, args.seed + 1)
    pair_list = list(zip(xs, ys))

    ops = {
        "levenshtein scalar x%d" % args.n:
            lambda mod: [mod.levenshtein(a, b) for a, b in pair_list],
        "levenshtein_many":
            lambda mod: mod.levenshtein_many(xs, ys),
        "levenshtein2_many":
            lambda mod: mod.levenshtein2_many(xs, ys),
        "distance_matrix %dx%d" % (args.n, args.n):
            lambda mod: mod.distance_matrix(xs, ys, 2),
    }

    rows = []
    for name, op in ops.items():
        pure_t = best_of(lambda: op(_pure), args.reps)
        row = {"operation": name, "pure_s": pure_t}
        if _speedups is not None:
            # sanity: identical results before timing
            import numpy as np

            assert np.array_equal(np.asarray(op(_pure)),
                                  np.asarray(op(_speedups)))
            fast_t = best_of(lambda: op(_speedups), args.reps)
            row["compiled_s"] = fast_t
            row["speedup"] = pure_t / fast_t
        rows.append(row)

    if args.json:
        print(json.dumps({"n": args.n, "rows": rows}, indent=2))
        return

    if _speedups is None:
        print("compiled extension not available; timing pure backend only\n")
    header = f"{'operation':<34}{'pure (s)':>12}{'compiled (s)':>14}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for row in rows:
        if "compiled_s" in row:
            print(f"{row['operation']:<34}{row['pure_s']:>12.4f}"
                  f"{row['compiled_s']:>14.4f}{row['speedup']:>9.1f}x")
        else:
            print(f"{row['operation']:<34}{row['pure_s']:>12.4f}{'-':>14}{'-':>10}")


if __name__ == "__main__":
    main()
