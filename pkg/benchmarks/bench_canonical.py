"""Benchmark: compiled canonicalization kernel vs pure-Python fallback.

Run:  python3 benchmarks/bench_canonical.py
"""

from __future__ import annotations

import random
import time

from becov import _canon_py

try:
    from becov import _canon
except ImportError:
    _canon = None


def build_payloads(n: int, seed: int = 11) -> list:
    rng = random.Random(seed)
    payloads = []
    for i in range(n):
        payloads.append(
            {
                "response": {
                    "kind": "return",
                    "value": rng.choice(
                        [i, i * 0.5, f"value-{i}", None,
                         [1, 2.5, "x"], {"b": i, "a": [i, None]}]
                    ),
                },
                "stimulus": [rng.randint(0, 999), f"arg-{i}", {"k": rng.random()}],
            }
        )
    return payloads


def bench(fn, payloads: list, repeat: int = 5) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        for p in payloads:
            fn(p)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    payloads = build_payloads(20_000)
    pure = bench(_canon_py.canonical_json, payloads)
    print(f"pure-python : {pure * 1e3:8.1f} ms  "
          f"({len(payloads) / pure:,.0f} payloads/s)")
    if _canon is None:
        print("compiled    : not built (pip install -e . --no-build-isolation)")
        return
    compiled = bench(_canon.canonical_json, payloads)
    print(f"compiled    : {compiled * 1e3:8.1f} ms  "
          f"({len(payloads) / compiled:,.0f} payloads/s)")
    print(f"speedup     : {pure / compiled:8.2f}x")
    sample = payloads[0]
    assert _canon.canonical_json(sample) == _canon_py.canonical_json(sample)


if __name__ == "__main__":
    main()
