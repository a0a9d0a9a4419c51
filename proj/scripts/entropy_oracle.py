#!/usr/bin/env python3
"""Independent brute-force entropy oracle.

Recomputes Shannon entropy (bits/byte, 256-bin histogram) for the byte
streams used as frozen expectations in the C++ tests. The PRNG here is a
from-scratch splitmix64, kept in lockstep with include/peel/prng.hpp.
"""
import math
import sys

MASK = (1 << 64) - 1


def splitmix64_stream(seed):
    state = seed & MASK
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        z = z ^ (z >> 31)
        yield z


def prng_bytes(seed, n):
    out = bytearray()
    gen = splitmix64_stream(seed)
    while len(out) < n:
        out += next(gen).to_bytes(8, "little")
    return bytes(out[:n])


def shannon_entropy(data):
    hist = [0] * 256
    for b in data:
        hist[b] += 1
    n = len(data)
    h = 0.0
    for c in hist:
        if c:
            p = c / n
            h -= p * math.log2(p)
    return h


def main():
    data = prng_bytes(42, 4096)
    h = shannon_entropy(data)
    print(f"splitmix64 seed=42 n=4096 entropy={h:.15f}")
    print(f"first8={data[:8].hex()}")

    # sanity: degenerate distributions
    assert shannon_entropy(bytes(4096)) == 0.0
    assert abs(shannon_entropy(bytes(range(256))) - 8.0) < 1e-12
    print("degenerate checks ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
