#!/usr/bin/env python3
"""Window-entropy margin audit for the synthetic corpus generators.

The region classifier buckets 256-byte windows by entropy (code >= 4.0,
packed payload >= 7.0). This script regenerates the corpus window
generators independently and reports worst-case entropies over many
seeds, to confirm each generator stays inside its intended bucket, and
that the rolling-key transforms push any window above the payload floor.
"""
import math
import sys

MASK = (1 << 64) - 1

CODE_ALPHABET = [
    0x55, 0x8B, 0xEC, 0x83, 0xC4, 0x90, 0xE8, 0xFF, 0x75, 0x74, 0xC3, 0x6A,
    0x68, 0x8D, 0x45, 0xF4, 0x50, 0x51, 0x52, 0x53, 0x56, 0x57, 0x5D, 0x5E,
    0x5F, 0x5B, 0x59, 0x58, 0x85, 0xC0, 0x33, 0x3B, 0x39, 0x0F, 0x84, 0xEB,
    0x7E, 0x7C, 0x01, 0x03, 0x2B, 0x8A, 0x88, 0x89, 0xA1, 0x04, 0x24, 0x81,
]
# period 5 on purpose: coprime with the rolling key's low-bit cycle, so
# transformed data windows cannot collapse into a few residue classes
DATA_PATTERN = [0x80, 0x07, 0xFE, 0x81, 0x3C]
TEXT_PATTERN = b"The quick brown fox jumps over the lazy dog. 0123456789 "


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


def code_window(seed, n=256):
    gen = splitmix64_stream(seed)
    return bytes(CODE_ALPHABET[next(gen) % len(CODE_ALPHABET)] for _ in range(n))


def data_window(n=256):
    return bytes(DATA_PATTERN[i % len(DATA_PATTERN)] for i in range(n))


def text_window(n=256):
    rep = (TEXT_PATTERN * (n // len(TEXT_PATTERN) + 1))[:n]
    return bytes(rep)


def entropy(data):
    hist = [0] * 256
    for b in data:
        hist[b] += 1
    h = 0.0
    for c in hist:
        if c:
            p = c / len(data)
            h -= p * math.log2(p)
    return h


def rolling_key(seed):
    k = seed % 256
    while True:
        yield k
        k = (5 * k + 1) % 256


def xform(family, data, seed):
    out = bytearray()
    keys = rolling_key(seed)
    for b in data:
        k = next(keys)
        if family == 1:
            v = b ^ k
        elif family == 2:
            v = (b + k) % 256
        else:
            v = b ^ k
            v = ((v << 4) | (v >> 4)) & 0xFF
        out.append(v)
    return bytes(out)


def printable_fraction(data):
    ok = sum(1 for b in data if 0x20 <= b <= 0x7E or b in (0x09, 0x0A, 0x0D))
    return ok / len(data)


def main():
    trials = 4000
    code_h = [entropy(code_window(s)) for s in range(trials)]
    prng_h = [entropy(prng_bytes(s, 256)) for s in range(trials)]
    print(f"code windows: min={min(code_h):.4f} max={max(code_h):.4f}  (need [4.0, 7.0))")
    print(f"prng windows: min={min(prng_h):.4f} max={max(prng_h):.4f}  (need >= 7.0)")
    print(f"data window:  H={entropy(data_window()):.4f}  (need < 4.0)")
    tw = text_window()
    print(f"text window:  printable={printable_fraction(tw):.3f}  (need >= 0.85)")
    cw = code_window(0)
    print(f"code window printable fraction: {printable_fraction(cw):.3f} (need < 0.85)")

    # Transformed windows should mostly clear the 7.0 payload floor for
    # every (family, layers) combination the corpus generator may emit.
    # The XOR-based families (1 and 3) are restricted to odd layer counts:
    # two XOR passes with a restarted key stream cancel outright, and two
    # nibble-swapped XOR passes collapse constant windows to 16 values.
    # A small leak rate is inherent (a 256-byte uniform window has
    # entropy 7.17 +/- 0.07); what matters downstream is that leaked
    # windows stay rare and the whole-section entropy stays above 7.4.
    total = leaked = 0
    worst = 8.0
    worst_section = 8.0
    for fam, layer_choices in ((1, (1, 3)), (2, (1, 2, 3)), (3, (1, 3))):
        for layers in layer_choices:
            for s in range(120):
                section = (bytes(256) + code_window(s) + data_window() +
                           text_window() + prng_bytes(s + 9000, 256)) * 4
                cur = section
                for _ in range(layers):
                    cur = xform(fam, cur, s * 7 + fam)
                worst_section = min(worst_section, entropy(cur))
                for w in range(len(cur) // 256):
                    h = entropy(cur[w * 256:(w + 1) * 256])
                    worst = min(worst, h)
                    total += 1
                    leaked += h < 7.0
    print(f"transformed windows: min={worst:.4f} leak_rate={leaked/total:.4f} "
          f"(leak must stay << code threshold)")
    print(f"transformed section entropy: min={worst_section:.4f}  (need > 7.4)")
    assert leaked / total < 0.05
    assert worst_section > 7.4

    # frozen expectation for the classify_regions fixture:
    # 2 code windows (seeds 1,2) + 2 prng windows (seeds 3,4)
    fixture = code_window(1) + code_window(2) + prng_bytes(3, 256) + prng_bytes(4, 256)
    per = [entropy(fixture[i * 256:(i + 1) * 256]) for i in range(4)]
    print("classify fixture window entropies: " + " ".join(f"{h:.4f}" for h in per))
    return 0


if __name__ == "__main__":
    sys.exit(main())
